#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ndgpu/soft/shader.hpp"

namespace ndgpu::soft::wgsl {

struct Loc {
    int line = 1;
    int col = 1;
};

// Thrown inside the front end; converted into a Diagnostic by compile_wgsl.
struct SyntaxError {
    Loc loc;
    std::string message;
};

enum class Tok : std::uint8_t { Ident, Int, Float, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    Loc loc;
    std::uint64_t int_value = 0;
    double float_value = 0.0;
    char suffix = 0;  // 'i', 'u', 'f' or 0
};

std::vector<Token> tokenize(std::string_view source);

struct Expr;
struct Stmt;
using ExprP = std::unique_ptr<Expr>;
using StmtP = std::unique_ptr<Stmt>;

// A type as written: name plus template parameters; array<T, N> keeps N as an expression.
struct TypeRef {
    Loc loc;
    std::string name;
    std::vector<TypeRef> params;
    ExprP count;

    TypeRef() = default;
    TypeRef(TypeRef&&) = default;
    TypeRef& operator=(TypeRef&&) = default;
    ~TypeRef();
};

struct Expr {
    enum class Kind { IntLit, FloatLit, BoolLit, Ident, Unary, Binary, Call, Index, Member, AddressOf };
    Kind kind = Kind::Ident;
    Loc loc;
    std::string text;  // identifier, member name, operator, or callee
    std::uint64_t int_value = 0;
    double float_value = 0.0;
    char suffix = 0;
    bool bool_value = false;
    std::unique_ptr<TypeRef> callee_type;  // for calls spelled with template parameters
    std::vector<ExprP> args;
};

struct Stmt {
    enum class Kind {
        Block, Var, Let, Const, Assign, Increment, Decrement, If, For, While, Loop,
        Break, BreakIf, Continue, Return, Call, Phony, Empty
    };
    Kind kind = Kind::Empty;
    Loc loc;
    std::string name;
    std::string op;
    std::unique_ptr<TypeRef> type;
    ExprP init;  // declaration initializer, assignment rhs, call expression, return value
    ExprP lhs;
    ExprP cond;
    std::vector<StmtP> body;       // block / then / loop body
    StmtP else_branch;             // Block or If
    StmtP for_init;
    StmtP for_update;
    std::vector<StmtP> continuing;
    ExprP break_if;
};

struct Attribute {
    Loc loc;
    std::string name;
    std::vector<ExprP> args;
};

struct StructMember {
    Loc loc;
    std::string name;
    TypeRef type;
};

struct StructDecl {
    Loc loc;
    std::string name;
    std::vector<StructMember> members;
};

struct GlobalDecl {
    enum class Kind { Var, Const, Override };
    Kind kind = Kind::Var;
    Loc loc;
    std::vector<Attribute> attrs;
    std::string space;
    std::string access;
    std::string name;
    std::unique_ptr<TypeRef> type;
    ExprP init;
};

struct Param {
    Loc loc;
    std::vector<Attribute> attrs;
    std::string name;
    TypeRef type;
};

struct FnDecl {
    Loc loc;
    std::vector<Attribute> attrs;
    std::string name;
    std::vector<Param> params;
    std::unique_ptr<TypeRef> return_type;
    std::vector<StmtP> body;
};

struct ModuleAst {
    std::vector<StructDecl> structs;
    std::vector<GlobalDecl> globals;
    std::vector<FnDecl> functions;
};

ModuleAst parse(std::string_view source);

bool is_reserved_word(std::string_view word);

}  // namespace ndgpu::soft::wgsl
