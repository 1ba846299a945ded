#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <unordered_set>

#include "wgsl_ast.hpp"

namespace ndgpu::soft::wgsl {

TypeRef::~TypeRef() = default;

namespace {

[[noreturn]] void fail(Loc loc, std::string message) { throw SyntaxError{loc, std::move(message)}; }

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

constexpr std::array<std::string_view, 3> kPunct3 = {"<<=", ">>=", "..."};
constexpr std::array<std::string_view, 19> kPunct2 = {"->", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "+=",
                                                      "-=", "*=", "/=", "%=", "&=", "|=", "^=", "++", "--"};
constexpr std::string_view kPunct1 = "(){}[]<>,;:.=+-*/%&|^!~@";

}  // namespace

std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    int line = 1, col = 1;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
            const Loc start{line, col};
            int depth = 0;
            do {
                if (i + 1 < src.size() && src[i] == '/' && src[i + 1] == '*') {
                    ++depth;
                    advance(2);
                } else if (i + 1 < src.size() && src[i] == '*' && src[i + 1] == '/') {
                    --depth;
                    advance(2);
                } else if (i >= src.size()) {
                    fail(start, "unterminated block comment");
                } else {
                    advance(1);
                }
            } while (depth > 0);
            continue;
        }

        Token tok;
        tok.loc = {line, col};
        if (ident_start(c)) {
            std::size_t j = i;
            while (j < src.size() && ident_char(src[j])) ++j;
            tok.kind = Tok::Ident;
            tok.text = std::string(src.substr(i, j - i));
            advance(j - i);
            out.push_back(std::move(tok));
            continue;
        }
        const bool leading_dot_number = c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1]));
        if (std::isdigit(static_cast<unsigned char>(c)) || leading_dot_number) {
            std::size_t j = i;
            if (c == '0' && j + 1 < src.size() && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
                j += 2;
                const std::size_t digits = j;
                while (j < src.size() && std::isxdigit(static_cast<unsigned char>(src[j]))) ++j;
                if (j == digits) fail(tok.loc, "malformed hexadecimal literal");
                tok.kind = Tok::Int;
                tok.int_value = std::strtoull(std::string(src.substr(digits, j - digits)).c_str(), nullptr, 16);
            } else {
                bool is_float = false;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                if (j < src.size() && src[j] == '.' && !(j + 1 < src.size() && src[j + 1] == '.')) {
                    is_float = true;
                    ++j;
                    while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                }
                if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                    std::size_t k = j + 1;
                    if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                    if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                        is_float = true;
                        j = k;
                        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
                    }
                }
                const std::string body(src.substr(i, j - i));
                if (j < src.size() && src[j] == 'f') {
                    is_float = true;
                    tok.suffix = 'f';
                }
                if (is_float) {
                    tok.kind = Tok::Float;
                    tok.float_value = std::strtod(body.c_str(), nullptr);
                } else {
                    tok.kind = Tok::Int;
                    tok.int_value = std::strtoull(body.c_str(), nullptr, 10);
                    if (body.size() > 10) fail(tok.loc, "integer literal out of range");
                }
            }
            if (tok.suffix == 0 && j < src.size() && (src[j] == 'i' || src[j] == 'u')) {
                if (tok.kind == Tok::Float) fail(tok.loc, "integer suffix on a floating-point literal");
                tok.suffix = src[j];
            }
            if (tok.suffix) ++j;
            if (j < src.size() && ident_char(src[j])) fail(tok.loc, "invalid numeric literal suffix");
            tok.text = std::string(src.substr(i, j - i));
            advance(j - i);
            out.push_back(std::move(tok));
            continue;
        }

        tok.kind = Tok::Punct;
        auto try_match = [&](auto& table) {
            for (auto p : table) {
                if (src.substr(i, p.size()) == p) {
                    tok.text = std::string(p);
                    return true;
                }
            }
            return false;
        };
        if (!try_match(kPunct3) && !try_match(kPunct2)) {
            if (kPunct1.find(c) == std::string_view::npos) {
                fail(tok.loc, std::string("unexpected character '") + c + "'");
            }
            tok.text = std::string(1, c);
        }
        advance(tok.text.size());
        out.push_back(std::move(tok));
    }
    Token end;
    end.kind = Tok::End;
    end.loc = {line, col};
    out.push_back(end);
    return out;
}

bool is_reserved_word(std::string_view word) {
    static const std::unordered_set<std::string_view> words = {
        // keywords
        "alias", "break", "case", "const", "const_assert", "continue", "continuing", "default", "diagnostic",
        "discard", "else", "enable", "false", "fn", "for", "if", "let", "loop", "override", "requires", "return",
        "struct", "switch", "true", "var", "while",
        // reserved words
        "NULL", "Self", "abstract", "active", "alignas", "alignof", "as", "asm", "asm_fragment", "async",
        "attribute", "auto", "await", "become", "binding_array", "cast", "catch", "class", "co_await", "co_return",
        "co_yield", "coherent", "column_major", "common", "compile", "compile_fragment", "concept", "const_cast",
        "consteval", "constexpr", "constinit", "crate", "debugger", "decltype", "delete", "demote",
        "demote_to_helper", "do", "dynamic_cast", "enum", "explicit", "export", "extends", "extern", "external",
        "fallthrough", "filter", "final", "finally", "friend", "from", "fxgroup", "get", "goto", "groupshared",
        "highp", "impl", "implements", "import", "inline", "instanceof", "interface", "layout", "lowp", "macro",
        "macro_rules", "match", "mediump", "meta", "mod", "module", "move", "mut", "mutable", "namespace", "new",
        "nil", "noexcept", "noinline", "nointerpolation", "noperspective", "null", "nullptr", "of", "operator",
        "package", "packoffset", "partition", "pass", "patch", "pixelfragment", "precise", "precision", "premerge",
        "priv", "protected", "pub", "public", "readonly", "ref", "regardless", "register", "reinterpret_cast",
        "require", "resource", "restrict", "self", "set", "shared", "sizeof", "smooth", "snorm", "static",
        "static_assert", "static_cast", "std", "subroutine", "super", "target", "template", "this", "thread_local",
        "throw", "trait", "try", "type", "typedef", "typeid", "typename", "typeof", "union", "unless", "unorm",
        "unsafe", "unsized", "use", "using", "varying", "virtual", "volatile", "wgsl", "where", "with",
        "writeonly", "yield"};
    return words.contains(word) || (word.size() >= 2 && word[0] == '_' && word[1] == '_') || word == "_";
}

namespace {

class Parser {
 public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    ModuleAst parse_module() {
        ModuleAst m;
        while (!at_end()) {
            if (accept(";")) continue;
            auto attrs = parse_attributes();
            const Token& t = peek();
            if (is_ident("struct")) {
                if (!attrs.empty()) fail(t.loc, "attributes are not allowed on struct declarations");
                m.structs.push_back(parse_struct());
            } else if (is_ident("var") || is_ident("const") || is_ident("override")) {
                m.globals.push_back(parse_global(std::move(attrs)));
            } else if (is_ident("fn")) {
                m.functions.push_back(parse_fn(std::move(attrs)));
            } else if (is_ident("enable") || is_ident("requires") || is_ident("diagnostic") || is_ident("alias") ||
                       is_ident("const_assert")) {
                fail(t.loc, "'" + t.text + "' directives are not supported by this compiler");
            } else {
                fail(t.loc, "expected a module-scope declaration, found '" + describe(t) + "'");
            }
        }
        return m;
    }

 private:
    // ---- token helpers
    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
    bool at_end() const { return peek().kind == Tok::End; }
    const Token& next() {
        const Token& t = peek();
        if (pos_ < toks_.size() - 1) ++pos_;
        return t;
    }
    bool is_punct(std::string_view p, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::Punct && peek(ahead).text == p;
    }
    bool is_ident(std::string_view w, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::Ident && peek(ahead).text == w;
    }
    bool accept(std::string_view p) {
        if (is_punct(p)) {
            next();
            return true;
        }
        return false;
    }
    static std::string describe(const Token& t) { return t.kind == Tok::End ? "end of input" : t.text; }
    const Token& expect(std::string_view p) {
        if (!is_punct(p)) fail(peek().loc, "expected '" + std::string(p) + "', found '" + describe(peek()) + "'");
        return next();
    }
    void expect_keyword(std::string_view w) {
        if (!is_ident(w)) fail(peek().loc, "expected '" + std::string(w) + "', found '" + describe(peek()) + "'");
        next();
    }
    std::string expect_name(std::string_view what) {
        const Token& t = peek();
        if (t.kind != Tok::Ident) fail(t.loc, "expected " + std::string(what) + ", found '" + describe(t) + "'");
        if (is_reserved_word(t.text)) fail(t.loc, "'" + t.text + "' is a reserved word");
        next();
        return t.text;
    }
    // Closes a template list, splitting '>>' / '>=' / '>>=' tokens when needed.
    void expect_template_close() {
        Token& t = toks_[pos_];
        if (t.kind == Tok::Punct && !t.text.empty() && t.text[0] == '>') {
            if (t.text.size() == 1) {
                next();
            } else {
                t.text.erase(0, 1);
                t.loc.col += 1;
            }
            return;
        }
        fail(t.loc, "expected '>' to close template list, found '" + describe(t) + "'");
    }

    // ---- declarations
    std::vector<Attribute> parse_attributes() {
        std::vector<Attribute> attrs;
        while (is_punct("@")) {
            Attribute a;
            a.loc = next().loc;
            const Token& name = peek();
            if (name.kind != Tok::Ident) fail(name.loc, "expected attribute name");
            a.name = next().text;
            if (accept("(")) {
                while (!is_punct(")")) {
                    a.args.push_back(parse_expr());
                    if (!accept(",")) break;
                }
                expect(")");
            }
            attrs.push_back(std::move(a));
        }
        return attrs;
    }

    StructDecl parse_struct() {
        StructDecl s;
        s.loc = peek().loc;
        expect_keyword("struct");
        s.name = expect_name("struct name");
        expect("{");
        while (!is_punct("}")) {
            auto attrs = parse_attributes();
            if (!attrs.empty()) fail(attrs.front().loc, "member attributes are not supported");
            StructMember mem;
            mem.loc = peek().loc;
            mem.name = expect_name("member name");
            expect(":");
            mem.type = parse_type();
            s.members.push_back(std::move(mem));
            if (!accept(",")) break;
        }
        expect("}");
        accept(";");
        if (s.members.empty()) fail(s.loc, "struct '" + s.name + "' must have at least one member");
        return s;
    }

    GlobalDecl parse_global(std::vector<Attribute> attrs) {
        GlobalDecl g;
        g.loc = peek().loc;
        g.attrs = std::move(attrs);
        const std::string kw = next().text;
        if (kw == "var") {
            g.kind = GlobalDecl::Kind::Var;
            if (accept("<")) {
                g.space = expect_name("address space");
                if (accept(",")) g.access = expect_name("access mode");
                expect_template_close();
            }
        } else if (kw == "const") {
            g.kind = GlobalDecl::Kind::Const;
        } else {
            g.kind = GlobalDecl::Kind::Override;
        }
        g.name = expect_name("identifier");
        if (accept(":")) g.type = std::make_unique<TypeRef>(parse_type());
        if (accept("=")) g.init = parse_expr();
        expect(";");
        return g;
    }

    FnDecl parse_fn(std::vector<Attribute> attrs) {
        FnDecl f;
        f.loc = peek().loc;
        f.attrs = std::move(attrs);
        expect_keyword("fn");
        f.name = expect_name("function name");
        expect("(");
        while (!is_punct(")")) {
            Param p;
            p.attrs = parse_attributes();
            p.loc = peek().loc;
            p.name = expect_name("parameter name");
            expect(":");
            p.type = parse_type();
            f.params.push_back(std::move(p));
            if (!accept(",")) break;
        }
        expect(")");
        if (accept("->")) {
            parse_attributes();
            f.return_type = std::make_unique<TypeRef>(parse_type());
        }
        f.body = parse_block();
        return f;
    }

    TypeRef parse_type() {
        TypeRef t;
        t.loc = peek().loc;
        if (peek().kind != Tok::Ident) fail(t.loc, "expected a type, found '" + describe(peek()) + "'");
        t.name = next().text;
        if (accept("<")) {
            t.params.push_back(parse_type());
            if (t.name == "array" && accept(",")) t.count = parse_expr(kShiftPrec + 1);
            while (accept(",")) t.params.push_back(parse_type());
            expect_template_close();
        }
        return t;
    }

    // ---- statements
    std::vector<StmtP> parse_block() {
        expect("{");
        std::vector<StmtP> body;
        while (!is_punct("}")) {
            if (at_end()) fail(peek().loc, "expected '}' before end of input");
            body.push_back(parse_statement());
        }
        expect("}");
        return body;
    }

    StmtP make(Stmt::Kind kind, Loc loc) {
        auto s = std::make_unique<Stmt>();
        s->kind = kind;
        s->loc = loc;
        return s;
    }

    StmtP parse_statement() {
        const Loc loc = peek().loc;
        if (accept(";")) return make(Stmt::Kind::Empty, loc);
        if (is_punct("{")) {
            auto s = make(Stmt::Kind::Block, loc);
            s->body = parse_block();
            return s;
        }
        if (is_punct("@")) fail(loc, "statement attributes are not supported");
        if (is_ident("var") || is_ident("let") || is_ident("const")) {
            auto s = parse_decl();
            expect(";");
            return s;
        }
        if (is_ident("if")) return parse_if();
        if (is_ident("for")) return parse_for();
        if (is_ident("while")) {
            next();
            auto s = make(Stmt::Kind::While, loc);
            s->cond = parse_expr();
            s->body = parse_block();
            return s;
        }
        if (is_ident("loop")) return parse_loop();
        if (is_ident("break")) {
            next();
            if (is_ident("if")) fail(loc, "'break if' is only valid at the end of a continuing block");
            expect(";");
            return make(Stmt::Kind::Break, loc);
        }
        if (is_ident("continue")) {
            next();
            expect(";");
            return make(Stmt::Kind::Continue, loc);
        }
        if (is_ident("return")) {
            next();
            auto s = make(Stmt::Kind::Return, loc);
            if (!is_punct(";")) s->init = parse_expr();
            expect(";");
            return s;
        }
        if (is_ident("switch")) fail(loc, "switch statements are not supported by this compiler");
        if (is_ident("discard")) fail(loc, "discard is not valid in compute shaders");
        auto s = parse_simple();
        expect(";");
        return s;
    }

    StmtP parse_decl() {
        const Loc loc = peek().loc;
        const std::string kw = next().text;
        auto s = make(kw == "var" ? Stmt::Kind::Var : (kw == "let" ? Stmt::Kind::Let : Stmt::Kind::Const), loc);
        if (kw == "var" && accept("<")) {
            const std::string space = expect_name("address space");
            if (space != "function") fail(loc, "function-scope variables must use the 'function' address space");
            expect_template_close();
        }
        s->name = expect_name("identifier");
        if (accept(":")) s->type = std::make_unique<TypeRef>(parse_type());
        if (accept("=")) {
            s->init = parse_expr();
        } else if (kw != "var") {
            fail(peek().loc, "'" + kw + "' declaration requires an initializer");
        }
        return s;
    }

    // assignment, compound assignment, increment, decrement, call, or phony assignment
    StmtP parse_simple() {
        const Loc loc = peek().loc;
        if (is_ident("_") ) {
            next();
            expect("=");
            auto s = make(Stmt::Kind::Phony, loc);
            s->init = parse_expr();
            return s;
        }
        auto lhs = parse_unary();
        if (accept("++")) {
            auto s = make(Stmt::Kind::Increment, loc);
            s->lhs = std::move(lhs);
            return s;
        }
        if (accept("--")) {
            auto s = make(Stmt::Kind::Decrement, loc);
            s->lhs = std::move(lhs);
            return s;
        }
        static const std::array<std::string_view, 11> assign_ops = {"=", "+=", "-=", "*=", "/=", "%=",
                                                                    "&=", "|=", "^=", "<<=", ">>="};
        for (auto op : assign_ops) {
            if (is_punct(op)) {
                next();
                auto s = make(Stmt::Kind::Assign, loc);
                s->op = std::string(op);
                s->lhs = std::move(lhs);
                s->init = parse_expr();
                return s;
            }
        }
        if (lhs->kind == Expr::Kind::Call) {
            auto s = make(Stmt::Kind::Call, loc);
            s->init = std::move(lhs);
            return s;
        }
        fail(peek().loc, "expected assignment or function call, found '" + describe(peek()) + "'");
    }

    StmtP parse_if() {
        const Loc loc = peek().loc;
        expect_keyword("if");
        auto s = make(Stmt::Kind::If, loc);
        s->cond = parse_expr();
        s->body = parse_block();
        if (is_ident("else")) {
            next();
            if (is_ident("if")) {
                s->else_branch = parse_if();
            } else {
                auto blk = make(Stmt::Kind::Block, peek().loc);
                blk->body = parse_block();
                s->else_branch = std::move(blk);
            }
        }
        return s;
    }

    StmtP parse_for() {
        const Loc loc = peek().loc;
        expect_keyword("for");
        auto s = make(Stmt::Kind::For, loc);
        expect("(");
        if (!is_punct(";")) {
            s->for_init = (is_ident("var") || is_ident("let") || is_ident("const")) ? parse_decl() : parse_simple();
        }
        expect(";");
        if (!is_punct(";")) s->cond = parse_expr();
        expect(";");
        if (!is_punct(")")) s->for_update = parse_simple();
        expect(")");
        s->body = parse_block();
        return s;
    }

    StmtP parse_loop() {
        const Loc loc = peek().loc;
        expect_keyword("loop");
        auto s = make(Stmt::Kind::Loop, loc);
        expect("{");
        while (!is_punct("}")) {
            if (at_end()) fail(peek().loc, "expected '}' before end of input");
            if (is_ident("continuing")) {
                next();
                expect("{");
                while (!is_punct("}")) {
                    if (is_ident("break") && is_ident("if", 1)) {
                        next();
                        next();
                        s->break_if = parse_expr();
                        expect(";");
                        if (!is_punct("}")) fail(peek().loc, "'break if' must be the last statement of continuing");
                        break;
                    }
                    if (at_end()) fail(peek().loc, "expected '}' before end of input");
                    s->continuing.push_back(parse_statement());
                }
                expect("}");
                if (!is_punct("}")) fail(peek().loc, "continuing must be the last statement of a loop");
                break;
            }
            s->body.push_back(parse_statement());
        }
        expect("}");
        return s;
    }

    // ---- expressions
    static constexpr int kShiftPrec = 8;

    static int binary_prec(const Token& t) {
        if (t.kind != Tok::Punct) return -1;
        const std::string& p = t.text;
        if (p == "||") return 1;
        if (p == "&&") return 2;
        if (p == "|") return 3;
        if (p == "^") return 4;
        if (p == "&") return 5;
        if (p == "==" || p == "!=") return 6;
        if (p == "<" || p == ">" || p == "<=" || p == ">=") return 7;
        if (p == "<<" || p == ">>") return kShiftPrec;
        if (p == "+" || p == "-") return 9;
        if (p == "*" || p == "/" || p == "%") return 10;
        return -1;
    }

    ExprP parse_expr(int min_prec = 1) {
        auto lhs = parse_unary();
        for (;;) {
            const Token& op = peek();
            const int prec = binary_prec(op);
            if (prec < min_prec) break;
            next();
            auto rhs = parse_expr(prec + 1);
            auto e = std::make_unique<Expr>();
            e->kind = Expr::Kind::Binary;
            e->loc = op.loc;
            e->text = op.text;
            e->args.push_back(std::move(lhs));
            e->args.push_back(std::move(rhs));
            lhs = std::move(e);
        }
        return lhs;
    }

    ExprP parse_unary() {
        const Token& t = peek();
        if (t.kind == Tok::Punct && (t.text == "-" || t.text == "!" || t.text == "~" || t.text == "&" || t.text == "*")) {
            if (t.text == "*") fail(t.loc, "pointer dereference is not supported by this compiler");
            next();
            auto e = std::make_unique<Expr>();
            e->kind = t.text == "&" ? Expr::Kind::AddressOf : Expr::Kind::Unary;
            e->loc = t.loc;
            e->text = t.text;
            e->args.push_back(parse_unary());
            return e;
        }
        return parse_postfix(parse_primary());
    }

    static bool is_templated_callee(std::string_view name) {
        return name == "vec2" || name == "vec3" || name == "vec4" || name == "array" || name == "bitcast";
    }

    ExprP parse_primary() {
        const Token& t = peek();
        auto e = std::make_unique<Expr>();
        e->loc = t.loc;
        switch (t.kind) {
            case Tok::Int:
                e->kind = Expr::Kind::IntLit;
                e->int_value = t.int_value;
                e->suffix = t.suffix;
                next();
                return e;
            case Tok::Float:
                e->kind = Expr::Kind::FloatLit;
                e->float_value = t.float_value;
                e->suffix = t.suffix;
                next();
                return e;
            case Tok::Ident: {
                if (t.text == "true" || t.text == "false") {
                    e->kind = Expr::Kind::BoolLit;
                    e->bool_value = t.text == "true";
                    next();
                    return e;
                }
                if (is_templated_callee(t.text) && is_punct("<", 1)) {
                    e->kind = Expr::Kind::Call;
                    e->callee_type = std::make_unique<TypeRef>(parse_type());
                    e->text = e->callee_type->name;
                    parse_call_args(*e);
                    return e;
                }
                if (is_reserved_word(t.text)) fail(t.loc, "'" + t.text + "' is a reserved word");
                e->text = next().text;
                if (is_punct("(")) {
                    e->kind = Expr::Kind::Call;
                    parse_call_args(*e);
                } else {
                    e->kind = Expr::Kind::Ident;
                }
                return e;
            }
            case Tok::Punct:
                if (t.text == "(") {
                    next();
                    auto inner = parse_expr();
                    expect(")");
                    return inner;
                }
                break;
            case Tok::End:
                break;
        }
        fail(t.loc, "expected an expression, found '" + describe(t) + "'");
    }

    void parse_call_args(Expr& call) {
        expect("(");
        while (!is_punct(")")) {
            call.args.push_back(parse_expr());
            if (!accept(",")) break;
        }
        expect(")");
    }

    ExprP parse_postfix(ExprP base) {
        for (;;) {
            if (is_punct("[")) {
                auto e = std::make_unique<Expr>();
                e->kind = Expr::Kind::Index;
                e->loc = next().loc;
                e->args.push_back(std::move(base));
                e->args.push_back(parse_expr());
                expect("]");
                base = std::move(e);
            } else if (is_punct(".")) {
                auto e = std::make_unique<Expr>();
                e->kind = Expr::Kind::Member;
                e->loc = next().loc;
                const Token& name = peek();
                if (name.kind != Tok::Ident) fail(name.loc, "expected member name after '.'");
                e->text = next().text;
                e->args.push_back(std::move(base));
                base = std::move(e);
            } else {
                return base;
            }
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

ModuleAst parse(std::string_view source) {
    Parser p(tokenize(source));
    return p.parse_module();
}

}  // namespace ndgpu::soft::wgsl
