#include <cctype>
#include <set>
#include <string>

#include "ndgpu/kernel.hpp"

namespace ndgpu {

namespace {

// WGSL keywords and reserved words, plus the predeclared names the generated shader relies on.
const std::set<std::string, std::less<>>& reserved_words() {
    static const std::set<std::string, std::less<>> words = {
        "alias", "break", "case", "const", "const_assert", "continue", "continuing", "default", "diagnostic",
        "discard", "else", "enable", "false", "fn", "for", "if", "let", "loop", "override", "requires", "return",
        "struct", "switch", "true", "var", "while",
        "NULL", "Self", "abstract", "active", "alignas", "alignof", "as", "asm", "asm_fragment", "async",
        "attribute", "auto", "await", "become", "cast", "catch", "class", "co_await", "co_return", "co_yield",
        "coherent", "column_major", "common", "compile", "compile_fragment", "concept", "const_cast", "consteval",
        "constexpr", "constinit", "crate", "debugger", "decltype", "delete", "demote", "demote_to_helper", "do",
        "dynamic_cast", "enum", "explicit", "export", "extends", "extern", "external", "fallthrough", "filter",
        "final", "finally", "friend", "from", "fxgroup", "get", "goto", "groupshared", "highp", "impl",
        "implements", "import", "inline", "instanceof", "interface", "layout", "lowp", "macro", "macro_rules",
        "match", "mediump", "meta", "mod", "module", "move", "mut", "mutable", "namespace", "new", "nil",
        "noexcept", "noinline", "nointerpolation", "non_coherent", "noncoherent", "noperspective", "null",
        "nullptr", "of", "operator", "package", "packoffset", "partition", "pass", "patch", "pixelfragment",
        "precise", "precision", "premerge", "priv", "protected", "pub", "public", "readonly", "ref", "regardless",
        "register", "reinterpret_cast", "require", "resource", "restrict", "self", "set", "shared", "sizeof",
        "smooth", "snorm", "static", "static_assert", "static_cast", "std", "subroutine", "super", "target",
        "template", "this", "thread_local", "throw", "trait", "try", "type", "typedef", "typeid", "typename",
        "typeof", "union", "unless", "unorm", "unsafe", "unsized", "use", "using", "varying", "virtual",
        "volatile", "wgsl", "where", "with", "writeonly", "yield",
        "f32", "f16", "i32", "u32", "bool", "vec2", "vec3", "vec4", "mat2x2", "mat3x3", "mat4x4", "array", "ptr",
        "atomic", "select", "bitcast", "main", "launch_meta", "LaunchMeta",
    };
    return words;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

DType parse_dtype(std::string_view token, std::size_t pos) {
    if (token == "float32" || token == "f32") return DType::F32;
    if (token == "int32" || token == "i32") return DType::I32;
    if (token == "uint32" || token == "u32") return DType::U32;
    if (token == "bool") return DType::Bool;
    throw ParseError(pos, "unsupported dtype '" + std::string(token) + "'");
}

void check_name(std::string_view name, std::size_t pos) {
    if (name == "_" || name.starts_with("__")) throw ParseError(pos, "'" + std::string(name) + "' is not a valid identifier");
    if (name.starts_with("ek_")) throw ParseError(pos, "names starting with 'ek_' are reserved for generated code");
    if (reserved_words().contains(name)) throw ParseError(pos, "'" + std::string(name) + "' is a reserved word");
}

}  // namespace

std::vector<ParamDecl> parse_params(std::string_view decl) {
    std::vector<ParamDecl> out;
    std::size_t p = 0;
    auto skip_ws = [&] {
        while (p < decl.size() && std::isspace(static_cast<unsigned char>(decl[p]))) ++p;
    };
    auto word = [&]() -> std::string_view {
        const auto start = p;
        if (p < decl.size() && ident_start(decl[p]))
            while (p < decl.size() && ident_char(decl[p])) ++p;
        return decl.substr(start, p - start);
    };

    skip_ws();
    if (p == decl.size()) return out;
    while (true) {
        skip_ws();
        const auto type_pos = p;
        const auto type = word();
        if (type.empty()) throw ParseError(type_pos, "expected a dtype");
        const DType dtype = parse_dtype(type, type_pos);
        skip_ws();
        const auto name_pos = p;
        const auto name = word();
        if (name.empty()) throw ParseError(name_pos, "expected a parameter name after '" + std::string(type) + "'");
        check_name(name, name_pos);
        for (const auto& d : out)
            if (d.name == name) throw ParseError(name_pos, "duplicate parameter '" + std::string(name) + "'");
        out.push_back({dtype, std::string(name)});
        skip_ws();
        if (p == decl.size()) break;
        if (decl[p] != ',') throw ParseError(p, std::string("expected ',' but found '") + decl[p] + "'");
        ++p;
    }
    return out;
}

KernelSpec KernelSpec::make(std::string name, std::string_view in_params, std::string_view out_params,
                            std::string operation, std::string_view constants) {
    KernelSpec spec;
    if (name.empty() || !ident_start(name[0])) throw Error(ErrorCode::InvalidArgument, "kernel name must be an identifier");
    for (char c : name)
        if (!ident_char(c)) throw Error(ErrorCode::InvalidArgument, "kernel name must be an identifier");
    spec.name = std::move(name);
    spec.in_params = parse_params(in_params);
    spec.out_params = parse_params(out_params);
    spec.constants = parse_params(constants);
    if (spec.out_params.empty()) throw Error(ErrorCode::InvalidArgument, "a kernel needs at least one out param");
    if (operation.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "operation is empty");
    }
    std::set<std::string> seen;
    for (const auto* list : {&spec.in_params, &spec.out_params, &spec.constants})
        for (const auto& d : *list)
            if (!seen.insert(d.name).second) {
                throw ParseError(0, "parameter '" + d.name + "' is declared more than once");
            }
    spec.operation = std::move(operation);
    return spec;
}

}  // namespace ndgpu
