#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "ndgpu/kernel.hpp"

namespace ndgpu {

namespace {

constexpr const char* kComponents[4] = {"x", "y", "z", "w"};

const char* wgsl_type(DType dtype) {
    switch (dtype) {
        case DType::F32: return "f32";
        case DType::I32: return "i32";
        case DType::U32:
        case DType::Bool: return "u32";
    }
    return "u32";
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string format_constant(const ParamDecl& decl, double v) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, fmt::format("constant '{}' is not finite", decl.name));
    std::string text;
    switch (decl.dtype) {
        case DType::F32: {
            text = fmt::format("{:.9g}", static_cast<double>(static_cast<float>(v)));
            if (text.find_first_of(".en") == std::string::npos) text += ".0";
            text += 'f';
            break;
        }
        case DType::I32: {
            const auto w = static_cast<std::int32_t>(encode_word(DType::I32, v));
            text = w == INT32_MIN ? std::string("i32(-2147483648)") : fmt::format("{}i", w);
            break;
        }
        case DType::U32: text = fmt::format("{}u", encode_word(DType::U32, v)); break;
        case DType::Bool: text = v != 0.0 ? "1u" : "0u"; break;
    }
    if (text.starts_with('-')) text = "(" + text + ")";
    return text;
}

std::map<std::string, std::string> constant_texts(const KernelSpec& spec, const ConstantValues& values) {
    std::map<std::string, std::string> out;
    for (const auto& d : spec.constants) {
        auto it = values.find(d.name);
        if (it == values.end()) throw Error(ErrorCode::InvalidArgument, fmt::format("no value for constant '{}'", d.name));
        out[d.name] = format_constant(d, it->second);
    }
    for (const auto& [name, v] : values) {
        if (!out.contains(name)) throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' is not a declared constant", name));
    }
    return out;
}

// Replaces whole identifier tokens; numeric literals such as 1e5 are left alone.
std::string substitute(const std::string& op, const std::map<std::string, std::string>& texts) {
    if (texts.empty()) return op;
    std::string out;
    out.reserve(op.size());
    std::size_t p = 0;
    while (p < op.size()) {
        const char c = op[p];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const auto start = p;
            while (p < op.size() && (std::isalnum(static_cast<unsigned char>(op[p])) || op[p] == '_')) ++p;
            const std::string token = op.substr(start, p - start);
            auto it = texts.find(token);
            out += it != texts.end() ? it->second : token;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            const auto start = p;
            while (p < op.size() && (std::isalnum(static_cast<unsigned char>(op[p])) || op[p] == '.')) ++p;
            out.append(op, start, p - start);
        } else {
            out += c;
            ++p;
        }
    }
    return out;
}

void check_spec(const KernelSpec& spec) {
    if (spec.out_params.empty()) throw Error(ErrorCode::InvalidArgument, "a kernel needs at least one out param");
    if (spec.in_params.size() + spec.out_params.size() > kMaxBoundArrays) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("at most {} arrays can be bound", kMaxBoundArrays));
    }
    if (spec.operation.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "operation is empty");
    }
}

std::string address_expr(std::size_t array, std::size_t rank) {
    std::string e = fmt::format("launch_meta.offsets[{}].{}", array / 4, kComponents[array % 4]);
    for (std::size_t d = 0; d < rank; ++d) {
        e += fmt::format(" + ek_c{} * launch_meta.strides[{}].{}", d, array, kComponents[d]);
    }
    return e;
}

}  // namespace

std::string generate_source(const KernelSpec& spec, std::size_t rank, std::uint32_t workgroup_size,
                            const ConstantValues& constants) {
    if (rank > kMaxRank) throw Error(ErrorCode::UnsupportedRank, fmt::format("kernel rank {} exceeds {}", rank, kMaxRank));
    check_spec(spec);
    const std::string op = substitute(spec.operation, constant_texts(spec, constants));

    bool exposes_i = true;
    for (const auto* list : {&spec.in_params, &spec.out_params, &spec.constants})
        for (const auto& d : *list)
            if (d.name == "i") exposes_i = false;

    std::string s;
    auto line = [&s](std::string_view text) {
        s += text;
        s += '\n';
    };

    line(fmt::format("// elementwise kernel '{}', rank {}", spec.name, rank));
    line("struct LaunchMeta {");
    line("    total: u32,");
    line("    out_shape: vec4<u32>,");
    line(fmt::format("    strides: array<vec4<u32>, {}>,", kMaxBoundArrays));
    line(fmt::format("    offsets: array<vec4<u32>, {}>,", kMaxBoundArrays / 4));
    line("}");
    line("");
    std::uint32_t binding = 0;
    for (const auto& p : spec.in_params) {
        line(fmt::format("@group(0) @binding({}) var<storage, read> ek_in_{}: array<{}>;", binding++, p.name,
                         wgsl_type(p.dtype)));
    }
    for (const auto& p : spec.out_params) {
        line(fmt::format("@group(0) @binding({}) var<storage, read_write> ek_out_{}: array<{}>;", binding++, p.name,
                         wgsl_type(p.dtype)));
    }
    line(fmt::format("@group(0) @binding({}) var<uniform> launch_meta: LaunchMeta;", binding));
    line("");
    line(fmt::format("@compute @workgroup_size({})", workgroup_size));
    line("fn main(@builtin(global_invocation_id) ek_gid: vec3<u32>, @builtin(num_workgroups) ek_nwg: vec3<u32>) {");
    line(fmt::format("    let ek_stride = ek_nwg.x * {}u;", workgroup_size));
    line("    for (var ek_i = ek_gid.x; ek_i < launch_meta.total; ek_i = ek_i + ek_stride) {");
    if (rank > 0) {
        line("        var ek_rem = ek_i;");
        for (std::size_t d = rank; d-- > 1;) {
            line(fmt::format("        let ek_c{} = ek_rem % launch_meta.out_shape.{};", d, kComponents[d]));
            line(fmt::format("        ek_rem = ek_rem / launch_meta.out_shape.{};", kComponents[d]));
        }
        line("        let ek_c0 = ek_rem;");
    }
    std::size_t array = 0;
    for (const auto& p : spec.in_params) {
        line(fmt::format("        let {}: {} = ek_in_{}[{}];", p.name, wgsl_type(p.dtype), p.name, address_expr(array++, rank)));
    }
    for (const auto& p : spec.out_params) line(fmt::format("        var {}: {};", p.name, wgsl_type(p.dtype)));
    if (exposes_i) line("        let i: u32 = ek_i;");
    line("        {");
    std::string body = op;
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
    if (!body.ends_with(';') && !body.ends_with('}')) body += ';';
    s += "            ";
    s += body;
    s += '\n';
    line("        }");
    for (const auto& p : spec.out_params) {
        const std::string value = p.dtype == DType::Bool ? fmt::format("select(0u, 1u, {} != 0u)", p.name) : p.name;
        line(fmt::format("        ek_out_{}[{}] = {};", p.name, address_expr(array++, rank), value));
    }
    line("    }");
    line("}");
    return s;
}

std::string kernel_cache_key(const KernelSpec& spec, std::size_t rank, std::uint32_t workgroup_size,
                             const ConstantValues& constants) {
    auto sig = [](const std::vector<ParamDecl>& list) {
        std::string out;
        for (const auto& d : list) out += fmt::format("{} {},", dtype_name(d.dtype), d.name);
        return out;
    };
    std::string consts;
    for (const auto& [name, text] : constant_texts(spec, constants)) consts += name + "=" + text + ",";
    return fmt::format("{}|{}|{}|{}|{}|{}|{}|{}", spec.name, sig(spec.in_params), sig(spec.out_params),
                       sig(spec.constants), spec.operation, rank, workgroup_size, consts);
}

std::shared_ptr<const CompiledKernel> compile_or_get(DeviceContext& ctx, const KernelSpec& spec, std::size_t rank,
                                                     const ConstantValues& constants) {
    const std::uint32_t wg = ctx.config().workgroup_size;
    const std::string key = kernel_cache_key(spec, rank, wg, constants);
    return ctx.kernel_cache_get(key, [&]() -> std::shared_ptr<const CompiledKernel> {
        auto k = std::make_shared<CompiledKernel>();
        k->name = spec.name;
        k->key = key;
        k->key_hash = fnv1a(key);
        k->source = generate_source(spec, rank, wg, constants);
        k->workgroup_size = wg;
        k->rank = rank;
        k->spec = spec;
        k->pipeline = ctx.compile_pipeline(k->source, fmt::format("{}_r{}_{:016x}", spec.name, rank, k->key_hash));
        return k;
    });
}

}  // namespace ndgpu
