#include <algorithm>

#include <fmt/format.h>

#include "ndgpu/kernel.hpp"
#include "ndgpu/ops.hpp"

namespace ndgpu::ops {

namespace {

const char* short_name(DType d) {
    switch (d) {
        case DType::F32: return "f32";
        case DType::I32: return "i32";
        case DType::U32: return "u32";
        case DType::Bool: return "bool";
    }
    return "?";
}

const char* zero_literal(DType d) {
    switch (d) {
        case DType::F32: return "0.0";
        case DType::I32: return "0i";
        default: return "0u";
    }
}

// Elementwise kernels are cached per spec, so build each spec once per process.
const ElementwiseKernel& cached_kernel(const std::string& name, const std::string& in, const std::string& out,
                                       const std::string& op) {
    static std::mutex mu;
    static std::map<std::string, std::unique_ptr<ElementwiseKernel>> kernels;
    std::lock_guard lock(mu);
    auto& slot = kernels[name];
    if (!slot) slot = std::make_unique<ElementwiseKernel>(in, out, op, name);
    return *slot;
}

std::string binary_body(BinaryOpKind kind) {
    switch (kind) {
        case BinaryOpKind::Add: return "z = a + b;";
        case BinaryOpKind::Sub: return "z = a - b;";
        case BinaryOpKind::Mul: return "z = a * b;";
        case BinaryOpKind::Div: return "z = a / b;";
        case BinaryOpKind::Maximum: return "z = max(a, b);";
        case BinaryOpKind::Greater: return "z = select(0u, 1u, a > b);";
        case BinaryOpKind::Less: return "z = select(0u, 1u, a < b);";
        case BinaryOpKind::Equal: return "z = select(0u, 1u, a == b);";
    }
    return {};
}

std::string astype_body(DType from, DType to) {
    if (to == DType::Bool) return fmt::format("z = select(0u, 1u, a != {});", zero_literal(from));
    if (from == DType::U32 && to == DType::I32) return "z = i32(min(a, 2147483647u));";
    if (from == DType::I32 && to == DType::U32) return "z = u32(max(a, 0i));";
    if (from == DType::Bool && to == DType::U32) return "z = a;";
    return fmt::format("z = {}(a);", short_name(to));
}

std::shared_ptr<const CompiledKernel> raw_kernel(DeviceContext& ctx, const std::string& key, const std::string& label,
                                                 const std::function<std::string()>& source) {
    return ctx.kernel_cache_get(key, [&]() -> std::shared_ptr<const CompiledKernel> {
        auto k = std::make_shared<CompiledKernel>();
        k->name = label;
        k->key = key;
        k->source = source();
        k->pipeline = ctx.compile_pipeline(k->source, label);
        return k;
    });
}

// Raw kernels index from element zero of the buffer.
DeviceArray packed(DeviceContext& ctx, const DeviceArray& a) {
    const auto& d = a.descriptor();
    return d.is_contiguous() && d.offset == 0 ? a : materialize(ctx, a);
}

void dispatch(DeviceContext& ctx, const CompiledKernel& k, std::initializer_list<BufferHandle> buffers,
              std::initializer_list<std::uint32_t> uniform, std::array<std::uint32_t, 3> groups) {
    std::vector<DeviceContext::Binding> bindings;
    for (const auto& b : buffers) bindings.push_back({b, 0, 0});
    std::vector<std::uint32_t> words(uniform);
    words.resize(4, 0);
    BufferHandle u = ctx.upload_uniform(words);
    bindings.push_back({u, 0, 0});
    try {
        ctx.record_dispatch(k.pipeline, bindings, groups);
    } catch (...) {
        ctx.free(u);
        throw;
    }
    ctx.free(u);
}

constexpr std::uint32_t kReduceThreads = 256;
constexpr std::uint32_t kMaxPartials = 256;

std::string reduce_prelude(DType dtype, ReduceOp op) {
    const char* t = short_name(dtype);
    const std::string init = op == ReduceOp::Sum ? (dtype == DType::F32 ? "0.0" : "0i")
                                                 : (dtype == DType::F32 ? "bitcast<f32>(0xff800000u)" : "(-2147483647i - 1i)");
    return fmt::format(
        "struct Dims {{\n"
        "    outer: u32,\n"
        "    len: u32,\n"
        "    inner: u32,\n"
        "    n: u32,\n"
        "}}\n"
        "\n"
        "@group(0) @binding(0) var<storage, read> src: array<{0}>;\n"
        "@group(0) @binding(1) var<storage, read_write> dst: array<{0}>;\n"
        "@group(0) @binding(2) var<uniform> dims: Dims;\n"
        "var<workgroup> partial: array<{0}, {2}>;\n"
        "\n"
        "const INIT: {0} = {1};\n"
        "\n",
        t, init, kReduceThreads);
}

std::string reduce_tree(ReduceOp op) {
    const char* combine = op == ReduceOp::Sum ? "partial[lid.x] + partial[lid.x + s]" : "max(partial[lid.x], partial[lid.x + s])";
    return fmt::format(
        "        partial[lid.x] = acc;\n"
        "        workgroupBarrier();\n"
        "        for (var s = {}u; s > 0u; s = s >> 1u) {{\n"
        "            if (lid.x < s) {{\n"
        "                partial[lid.x] = {};\n"
        "            }}\n"
        "            workgroupBarrier();\n"
        "        }}\n",
        kReduceThreads / 2, combine);
}

// Pass 1: workgroup w folds elements w*256+lid, strided by the grid, into dst[w].
std::string reduce_partial_source(DType dtype, ReduceOp op) {
    const char* combine = op == ReduceOp::Sum ? "acc + src[j]" : "max(acc, src[j])";
    return reduce_prelude(dtype, op) +
           fmt::format("@compute @workgroup_size({0})\n"
                       "fn main(@builtin(local_invocation_id) lid: vec3<u32>, @builtin(workgroup_id) wid: vec3<u32>,\n"
                       "        @builtin(num_workgroups) nwg: vec3<u32>) {{\n"
                       "    var acc = INIT;\n"
                       "    for (var j = wid.x * {0}u + lid.x; j < dims.n; j = j + nwg.x * {0}u) {{\n"
                       "        acc = {1};\n"
                       "    }}\n"
                       "    {{\n",
                       kReduceThreads, combine) +
           reduce_tree(op) +
           "        if (lid.x == 0u) {\n"
           "            dst[wid.x] = partial[0];\n"
           "        }\n"
           "    }\n"
           "}\n";
}

// One workgroup per output element of a [outer, len, inner] view; workgroups stride over outputs.
std::string reduce_axis_source(DType dtype, ReduceOp op) {
    const char* combine = op == ReduceOp::Sum ? "acc + src[base + l * dims.inner]" : "max(acc, src[base + l * dims.inner])";
    return reduce_prelude(dtype, op) +
           fmt::format("@compute @workgroup_size({0})\n"
                       "fn main(@builtin(local_invocation_id) lid: vec3<u32>, @builtin(workgroup_id) wid: vec3<u32>,\n"
                       "        @builtin(num_workgroups) nwg: vec3<u32>) {{\n"
                       "    let count = dims.outer * dims.inner;\n"
                       "    for (var o = wid.x; o < count; o = o + nwg.x) {{\n"
                       "        let base = (o / dims.inner) * dims.len * dims.inner + o % dims.inner;\n"
                       "        var acc = INIT;\n"
                       "        for (var l = lid.x; l < dims.len; l = l + {0}u) {{\n"
                       "            acc = {1};\n"
                       "        }}\n",
                       kReduceThreads, combine) +
           reduce_tree(op) +
           "        if (lid.x == 0u) {\n"
           "            dst[o] = partial[0];\n"
           "        }\n"
           "        workgroupBarrier();\n"
           "    }\n"
           "}\n";
}

std::string matmul_naive_source() {
    return "struct Dims {\n"
           "    m: u32,\n"
           "    k: u32,\n"
           "    n: u32,\n"
           "    pad: u32,\n"
           "}\n"
           "\n"
           "@group(0) @binding(0) var<storage, read> a: array<f32>;\n"
           "@group(0) @binding(1) var<storage, read> b: array<f32>;\n"
           "@group(0) @binding(2) var<storage, read_write> c: array<f32>;\n"
           "@group(0) @binding(3) var<uniform> dims: Dims;\n"
           "\n"
           "@compute @workgroup_size(16, 16)\n"
           "fn main(@builtin(global_invocation_id) gid: vec3<u32>) {\n"
           "    let row = gid.y;\n"
           "    let col = gid.x;\n"
           "    if (row >= dims.m || col >= dims.n) {\n"
           "        return;\n"
           "    }\n"
           "    var acc = 0.0;\n"
           "    for (var p = 0u; p < dims.k; p = p + 1u) {\n"
           "        acc = acc + a[row * dims.k + p] * b[p * dims.n + col];\n"
           "    }\n"
           "    c[row * dims.n + col] = acc;\n"
           "}\n";
}

std::string matmul_tiled_source(std::uint32_t t) {
    return fmt::format(
        "struct Dims {{\n"
        "    m: u32,\n"
        "    k: u32,\n"
        "    n: u32,\n"
        "    pad: u32,\n"
        "}}\n"
        "\n"
        "const T: u32 = {0}u;\n"
        "\n"
        "@group(0) @binding(0) var<storage, read> a: array<f32>;\n"
        "@group(0) @binding(1) var<storage, read> b: array<f32>;\n"
        "@group(0) @binding(2) var<storage, read_write> c: array<f32>;\n"
        "@group(0) @binding(3) var<uniform> dims: Dims;\n"
        "var<workgroup> tile_a: array<f32, {1}>;\n"
        "var<workgroup> tile_b: array<f32, {1}>;\n"
        "\n"
        "@compute @workgroup_size({0}, {0})\n"
        "fn main(@builtin(local_invocation_id) lid: vec3<u32>, @builtin(workgroup_id) wid: vec3<u32>) {{\n"
        "    let row = wid.y * T + lid.y;\n"
        "    let col = wid.x * T + lid.x;\n"
        "    let tiles = (dims.k + T - 1u) / T;\n"
        "    var acc = 0.0;\n"
        "    for (var t = 0u; t < tiles; t = t + 1u) {{\n"
        "        let ac = t * T + lid.x;\n"
        "        let br = t * T + lid.y;\n"
        "        if (row < dims.m && ac < dims.k) {{\n"
        "            tile_a[lid.y * T + lid.x] = a[row * dims.k + ac];\n"
        "        }} else {{\n"
        "            tile_a[lid.y * T + lid.x] = 0.0;\n"
        "        }}\n"
        "        if (br < dims.k && col < dims.n) {{\n"
        "            tile_b[lid.y * T + lid.x] = b[br * dims.n + col];\n"
        "        }} else {{\n"
        "            tile_b[lid.y * T + lid.x] = 0.0;\n"
        "        }}\n"
        "        workgroupBarrier();\n"
        "        for (var p = 0u; p < T; p = p + 1u) {{\n"
        "            acc = acc + tile_a[lid.y * T + p] * tile_b[p * T + lid.x];\n"
        "        }}\n"
        "        workgroupBarrier();\n"
        "    }}\n"
        "    if (row < dims.m && col < dims.n) {{\n"
        "        c[row * dims.n + col] = acc;\n"
        "    }}\n"
        "}}\n",
        t, t * t);
}

std::uint32_t ceil_div(std::int64_t a, std::int64_t b) { return static_cast<std::uint32_t>((a + b - 1) / b); }

}  // namespace

DeviceArray binary(DeviceContext& ctx, BinaryOpKind kind, const DeviceArray& a, const DeviceArray& b) {
    if (a.dtype() != b.dtype()) {
        throw Error(ErrorCode::DTypeMismatch, fmt::format("{} {} {}: cast explicitly", dtype_name(a.dtype()), op_name(kind),
                                                          dtype_name(b.dtype())));
    }
    if (kind == BinaryOpKind::Div && a.dtype() != DType::F32) {
        throw Error(ErrorCode::IntegerDivisionUnsupported, "division requires float32 operands");
    }
    if (a.dtype() == DType::Bool && !is_comparison(kind)) {
        throw Error(ErrorCode::DTypeMismatch, "arithmetic on bool arrays is not supported");
    }
    broadcast_shapes(a.shape(), b.shape());
    const char* t = short_name(a.dtype());
    const char* out = is_comparison(kind) ? "bool" : t;
    const auto& k = cached_kernel(fmt::format("{}_{}", op_name(kind), t), fmt::format("{0} a, {0} b", t),
                                  fmt::format("{} z", out), binary_body(kind));
    return k(ctx, {a, b});
}

DeviceArray binary(DeviceContext& ctx, BinaryOpKind kind, const DeviceArray& a, double scalar) {
    return binary(ctx, kind, a, ctx.scalar(a.dtype(), encode_word(a.dtype(), scalar)));
}

DeviceArray where(DeviceContext& ctx, const DeviceArray& cond, const DeviceArray& a, const DeviceArray& b) {
    if (a.dtype() != b.dtype()) throw Error(ErrorCode::DTypeMismatch, "where branches must share a dtype");
    broadcast_shapes(broadcast_shapes(cond.shape(), a.shape()), b.shape());
    const char* ct = short_name(cond.dtype());
    const char* t = short_name(a.dtype());
    const auto& k = cached_kernel(fmt::format("where_{}_{}", ct, t), fmt::format("{} cond, {} a, {} b", ct, t, t),
                                  fmt::format("{} z", t), fmt::format("z = select(b, a, cond != {});", zero_literal(cond.dtype())));
    return k(ctx, {cond, a, b});
}

DeviceArray astype(DeviceContext& ctx, const DeviceArray& a, DType to) {
    if (a.dtype() == to) return materialize(ctx, a);
    const auto& k = cached_kernel(fmt::format("astype_{}_{}", short_name(a.dtype()), short_name(to)),
                                  fmt::format("{} a", short_name(a.dtype())), fmt::format("{} z", short_name(to)),
                                  astype_body(a.dtype(), to));
    return k(ctx, {a});
}

DeviceArray reduce(DeviceContext& ctx, const DeviceArray& a, ReduceOp op, std::optional<std::size_t> axis) {
    const DType dtype = a.dtype();
    if (dtype != DType::F32 && dtype != DType::I32) {
        throw Error(ErrorCode::DTypeMismatch, "reductions take float32 or int32 input");
    }
    const auto& dims = a.shape().dims();
    if (axis && *axis >= dims.size()) {
        throw Error(ErrorCode::AxisOutOfRange, fmt::format("axis {} out of range for rank {}", *axis, dims.size()));
    }
    const std::string tag = fmt::format("{}_{}", op_name(op), short_name(dtype));
    auto axis_kernel = [&] {
        return raw_kernel(ctx, "reduce_axis|" + tag, "reduce_axis_" + tag, [&] { return reduce_axis_source(dtype, op); });
    };

    if (!axis) {
        const std::int64_t n = a.size();
        if (n == 0) {
            if (op == ReduceOp::Max) throw Error(ErrorCode::InvalidArgument, "max of an empty array");
            return ctx.upload(HostArray::zeros(dtype, Shape{}));
        }
        const DeviceArray src = packed(ctx, a);
        const std::uint32_t groups = std::min<std::uint32_t>(ceil_div(n, kReduceThreads), kMaxPartials);
        const DeviceArray partials = ctx.empty(dtype, Shape{groups});
        const DeviceArray out = ctx.empty(dtype, Shape{});
        const auto pass1 = raw_kernel(ctx, "reduce_partial|" + tag, "reduce_partial_" + tag,
                                      [&] { return reduce_partial_source(dtype, op); });
        dispatch(ctx, *pass1, {src.buffer(), partials.buffer()}, {0, 0, 0, static_cast<std::uint32_t>(n)}, {groups, 1, 1});
        dispatch(ctx, *axis_kernel(), {partials.buffer(), out.buffer()}, {1, groups, 1, groups}, {1, 1, 1});
        return out;
    }

    std::int64_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < *axis; ++d) outer *= dims[d];
    for (std::size_t d = *axis + 1; d < dims.size(); ++d) inner *= dims[d];
    const std::int64_t len = dims[*axis];
    std::vector<std::int64_t> out_dims;
    for (std::size_t d = 0; d < dims.size(); ++d)
        if (d != *axis) out_dims.push_back(dims[d]);
    if (op == ReduceOp::Max && len == 0) throw Error(ErrorCode::InvalidArgument, "max over an empty axis");
    if (outer * inner == 0) return ctx.empty(dtype, Shape(out_dims));
    const DeviceArray src = packed(ctx, a);
    const DeviceArray out = ctx.empty(dtype, Shape(out_dims));
    const auto groups = static_cast<std::uint32_t>(std::min<std::int64_t>(outer * inner, 65535));
    dispatch(ctx, *axis_kernel(), {src.buffer(), out.buffer()},
             {static_cast<std::uint32_t>(outer), static_cast<std::uint32_t>(len), static_cast<std::uint32_t>(inner), 0},
             {groups, 1, 1});
    return out;
}

DeviceArray matmul(DeviceContext& ctx, const DeviceArray& a, const DeviceArray& b, MatmulVariant variant,
                   std::uint32_t tile) {
    if (a.dtype() != DType::F32 || b.dtype() != DType::F32) {
        throw Error(ErrorCode::DTypeMismatch, "matmul takes float32 operands");
    }
    if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw Error(ErrorCode::ShapeMismatch, fmt::format("cannot multiply {} by {}", a.shape().str(), b.shape().str()));
    }
    if (tile == 0 || tile > 16) throw Error(ErrorCode::InvalidArgument, fmt::format("tile size {} is outside [1, 16]", tile));
    const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    const DeviceArray out = ctx.empty(DType::F32, Shape{m, n});
    if (m == 0 || n == 0) return out;
    const DeviceArray pa = packed(ctx, a), pb = packed(ctx, b);
    const std::initializer_list<std::uint32_t> u = {static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(k),
                                                   static_cast<std::uint32_t>(n), 0};
    if (variant == MatmulVariant::Naive) {
        const auto kn = raw_kernel(ctx, "matmul|naive", "matmul_naive", matmul_naive_source);
        dispatch(ctx, *kn, {pa.buffer(), pb.buffer(), out.buffer()}, u, {ceil_div(n, 16), ceil_div(m, 16), 1});
    } else {
        const auto kn = raw_kernel(ctx, fmt::format("matmul|tiled|{}", tile), fmt::format("matmul_tiled_{}", tile),
                                   [tile] { return matmul_tiled_source(tile); });
        dispatch(ctx, *kn, {pa.buffer(), pb.buffer(), out.buffer()}, u, {ceil_div(n, tile), ceil_div(m, tile), 1});
    }
    return out;
}

}  // namespace ndgpu::ops
