#include "ndgpu/host_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ndgpu {

std::string_view op_name(BinaryOpKind kind) noexcept {
    switch (kind) {
        case BinaryOpKind::Add: return "add";
        case BinaryOpKind::Sub: return "sub";
        case BinaryOpKind::Mul: return "mul";
        case BinaryOpKind::Div: return "div";
        case BinaryOpKind::Maximum: return "maximum";
        case BinaryOpKind::Greater: return "greater";
        case BinaryOpKind::Less: return "less";
        case BinaryOpKind::Equal: return "equal";
    }
    return "?";
}

std::string_view op_name(ReduceOp op) noexcept { return op == ReduceOp::Sum ? "sum" : "max"; }

std::string_view op_name(MatmulVariant variant) noexcept {
    return variant == MatmulVariant::Naive ? "naive" : "tiled";
}

namespace host {

HostArray eval_elementwise(const ElementFn& op, std::span<const HostArray> inputs, DType out_dtype) {
    Shape out_shape;
    for (const auto& in : inputs) out_shape = broadcast_shapes(out_shape, in.shape());

    std::vector<ArrayDescriptor> views;
    views.reserve(inputs.size());
    for (const auto& in : inputs) views.push_back(broadcast_descriptor(in.descriptor(), out_shape));

    std::vector<std::uint32_t> out(static_cast<std::size_t>(out_shape.element_count()));
    std::vector<double> args(inputs.size());
    for_each_index(out_shape, [&](std::span<const std::int64_t> idx, std::int64_t linear) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const auto word = inputs[k].storage()[static_cast<std::size_t>(views[k].address(idx))];
            args[k] = decode_word(inputs[k].dtype(), word);
        }
        out[static_cast<std::size_t>(linear)] = encode_word(out_dtype, op(args));
    });
    return HostArray::from_words(out_dtype, out_shape, std::move(out));
}

HostArray eval_elementwise(const ElementFn& op, std::initializer_list<HostArray> inputs, DType out_dtype) {
    return eval_elementwise(op, std::span<const HostArray>(inputs.begin(), inputs.size()), out_dtype);
}

double apply_binary(BinaryOpKind kind, double x, double y) {
    switch (kind) {
        case BinaryOpKind::Add: return x + y;
        case BinaryOpKind::Sub: return x - y;
        case BinaryOpKind::Mul: return x * y;
        case BinaryOpKind::Div: return x / y;
        case BinaryOpKind::Maximum: return std::max(x, y);
        case BinaryOpKind::Greater: return x > y ? 1.0 : 0.0;
        case BinaryOpKind::Less: return x < y ? 1.0 : 0.0;
        case BinaryOpKind::Equal: return x == y ? 1.0 : 0.0;
    }
    return 0.0;
}

namespace {

void check_binary_dtypes(BinaryOpKind kind, DType a, DType b) {
    if (a != b) {
        throw Error(ErrorCode::DTypeMismatch,
                    std::string(dtype_name(a)) + " vs " + std::string(dtype_name(b)) + " (cast explicitly)");
    }
    if (kind == BinaryOpKind::Div && a != DType::F32) {
        throw Error(ErrorCode::IntegerDivisionUnsupported, "division requires float32 operands");
    }
    if (a == DType::Bool && !is_comparison(kind)) {
        throw Error(ErrorCode::DTypeMismatch, "arithmetic on bool arrays is not supported");
    }
}

}  // namespace

HostArray binary(BinaryOpKind kind, const HostArray& a, const HostArray& b) {
    check_binary_dtypes(kind, a.dtype(), b.dtype());
    const DType out = is_comparison(kind) ? DType::Bool : a.dtype();
    return eval_elementwise([kind](std::span<const double> v) { return apply_binary(kind, v[0], v[1]); }, {a, b},
                            out);
}

HostArray binary(BinaryOpKind kind, const HostArray& a, double scalar) {
    const auto word = encode_word(a.dtype(), scalar);
    return binary(kind, a, HostArray::from_words(a.dtype(), Shape{}, {word}));
}

HostArray where(const HostArray& cond, const HostArray& a, const HostArray& b) {
    if (a.dtype() != b.dtype()) throw Error(ErrorCode::DTypeMismatch, "where branches must share a dtype");
    const HostArray ins[] = {cond, a, b};
    const DType out = a.dtype();
    // Select raw words so that the result is bit-exact (no double round trip).
    Shape shape = broadcast_shapes(broadcast_shapes(cond.shape(), a.shape()), b.shape());
    std::vector<ArrayDescriptor> views;
    for (const auto& in : ins) views.push_back(broadcast_descriptor(in.descriptor(), shape));
    std::vector<std::uint32_t> words(static_cast<std::size_t>(shape.element_count()));
    for_each_index(shape, [&](std::span<const std::int64_t> idx, std::int64_t linear) {
        const auto c = cond.storage()[static_cast<std::size_t>(views[0].address(idx))];
        const auto& src = c != 0 ? a : b;
        const auto& view = c != 0 ? views[1] : views[2];
        words[static_cast<std::size_t>(linear)] = src.storage()[static_cast<std::size_t>(view.address(idx))];
    });
    return HostArray::from_words(out, shape, std::move(words));
}

HostArray astype(const HostArray& a, DType to) {
    if (a.dtype() == to) return a.contiguous();
    return eval_elementwise([](std::span<const double> v) { return v[0]; }, {a}, to);
}

HostArray reduce(const HostArray& a, ReduceOp op, std::optional<std::size_t> axis) {
    if (a.dtype() != DType::F32 && a.dtype() != DType::I32) {
        throw Error(ErrorCode::DTypeMismatch, "reductions take float32 or int32 input");
    }
    if (axis && *axis >= a.shape().rank()) {
        throw Error(ErrorCode::AxisOutOfRange, "axis " + std::to_string(*axis) + " out of range for rank " +
                                                   std::to_string(a.shape().rank()));
    }
    const auto values = a.to_f64();
    const auto combine = [op](double acc, double v) { return op == ReduceOp::Sum ? acc + v : std::max(acc, v); };
    const double init = op == ReduceOp::Sum ? 0.0 : -std::numeric_limits<double>::infinity();

    if (!axis) {
        if (op == ReduceOp::Max && values.empty()) throw Error(ErrorCode::InvalidArgument, "max of an empty array");
        double acc = init;
        for (double v : values) acc = combine(acc, v);
        return HostArray::full(a.dtype(), Shape{}, acc);
    }

    const auto& dims = a.shape().dims();
    const std::int64_t len = dims[*axis];
    if (op == ReduceOp::Max && len == 0) throw Error(ErrorCode::InvalidArgument, "max over an empty axis");
    std::int64_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < *axis; ++d) outer *= dims[d];
    for (std::size_t d = *axis + 1; d < dims.size(); ++d) inner *= dims[d];

    std::vector<std::int64_t> out_dims;
    for (std::size_t d = 0; d < dims.size(); ++d)
        if (d != *axis) out_dims.push_back(dims[d]);
    std::vector<std::uint32_t> out(static_cast<std::size_t>(outer * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            double acc = init;
            for (std::int64_t k = 0; k < len; ++k) acc = combine(acc, values[static_cast<std::size_t>((o * len + k) * inner + i)]);
            out[static_cast<std::size_t>(o * inner + i)] = encode_word(a.dtype(), acc);
        }
    }
    return HostArray::from_words(a.dtype(), Shape(std::move(out_dims)), std::move(out));
}

HostArray matmul(const HostArray& a, const HostArray& b) {
    if (a.dtype() != DType::F32 || b.dtype() != DType::F32) {
        throw Error(ErrorCode::DTypeMismatch, "matmul takes float32 operands");
    }
    if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw Error(ErrorCode::ShapeMismatch, "cannot multiply " + a.shape().str() + " by " + b.shape().str());
    }
    const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    const auto av = a.to_f64();
    const auto bv = b.to_f64();
    std::vector<std::uint32_t> out(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p)
                acc += av[static_cast<std::size_t>(i * k + p)] * bv[static_cast<std::size_t>(p * n + j)];
            out[static_cast<std::size_t>(i * n + j)] = encode_word(DType::F32, acc);
        }
    }
    return HostArray::from_words(DType::F32, Shape{m, n}, std::move(out));
}

}  // namespace host
}  // namespace ndgpu
