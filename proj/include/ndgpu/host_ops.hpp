#pragma once

// Serial host reference for every device operation. Arithmetic runs in double
// precision and rounds to the output dtype once per operation.

#include <functional>
#include <optional>
#include <span>

#include "ndgpu/array.hpp"
#include "ndgpu/op_kinds.hpp"

namespace ndgpu::host {

using ElementFn = std::function<double(std::span<const double>)>;

// Broadcasts all inputs to a common shape and applies `op` per element.
HostArray eval_elementwise(const ElementFn& op, std::span<const HostArray> inputs, DType out_dtype);
HostArray eval_elementwise(const ElementFn& op, std::initializer_list<HostArray> inputs, DType out_dtype);

HostArray binary(BinaryOpKind kind, const HostArray& a, const HostArray& b);
HostArray binary(BinaryOpKind kind, const HostArray& a, double scalar);
HostArray where(const HostArray& cond, const HostArray& a, const HostArray& b);
HostArray astype(const HostArray& a, DType to);
// Without an axis the result is a scalar (rank 0); with an axis that dimension is removed.
HostArray reduce(const HostArray& a, ReduceOp op, std::optional<std::size_t> axis = std::nullopt);
HostArray matmul(const HostArray& a, const HostArray& b);

double apply_binary(BinaryOpKind kind, double x, double y);

}  // namespace ndgpu::host
