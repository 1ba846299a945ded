#pragma once

// Built-in device operations. No dtype promotion: mixed dtypes are an error,
// cast explicitly with astype.

#include <optional>

#include "ndgpu/device.hpp"
#include "ndgpu/op_kinds.hpp"

namespace ndgpu::ops {

// Comparisons return Bool; arithmetic keeps the operand dtype. Div is float32 only.
DeviceArray binary(DeviceContext& ctx, BinaryOpKind kind, const DeviceArray& a, const DeviceArray& b);
// `scalar` is encoded in a's dtype and broadcast as a stride-0 view.
DeviceArray binary(DeviceContext& ctx, BinaryOpKind kind, const DeviceArray& a, double scalar);

// cond != 0 ? a : b, bit-exact.
DeviceArray where(DeviceContext& ctx, const DeviceArray& cond, const DeviceArray& a, const DeviceArray& b);

// float -> int truncates toward zero and saturates; identity returns a copy.
DeviceArray astype(DeviceContext& ctx, const DeviceArray& a, DType to);

// float32 or int32 input. Full reduction yields shape []; an axis reduction drops that axis.
DeviceArray reduce(DeviceContext& ctx, const DeviceArray& a, ReduceOp op, std::optional<std::size_t> axis = std::nullopt);

// [m,k] x [k,n] float32. Non-contiguous operands are materialized first. tile in [1, 16].
DeviceArray matmul(DeviceContext& ctx, const DeviceArray& a, const DeviceArray& b,
                   MatmulVariant variant = MatmulVariant::Tiled, std::uint32_t tile = 16);

inline DeviceArray add(DeviceContext& c, const DeviceArray& a, const DeviceArray& b) { return binary(c, BinaryOpKind::Add, a, b); }
inline DeviceArray sub(DeviceContext& c, const DeviceArray& a, const DeviceArray& b) { return binary(c, BinaryOpKind::Sub, a, b); }
inline DeviceArray mul(DeviceContext& c, const DeviceArray& a, const DeviceArray& b) { return binary(c, BinaryOpKind::Mul, a, b); }
inline DeviceArray div(DeviceContext& c, const DeviceArray& a, const DeviceArray& b) { return binary(c, BinaryOpKind::Div, a, b); }

}  // namespace ndgpu::ops
