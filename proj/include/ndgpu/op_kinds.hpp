#pragma once

#include <cstdint>
#include <string_view>

namespace ndgpu {

enum class BinaryOpKind : std::uint8_t { Add, Sub, Mul, Div, Maximum, Greater, Less, Equal };

enum class ReduceOp : std::uint8_t { Sum, Max };

enum class MatmulVariant : std::uint8_t { Naive, Tiled };

constexpr bool is_comparison(BinaryOpKind kind) noexcept {
    return kind == BinaryOpKind::Greater || kind == BinaryOpKind::Less || kind == BinaryOpKind::Equal;
}

std::string_view op_name(BinaryOpKind kind) noexcept;
std::string_view op_name(ReduceOp op) noexcept;
std::string_view op_name(MatmulVariant variant) noexcept;

}  // namespace ndgpu
