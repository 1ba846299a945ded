#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ndgpu/error.hpp"

namespace ndgpu {

inline constexpr std::size_t kMaxRank = 4;
inline constexpr std::int64_t kMaxElements = 2147483647;  // 2^31 - 1

// All dtypes occupy one 32-bit word; Bool holds 0 or 1.
enum class DType : std::uint8_t { F32, I32, U32, Bool };

constexpr std::size_t itemsize(DType) noexcept { return 4; }
std::string_view dtype_name(DType dtype) noexcept;

// Bit-level conversion between a dtype's 32-bit storage word and a double.
double decode_word(DType dtype, std::uint32_t word) noexcept;
// Rounds to the nearest float for F32, truncates and saturates for integers, maps nonzero to 1 for Bool.
std::uint32_t encode_word(DType dtype, double value) noexcept;

class Shape {
 public:
    Shape() = default;
    Shape(std::initializer_list<std::int64_t> dims);
    explicit Shape(std::vector<std::int64_t> dims);

    std::size_t rank() const noexcept { return dims_.size(); }
    std::int64_t operator[](std::size_t axis) const { return dims_.at(axis); }
    const std::vector<std::int64_t>& dims() const noexcept { return dims_; }
    std::int64_t element_count() const noexcept;

    bool operator==(const Shape&) const = default;
    std::string str() const;

 private:
    void validate() const;

    std::vector<std::int64_t> dims_;
};

// Per-dimension steps measured in elements, not bytes.
class Strides {
 public:
    Strides() = default;
    Strides(std::initializer_list<std::int64_t> steps) : steps_(steps) {}
    explicit Strides(std::vector<std::int64_t> steps) : steps_(std::move(steps)) {}

    std::size_t rank() const noexcept { return steps_.size(); }
    std::int64_t operator[](std::size_t axis) const { return steps_.at(axis); }
    const std::vector<std::int64_t>& steps() const noexcept { return steps_; }

    bool operator==(const Strides&) const = default;
    std::string str() const;

 private:
    std::vector<std::int64_t> steps_;
};

struct ArrayDescriptor {
    DType dtype = DType::F32;
    Shape shape;
    Strides strides;
    std::int64_t offset = 0;

    static ArrayDescriptor contiguous(DType dtype, Shape shape, std::int64_t offset = 0);

    std::int64_t element_count() const noexcept { return shape.element_count(); }
    std::size_t rank() const noexcept { return shape.rank(); }
    bool is_contiguous() const noexcept;

    // offset + sum(index[d] * stride[d]); index must be in range.
    std::int64_t address(std::span<const std::int64_t> index) const;
    // Number of buffer elements the view can touch (highest address + 1), 0 for empty arrays.
    std::int64_t required_span() const noexcept;

    bool operator==(const ArrayDescriptor&) const = default;
};

Strides contiguous_strides(const Shape& shape);
Shape broadcast_shapes(const Shape& a, const Shape& b);
ArrayDescriptor broadcast_descriptor(const ArrayDescriptor& d, const Shape& target);
ArrayDescriptor reshape(const ArrayDescriptor& d, const Shape& new_shape);
ArrayDescriptor transpose(const ArrayDescriptor& d, std::span<const std::size_t> axes);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> axes);

// Visits every multi-index of `shape` in row-major order.
template <class Fn>
void for_each_index(const Shape& shape, Fn&& fn) {
    const auto n = shape.element_count();
    std::vector<std::int64_t> index(shape.rank(), 0);
    for (std::int64_t linear = 0; linear < n; ++linear) {
        fn(std::span<const std::int64_t>(index), linear);
        for (std::size_t d = shape.rank(); d-- > 0;) {
            if (++index[d] < shape[d]) break;
            index[d] = 0;
        }
    }
}

// Host-resident array. Views produced by reshape/transpose/broadcast share storage.
class HostArray {
 public:
    HostArray() = default;
    HostArray(ArrayDescriptor descriptor, std::shared_ptr<std::vector<std::uint32_t>> words);

    static HostArray zeros(DType dtype, const Shape& shape);
    static HostArray full(DType dtype, const Shape& shape, double value);
    static HostArray from_f32(const Shape& shape, std::span<const float> values);
    static HostArray from_i32(const Shape& shape, std::span<const std::int32_t> values);
    static HostArray from_u32(const Shape& shape, std::span<const std::uint32_t> values);
    static HostArray from_bool(const Shape& shape, std::span<const std::uint8_t> values);
    static HostArray from_words(DType dtype, const Shape& shape, std::vector<std::uint32_t> words);

    const ArrayDescriptor& descriptor() const noexcept { return desc_; }
    DType dtype() const noexcept { return desc_.dtype; }
    const Shape& shape() const noexcept { return desc_.shape; }
    std::int64_t size() const noexcept { return desc_.element_count(); }

    // Underlying storage, indexed by element address.
    std::span<const std::uint32_t> storage() const noexcept;
    std::span<std::uint32_t> mutable_storage() noexcept;

    // Logical element in row-major order, honoring strides and offset.
    std::uint32_t word_at(std::int64_t linear) const;
    double value_at(std::int64_t linear) const { return decode_word(desc_.dtype, word_at(linear)); }

    // Materialized logical contents in row-major order.
    std::vector<std::uint32_t> words() const;
    std::vector<float> to_f32() const;
    std::vector<std::int32_t> to_i32() const;
    std::vector<double> to_f64() const;

    HostArray contiguous() const;
    HostArray view(ArrayDescriptor descriptor) const;

 private:
    ArrayDescriptor desc_;
    std::shared_ptr<std::vector<std::uint32_t>> data_;
};

}  // namespace ndgpu
