#include "ndgpu/array.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

namespace ndgpu {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::IncompatibleShapes: return "IncompatibleShapes";
        case ErrorCode::NotContiguous: return "NotContiguous";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::BadPermutation: return "BadPermutation";
        case ErrorCode::UnsupportedRank: return "UnsupportedRank";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NoAdapter: return "NoAdapter";
        case ErrorCode::AllocTooLarge: return "AllocTooLarge";
        case ErrorCode::OutOfMemory: return "OutOfMemory";
        case ErrorCode::DoubleFree: return "DoubleFree";
        case ErrorCode::UseAfterFree: return "UseAfterFree";
        case ErrorCode::DeviceLost: return "DeviceLost";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::ShaderCompileError: return "ShaderCompileError";
        case ErrorCode::DTypeMismatch: return "DTypeMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::IntegerDivisionUnsupported: return "IntegerDivisionUnsupported";
        case ErrorCode::AxisOutOfRange: return "AxisOutOfRange";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::BindError: return "BindError";
        case ErrorCode::ProtocolError: return "ProtocolError";
    }
    return "Unknown";
}

std::string_view dtype_name(DType dtype) noexcept {
    switch (dtype) {
        case DType::F32: return "float32";
        case DType::I32: return "int32";
        case DType::U32: return "uint32";
        case DType::Bool: return "bool";
    }
    return "?";
}

double decode_word(DType dtype, std::uint32_t word) noexcept {
    switch (dtype) {
        case DType::F32: return static_cast<double>(std::bit_cast<float>(word));
        case DType::I32: return static_cast<double>(static_cast<std::int32_t>(word));
        case DType::U32: return static_cast<double>(word);
        case DType::Bool: return word != 0 ? 1.0 : 0.0;
    }
    return 0.0;
}

namespace {

template <class Int>
Int saturating_trunc(double value) {
    if (std::isnan(value)) return 0;
    const double t = std::trunc(value);
    if (t <= static_cast<double>(std::numeric_limits<Int>::min())) return std::numeric_limits<Int>::min();
    if (t >= static_cast<double>(std::numeric_limits<Int>::max())) return std::numeric_limits<Int>::max();
    return static_cast<Int>(t);
}

}  // namespace

std::uint32_t encode_word(DType dtype, double value) noexcept {
    switch (dtype) {
        case DType::F32: return std::bit_cast<std::uint32_t>(static_cast<float>(value));
        case DType::I32: return static_cast<std::uint32_t>(saturating_trunc<std::int32_t>(value));
        case DType::U32: return saturating_trunc<std::uint32_t>(value);
        case DType::Bool: return value != 0.0 ? 1u : 0u;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Shape / Strides

Shape::Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() const {
    if (dims_.size() > kMaxRank) {
        throw Error(ErrorCode::UnsupportedRank,
                    "rank " + std::to_string(dims_.size()) + " exceeds " + std::to_string(kMaxRank));
    }
    std::int64_t count = 1;
    for (auto d : dims_) {
        if (d < 0) throw Error(ErrorCode::InvalidArgument, "negative extent in shape " + str());
        count *= d;
        if (count > kMaxElements) throw Error(ErrorCode::InvalidArgument, "shape " + str() + " has too many elements");
    }
}

std::int64_t Shape::element_count() const noexcept {
    std::int64_t count = 1;
    for (auto d : dims_) count *= d;
    return count;
}

namespace {

std::string join(const std::vector<std::int64_t>& v) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
    return os.str();
}

}  // namespace

std::string Shape::str() const { return join(dims_); }
std::string Strides::str() const { return join(steps_); }

// ---------------------------------------------------------------------------
// Descriptor operations

ArrayDescriptor ArrayDescriptor::contiguous(DType dtype, Shape shape, std::int64_t offset) {
    auto strides = contiguous_strides(shape);
    return ArrayDescriptor{dtype, std::move(shape), std::move(strides), offset};
}

bool ArrayDescriptor::is_contiguous() const noexcept {
    if (element_count() == 0) return true;
    std::int64_t expected = 1;
    for (std::size_t d = rank(); d-- > 0;) {
        if (shape[d] != 1 && strides[d] != expected) return false;
        expected *= shape[d];
    }
    return true;
}

std::int64_t ArrayDescriptor::address(std::span<const std::int64_t> index) const {
    std::int64_t addr = offset;
    for (std::size_t d = 0; d < index.size(); ++d) addr += index[d] * strides[d];
    return addr;
}

std::int64_t ArrayDescriptor::required_span() const noexcept {
    if (element_count() == 0) return 0;
    std::int64_t hi = offset;
    for (std::size_t d = 0; d < rank(); ++d) hi += (shape[d] - 1) * strides[d];
    return hi + 1;
}

Strides contiguous_strides(const Shape& shape) {
    std::vector<std::int64_t> steps(shape.rank());
    std::int64_t step = 1;
    for (std::size_t d = shape.rank(); d-- > 0;) {
        steps[d] = step;
        step *= shape[d];
    }
    return Strides(std::move(steps));
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.rank(), b.rank());
    std::vector<std::int64_t> out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::int64_t da = i < a.rank() ? a[a.rank() - 1 - i] : 1;
        const std::int64_t db = i < b.rank() ? b[b.rank() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw Error(ErrorCode::IncompatibleShapes, "cannot broadcast " + a.str() + " with " + b.str());
        }
        out[rank - 1 - i] = da == 1 ? db : da;
    }
    return Shape(std::move(out));
}

ArrayDescriptor broadcast_descriptor(const ArrayDescriptor& d, const Shape& target) {
    if (d.rank() > target.rank()) {
        throw Error(ErrorCode::IncompatibleShapes, "cannot broadcast " + d.shape.str() + " to " + target.str());
    }
    const std::size_t lead = target.rank() - d.rank();
    std::vector<std::int64_t> steps(target.rank(), 0);
    for (std::size_t i = 0; i < d.rank(); ++i) {
        const auto src = d.shape[i];
        const auto dst = target[lead + i];
        if (src == dst) {
            steps[lead + i] = d.strides[i];
        } else if (src == 1) {
            steps[lead + i] = 0;
        } else {
            throw Error(ErrorCode::IncompatibleShapes, "cannot broadcast " + d.shape.str() + " to " + target.str());
        }
    }
    return ArrayDescriptor{d.dtype, target, Strides(std::move(steps)), d.offset};
}

ArrayDescriptor reshape(const ArrayDescriptor& d, const Shape& new_shape) {
    if (!d.is_contiguous()) throw Error(ErrorCode::NotContiguous, "reshape requires a C-contiguous array");
    if (d.element_count() != new_shape.element_count()) {
        throw Error(ErrorCode::CountMismatch, "cannot reshape " + d.shape.str() + " into " + new_shape.str());
    }
    return ArrayDescriptor::contiguous(d.dtype, new_shape, d.offset);
}

namespace {

void check_permutation(std::span<const std::size_t> axes, std::size_t rank) {
    if (axes.size() != rank) throw Error(ErrorCode::BadPermutation, "permutation length does not match rank");
    std::vector<bool> seen(rank, false);
    for (auto a : axes) {
        if (a >= rank || seen[a]) throw Error(ErrorCode::BadPermutation, "axes are not a permutation");
        seen[a] = true;
    }
}

}  // namespace

ArrayDescriptor transpose(const ArrayDescriptor& d, std::span<const std::size_t> axes) {
    check_permutation(axes, d.rank());
    std::vector<std::int64_t> dims(d.rank()), steps(d.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        dims[i] = d.shape[axes[i]];
        steps[i] = d.strides[axes[i]];
    }
    return ArrayDescriptor{d.dtype, Shape(std::move(dims)), Strides(std::move(steps)), d.offset};
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> axes) {
    check_permutation(axes, axes.size());
    std::vector<std::size_t> inv(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = i;
    return inv;
}

// ---------------------------------------------------------------------------
// HostArray

HostArray::HostArray(ArrayDescriptor descriptor, std::shared_ptr<std::vector<std::uint32_t>> words)
        : desc_(std::move(descriptor)), data_(std::move(words)) {
    if (!data_) data_ = std::make_shared<std::vector<std::uint32_t>>();
    if (static_cast<std::int64_t>(data_->size()) < desc_.required_span()) {
        throw Error(ErrorCode::InvalidArgument, "storage smaller than the descriptor's span");
    }
}

HostArray HostArray::zeros(DType dtype, const Shape& shape) { return full(dtype, shape, 0.0); }

HostArray HostArray::full(DType dtype, const Shape& shape, double value) {
    auto words = std::make_shared<std::vector<std::uint32_t>>(shape.element_count(), encode_word(dtype, value));
    return HostArray(ArrayDescriptor::contiguous(dtype, shape), std::move(words));
}

HostArray HostArray::from_words(DType dtype, const Shape& shape, std::vector<std::uint32_t> words) {
    if (static_cast<std::int64_t>(words.size()) != shape.element_count()) {
        throw Error(ErrorCode::CountMismatch, "value count does not match shape " + shape.str());
    }
    return HostArray(ArrayDescriptor::contiguous(dtype, shape),
                     std::make_shared<std::vector<std::uint32_t>>(std::move(words)));
}

HostArray HostArray::from_f32(const Shape& shape, std::span<const float> values) {
    std::vector<std::uint32_t> w(values.size());
    std::transform(values.begin(), values.end(), w.begin(), [](float v) { return std::bit_cast<std::uint32_t>(v); });
    return from_words(DType::F32, shape, std::move(w));
}

HostArray HostArray::from_i32(const Shape& shape, std::span<const std::int32_t> values) {
    std::vector<std::uint32_t> w(values.begin(), values.end());
    return from_words(DType::I32, shape, std::move(w));
}

HostArray HostArray::from_u32(const Shape& shape, std::span<const std::uint32_t> values) {
    return from_words(DType::U32, shape, std::vector<std::uint32_t>(values.begin(), values.end()));
}

HostArray HostArray::from_bool(const Shape& shape, std::span<const std::uint8_t> values) {
    std::vector<std::uint32_t> w(values.size());
    std::transform(values.begin(), values.end(), w.begin(), [](std::uint8_t v) { return v ? 1u : 0u; });
    return from_words(DType::Bool, shape, std::move(w));
}

std::span<const std::uint32_t> HostArray::storage() const noexcept {
    if (!data_) return {};
    return std::span<const std::uint32_t>(*data_);
}

std::span<std::uint32_t> HostArray::mutable_storage() noexcept {
    if (!data_) return {};
    return std::span<std::uint32_t>(*data_);
}

std::uint32_t HostArray::word_at(std::int64_t linear) const {
    if (linear < 0 || linear >= size()) throw Error(ErrorCode::InvalidArgument, "element index out of range");
    std::int64_t addr = desc_.offset;
    for (std::size_t d = desc_.rank(); d-- > 0;) {
        const auto extent = desc_.shape[d];
        addr += (linear % extent) * desc_.strides[d];
        linear /= extent;
    }
    return (*data_)[static_cast<std::size_t>(addr)];
}

std::vector<std::uint32_t> HostArray::words() const {
    std::vector<std::uint32_t> out(static_cast<std::size_t>(size()));
    if (desc_.is_contiguous()) {
        std::copy_n(data_->begin() + desc_.offset, out.size(), out.begin());
        return out;
    }
    for_each_index(desc_.shape, [&](std::span<const std::int64_t> idx, std::int64_t linear) {
        out[static_cast<std::size_t>(linear)] = (*data_)[static_cast<std::size_t>(desc_.address(idx))];
    });
    return out;
}

std::vector<float> HostArray::to_f32() const {
    auto w = words();
    std::vector<float> out(w.size());
    std::transform(w.begin(), w.end(), out.begin(), [&](std::uint32_t v) {
        return static_cast<float>(decode_word(desc_.dtype, v));
    });
    return out;
}

std::vector<std::int32_t> HostArray::to_i32() const {
    auto w = words();
    std::vector<std::int32_t> out(w.size());
    std::transform(w.begin(), w.end(), out.begin(), [&](std::uint32_t v) {
        return desc_.dtype == DType::I32 ? static_cast<std::int32_t>(v)
                                         : static_cast<std::int32_t>(encode_word(DType::I32, decode_word(desc_.dtype, v)));
    });
    return out;
}

std::vector<double> HostArray::to_f64() const {
    auto w = words();
    std::vector<double> out(w.size());
    std::transform(w.begin(), w.end(), out.begin(), [&](std::uint32_t v) { return decode_word(desc_.dtype, v); });
    return out;
}

HostArray HostArray::contiguous() const { return from_words(desc_.dtype, desc_.shape, words()); }

HostArray HostArray::view(ArrayDescriptor descriptor) const { return HostArray(std::move(descriptor), data_); }

}  // namespace ndgpu
