#include <algorithm>

#include <fmt/format.h>

#include "ndgpu/kernel.hpp"

namespace ndgpu {

LaunchMeta make_launch_meta(std::span<const ArrayDescriptor> inputs, std::span<const ArrayDescriptor> outputs) {
    if (outputs.empty()) throw Error(ErrorCode::InvalidArgument, "a launch needs at least one output");
    if (inputs.size() + outputs.size() > kMaxBoundArrays) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("at most {} arrays can be bound", kMaxBoundArrays));
    }
    const Shape& out_shape = outputs[0].shape;
    std::vector<ArrayDescriptor> all;
    for (const auto& in : inputs) {
        try {
            all.push_back(broadcast_descriptor(in, out_shape));
        } catch (const Error&) {
            throw Error(ErrorCode::ShapeMismatch,
                        fmt::format("input shape {} does not broadcast to {}", in.shape.str(), out_shape.str()));
        }
    }
    for (const auto& out : outputs) {
        if (out.shape != out_shape) {
            throw Error(ErrorCode::ShapeMismatch,
                        fmt::format("output shapes differ: {} vs {}", out.shape.str(), out_shape.str()));
        }
        all.push_back(out);
    }

    // Drop unit dims, then merge neighbours that are contiguous in every array.
    std::vector<std::int64_t> dims;
    std::vector<std::vector<std::int64_t>> strides(all.size());
    for (std::size_t d = 0; d < out_shape.rank(); ++d) {
        if (out_shape[d] == 1) continue;
        dims.push_back(out_shape[d]);
        for (std::size_t k = 0; k < all.size(); ++k) strides[k].push_back(all[k].strides[d]);
    }
    for (std::size_t d = dims.size(); d-- > 1;) {
        bool ok = true;
        for (std::size_t k = 0; k < all.size() && ok; ++k) ok = strides[k][d - 1] == strides[k][d] * dims[d];
        if (!ok) continue;
        dims[d - 1] *= dims[d];
        dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(d));
        for (auto& st : strides) {
            st[d - 1] = st[d];
            st.erase(st.begin() + static_cast<std::ptrdiff_t>(d));
        }
    }

    LaunchMeta meta;
    meta.total = out_shape.element_count();
    meta.rank = dims.size();
    std::copy(dims.begin(), dims.end(), meta.out_shape.begin());
    for (std::size_t k = 0; k < all.size(); ++k) {
        std::array<std::int64_t, kMaxRank> st{};
        std::copy(strides[k].begin(), strides[k].end(), st.begin());
        meta.strides.push_back(st);
        meta.offsets.push_back(all[k].offset);
    }
    return meta;
}

std::array<std::uint32_t, kLaunchMetaWords> LaunchMeta::pack() const {
    std::array<std::uint32_t, kLaunchMetaWords> w{};
    w[0] = static_cast<std::uint32_t>(total);
    for (std::size_t d = 0; d < rank; ++d) w[4 + d] = static_cast<std::uint32_t>(out_shape[d]);
    for (std::size_t k = 0; k < strides.size(); ++k)
        for (std::size_t d = 0; d < rank; ++d) w[8 + 4 * k + d] = static_cast<std::uint32_t>(strides[k][d]);
    for (std::size_t k = 0; k < offsets.size(); ++k) w[40 + k] = static_cast<std::uint32_t>(offsets[k]);
    return w;
}

std::uint32_t dispatch_groups(std::int64_t total, std::uint32_t workgroup_size, std::uint32_t grid_stride_factor,
                              std::uint32_t limit) {
    if (total <= 0) return 0;
    const std::int64_t per_group = static_cast<std::int64_t>(workgroup_size) * std::max<std::uint32_t>(1, grid_stride_factor);
    const std::int64_t groups = (total + per_group - 1) / per_group;
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(groups, 1, limit));
}

void launch(DeviceContext& ctx, const CompiledKernel& kernel, std::span<const DeviceArray> inputs,
            std::span<const DeviceArray> outputs, const LaunchMeta& meta) {
    const auto& spec = kernel.spec;
    if (inputs.size() != spec.in_params.size() || outputs.size() != spec.out_params.size()) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("kernel '{}' takes {} inputs and {} outputs, got {} and {}", spec.name,
                                spec.in_params.size(), spec.out_params.size(), inputs.size(), outputs.size()));
    }
    auto check_dtype = [&](const DeviceArray& a, const ParamDecl& p) {
        if (a.dtype() != p.dtype) {
            throw Error(ErrorCode::DTypeMismatch, fmt::format("kernel '{}': param '{}' is {} but the array is {}",
                                                              spec.name, p.name, dtype_name(p.dtype), dtype_name(a.dtype())));
        }
    };
    for (std::size_t k = 0; k < inputs.size(); ++k) check_dtype(inputs[k], spec.in_params[k]);
    for (std::size_t k = 0; k < outputs.size(); ++k) check_dtype(outputs[k], spec.out_params[k]);
    if (meta.rank != kernel.rank) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("launch metadata has rank {} but the kernel was built for rank {}", meta.rank, kernel.rank));
    }
    if (meta.total == 0) return;

    std::vector<DeviceContext::Binding> bindings;
    for (const auto& a : inputs) bindings.push_back({a.buffer(), 0, 0});
    for (const auto& a : outputs) bindings.push_back({a.buffer(), 0, 0});
    const auto words = meta.pack();
    BufferHandle uniform = ctx.upload_uniform(words);
    bindings.push_back({uniform, 0, 0});
    const auto limit = ctx.device().limits().max_compute_workgroups_per_dimension;
    const std::uint32_t groups = dispatch_groups(meta.total, kernel.workgroup_size, ctx.config().grid_stride_factor, limit);
    try {
        ctx.record_dispatch(kernel.pipeline, bindings, {groups, 1, 1});
    } catch (...) {
        ctx.free(uniform);
        throw;
    }
    ctx.free(uniform);
}

ElementwiseKernel::ElementwiseKernel(std::string_view in_params, std::string_view out_params, std::string operation,
                                     std::string name, std::string_view constants)
    : spec_(KernelSpec::make(std::move(name), in_params, out_params, std::move(operation), constants)) {}

void ElementwiseKernel::run(DeviceContext& ctx, std::span<const DeviceArray> inputs, std::span<const DeviceArray> outputs,
                            const ConstantValues& constants) const {
    std::vector<ArrayDescriptor> ins;
    std::vector<ArrayDescriptor> outs;
    for (const auto& a : inputs) ins.push_back(a.descriptor());
    for (const auto& a : outputs) outs.push_back(a.descriptor());
    const LaunchMeta meta = make_launch_meta(ins, outs);
    const auto kernel = compile_or_get(ctx, spec_, meta.rank, constants);
    launch(ctx, *kernel, inputs, outputs, meta);
}

std::vector<DeviceArray> ElementwiseKernel::operator()(DeviceContext& ctx, std::span<const DeviceArray> inputs,
                                                       const ConstantValues& constants) const {
    if (inputs.size() != spec_.in_params.size()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("kernel '{}' takes {} inputs, got {}", spec_.name,
                                                            spec_.in_params.size(), inputs.size()));
    }
    Shape shape;
    for (std::size_t k = 0; k < inputs.size(); ++k) shape = k == 0 ? inputs[k].shape() : broadcast_shapes(shape, inputs[k].shape());
    std::vector<DeviceArray> outputs;
    for (const auto& p : spec_.out_params) outputs.push_back(ctx.empty(p.dtype, shape));
    run(ctx, inputs, outputs, constants);
    return outputs;
}

DeviceArray ElementwiseKernel::operator()(DeviceContext& ctx, std::initializer_list<DeviceArray> inputs,
                                          const ConstantValues& constants) const {
    if (spec_.out_params.size() != 1) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("kernel '{}' has {} outputs", spec_.name, spec_.out_params.size()));
    }
    return (*this)(ctx, std::span<const DeviceArray>(inputs.begin(), inputs.size()), constants).front();
}

DeviceArray materialize(DeviceContext& ctx, const DeviceArray& arr) {
    static const ElementwiseKernel copy("u32 x", "u32 z", "z = x;", "ek_copy");
    ArrayDescriptor src = arr.descriptor();
    src.dtype = DType::U32;
    DeviceArray out = ctx.empty(DType::U32, arr.shape());
    const DeviceArray in = arr.view(src);
    copy.run(ctx, std::span<const DeviceArray>(&in, 1), std::span<const DeviceArray>(&out, 1));
    ArrayDescriptor dst = out.descriptor();
    dst.dtype = arr.dtype();
    return out.view(dst);
}

}  // namespace ndgpu
