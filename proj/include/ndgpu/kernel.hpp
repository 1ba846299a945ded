#pragma once

// User-defined elementwise kernels: a parameter-declaration DSL plus a WGSL
// statement snippet, expanded into a complete compute shader.
//
// Inside the snippet every in-param name is bound to its loaded element, every
// out-param name is a local variable stored after the snippet runs, and `i`
// (u32) is the linear output index unless a parameter already uses that name.
// The raw bindings are reachable as ek_in_<name> / ek_out_<name>. Bool
// params are u32 words (0 or 1); out-params of dtype bool are normalized to 0/1.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ndgpu/array.hpp"
#include "ndgpu/device.hpp"

namespace ndgpu {

struct ParamDecl {
    DType dtype = DType::F32;
    std::string name;

    bool operator==(const ParamDecl&) const = default;
};

// "float32 x, f32 y" -> [(F32, x), (F32, y)]. Throws ParseError.
std::vector<ParamDecl> parse_params(std::string_view decl);

struct KernelSpec {
    std::string name;
    std::vector<ParamDecl> in_params;
    std::vector<ParamDecl> out_params;
    std::string operation;
    std::vector<ParamDecl> constants;  // substituted into the operation at compile time

    static KernelSpec make(std::string name, std::string_view in_params, std::string_view out_params,
                           std::string operation, std::string_view constants = {});
};

// Values for KernelSpec::constants, by name.
using ConstantValues = std::map<std::string, double>;

inline constexpr std::size_t kMaxBoundArrays = 8;
inline constexpr std::uint32_t kLaunchMetaWords = 48;

// Throws UnsupportedRank (rank > 4) or InvalidArgument for malformed specs.
std::string generate_source(const KernelSpec& spec, std::size_t rank, std::uint32_t workgroup_size = 64,
                            const ConstantValues& constants = {});

struct CompiledKernel {
    std::string name;
    std::string key;
    std::uint64_t key_hash = 0;
    std::string source;
    gpu::ComputePipelinePtr pipeline;
    std::uint32_t workgroup_size = 64;
    std::size_t rank = 0;
    KernelSpec spec;
};

std::string kernel_cache_key(const KernelSpec& spec, std::size_t rank, std::uint32_t workgroup_size,
                             const ConstantValues& constants);

std::shared_ptr<const CompiledKernel> compile_or_get(DeviceContext& ctx, const KernelSpec& spec, std::size_t rank,
                                                     const ConstantValues& constants = {});

// Index metadata after merging dimensions that are contiguous for every array.
struct LaunchMeta {
    std::int64_t total = 0;
    std::size_t rank = 0;
    std::array<std::int64_t, kMaxRank> out_shape{};
    std::vector<std::array<std::int64_t, kMaxRank>> strides;  // per array: inputs then outputs
    std::vector<std::int64_t> offsets;

    std::array<std::uint32_t, kLaunchMetaWords> pack() const;
};

// Throws ShapeMismatch if outputs differ in shape or an input does not broadcast to it.
LaunchMeta make_launch_meta(std::span<const ArrayDescriptor> inputs, std::span<const ArrayDescriptor> outputs);

// Records one dispatch. Throws DTypeMismatch, ShapeMismatch, UseAfterFree.
void launch(DeviceContext& ctx, const CompiledKernel& kernel, std::span<const DeviceArray> inputs,
            std::span<const DeviceArray> outputs, const LaunchMeta& meta);

// Workgroup count for `total` elements, clamped to the per-dimension limit. Zero for an empty launch.
std::uint32_t dispatch_groups(std::int64_t total, std::uint32_t workgroup_size, std::uint32_t grid_stride_factor,
                              std::uint32_t limit = 65535);

class ElementwiseKernel {
 public:
    ElementwiseKernel(std::string_view in_params, std::string_view out_params, std::string operation,
                      std::string name, std::string_view constants = {});
    explicit ElementwiseKernel(KernelSpec spec) : spec_(std::move(spec)) {}

    const KernelSpec& spec() const noexcept { return spec_; }

    // Allocates outputs of the broadcast input shape.
    std::vector<DeviceArray> operator()(DeviceContext& ctx, std::span<const DeviceArray> inputs,
                                        const ConstantValues& constants = {}) const;
    DeviceArray operator()(DeviceContext& ctx, std::initializer_list<DeviceArray> inputs,
                           const ConstantValues& constants = {}) const;
    // Writes into caller-provided outputs.
    void run(DeviceContext& ctx, std::span<const DeviceArray> inputs, std::span<const DeviceArray> outputs,
             const ConstantValues& constants = {}) const;

 private:
    KernelSpec spec_;
};

// C-contiguous copy of `arr` made on the device (identity gather).
DeviceArray materialize(DeviceContext& ctx, const DeviceArray& arr);

}  // namespace ndgpu
