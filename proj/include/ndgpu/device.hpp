#pragma once

// Device context: adapter/device/queue ownership, the size-classed buffer pool,
// the kernel cache, command recording and the blocking readback bridge.

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ndgpu/array.hpp"
#include "ndgpu/soft/device.hpp"

namespace ndgpu {

struct ContextConfig {
    std::uint64_t pool_cap = 256ull << 20;        // bytes kept in the pool; 0 disables pooling
    std::uint64_t max_allocation = 256ull << 20;  // largest single allocation
    std::uint32_t workgroup_size = 64;
    std::uint32_t grid_stride_factor = 1;  // elements per invocation before the grid-stride loop wraps
    std::uint32_t auto_submit_dispatches = 16;  // recorded dispatches before an implicit submit
    std::uint64_t memory_budget = 4ull << 30;   // total device bytes before OutOfMemory
    std::chrono::milliseconds readback_timeout{60000};
    std::string shader_dump_dir;  // when set, every compiled shader is written here
    int max_threads = 0;          // software adapter threads; 0 means the OpenMP default
};

// Applies NDGPU_DISABLE_POOL (pool_cap = 0) and NDGPU_DUMP_SHADERS (dump directory).
ContextConfig apply_env_overrides(ContextConfig config);

struct Counters {
    std::uint64_t allocations = 0;
    std::uint64_t pool_hits = 0;
    std::uint64_t compilations = 0;
    std::uint64_t submissions = 0;
};

struct PoolStats {
    std::map<std::uint64_t, std::size_t> buckets;  // size class -> free buffers
    std::uint64_t bytes_resident = 0;
    std::uint64_t high_watermark = 0;
};

class DeviceContext;
struct CompiledKernel;

namespace detail {
struct BufferState;
}

class BufferHandle {
 public:
    BufferHandle() = default;

    std::uint64_t id() const noexcept;
    std::uint64_t capacity() const noexcept;
    bool live() const noexcept;
    explicit operator bool() const noexcept { return static_cast<bool>(state_); }
    bool operator==(const BufferHandle& o) const noexcept { return state_ == o.state_; }

 private:
    friend class DeviceContext;
    explicit BufferHandle(std::shared_ptr<detail::BufferState> s) : state_(std::move(s)) {}
    std::shared_ptr<detail::BufferState> state_;
};

// GPU-resident array. Copies share the buffer; the buffer returns to the pool when
// the last array referencing it is destroyed, unless it was freed explicitly first.
class DeviceArray {
 public:
    DeviceArray() = default;

    const ArrayDescriptor& descriptor() const noexcept { return desc_; }
    DType dtype() const noexcept { return desc_.dtype; }
    const Shape& shape() const noexcept { return desc_.shape; }
    std::int64_t size() const noexcept { return desc_.element_count(); }
    const BufferHandle& buffer() const;
    DeviceContext& context() const;
    bool valid() const noexcept { return static_cast<bool>(owner_); }

    // Views sharing the buffer.
    DeviceArray view(ArrayDescriptor desc) const;
    DeviceArray reshape(const Shape& shape) const;
    DeviceArray transpose(std::span<const std::size_t> axes) const;
    DeviceArray broadcast_to(const Shape& shape) const;

 private:
    friend class DeviceContext;
    struct Owner;
    DeviceArray(ArrayDescriptor desc, std::shared_ptr<Owner> owner) : desc_(std::move(desc)), owner_(std::move(owner)) {}

    ArrayDescriptor desc_;
    std::shared_ptr<Owner> owner_;
};

class DeviceContext : public std::enable_shared_from_this<DeviceContext> {
 public:
    ~DeviceContext();
    DeviceContext(const DeviceContext&) = delete;
    DeviceContext& operator=(const DeviceContext&) = delete;

    const ContextConfig& config() const noexcept { return config_; }
    const gpu::AdapterInfo& adapter_info() const noexcept { return device_->adapter_info(); }
    gpu::Device& device() noexcept { return *device_; }

    BufferHandle alloc(std::uint64_t bytes);
    void free(const BufferHandle& handle);

    DeviceArray upload(const HostArray& host);
    // Contiguous array with unspecified contents.
    DeviceArray empty(DType dtype, const Shape& shape);
    // Blocks until all work affecting `arr` has finished and the data is in host memory.
    HostArray readback_blocking(const DeviceArray& arr);
    void submit();

    Counters counters() const;
    PoolStats pool_stats() const;
    std::size_t pending_dispatches() const;

    // ---- used by kernel-codegen and ops
    struct Binding {
        BufferHandle buffer;
        std::uint64_t offset = 0;  // bytes
        std::uint64_t size = 0;    // bytes; 0 = rest of the buffer
    };
    // Records one dispatch; binding i goes to @group(0) @binding(i).
    void record_dispatch(const gpu::ComputePipelinePtr& pipeline, std::span<const Binding> bindings,
                         std::array<std::uint32_t, 3> groups);
    // A uniform buffer holding `words`, released after the current recording is submitted.
    BufferHandle upload_uniform(std::span<const std::uint32_t> words);
    // Returns the cached kernel for `key`, or calls `make` (counted as one compilation).
    std::shared_ptr<const CompiledKernel> kernel_cache_get(const std::string& key,
                                                           const std::function<std::shared_ptr<const CompiledKernel>()>& make);
    std::size_t kernel_cache_size() const;
    // Compiles WGSL into a pipeline; throws ShaderCompileError with the compiler output.
    gpu::ComputePipelinePtr compile_pipeline(const std::string& source, const std::string& label,
                                             const std::string& entry = "main");
    // One-element array holding `bits`, cached per (dtype, bits).
    DeviceArray scalar(DType dtype, std::uint32_t bits);
    // Wraps a handle as an array; the array takes ownership of the buffer.
    DeviceArray adopt(BufferHandle handle, ArrayDescriptor desc);

 private:
    friend std::shared_ptr<DeviceContext> create_context(const ContextConfig& config);
    friend struct DeviceArray::Owner;
    DeviceContext(ContextConfig config, gpu::DevicePtr device);

    enum class Kind : std::uint8_t { Storage, Uniform, Staging };
    BufferHandle alloc_kind(std::uint64_t bytes, Kind kind);
    void release_locked(const std::shared_ptr<detail::BufferState>& s);
    void release_deferred_locked();
    void submit_locked();
    void check_device() const;
    void check_live(const BufferHandle& h, const char* what) const;

    ContextConfig config_;
    gpu::DevicePtr device_;

    mutable std::recursive_mutex mu_;
    std::uint64_t next_id_ = 1;
    std::uint64_t epoch_ = 1;  // increments on every submit
    std::map<std::pair<Kind, std::uint64_t>, std::vector<gpu::BufferPtr>> pool_;
    std::vector<std::shared_ptr<detail::BufferState>> deferred_;
    std::uint64_t bytes_resident_ = 0;
    std::uint64_t high_watermark_ = 0;
    Counters counters_;

    std::unique_ptr<gpu::CommandEncoder> encoder_;
    std::size_t recorded_ = 0;

    std::unordered_map<std::string, std::shared_ptr<const CompiledKernel>> kernels_;
    std::map<std::pair<DType, std::uint32_t>, DeviceArray> scalars_;
};

using ContextPtr = std::shared_ptr<DeviceContext>;

// Throws Error(NoAdapter) when no compute adapter is available.
ContextPtr create_context(const ContextConfig& config = {});

}  // namespace ndgpu
