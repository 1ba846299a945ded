#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "ndgpu/device.hpp"
#include "ndgpu/kernel.hpp"

namespace ndgpu {

namespace detail {

struct BufferState {
    std::uint64_t id = 0;
    std::uint64_t capacity = 0;
    std::uint8_t kind = 0;
    gpu::BufferPtr buffer;
    std::atomic<bool> live{true};
    std::uint64_t last_epoch = 0;  // recording epoch that last referenced the buffer
};

}  // namespace detail

namespace {

constexpr std::uint64_t kMinClass = 256;

std::uint64_t size_class(std::uint64_t bytes) { return std::max(kMinClass, std::bit_ceil(bytes)); }

bool env_set(const char* name) {
    const char* v = std::getenv(name);
    return v && *v && std::string_view(v) != "0";
}

}  // namespace

ContextConfig apply_env_overrides(ContextConfig config) {
    if (env_set("NDGPU_DISABLE_POOL")) config.pool_cap = 0;
    if (const char* dir = std::getenv("NDGPU_DUMP_SHADERS"); dir && *dir) config.shader_dump_dir = dir;
    return config;
}

// ---------------------------------------------------------------- BufferHandle

std::uint64_t BufferHandle::id() const noexcept { return state_ ? state_->id : 0; }
std::uint64_t BufferHandle::capacity() const noexcept { return state_ ? state_->capacity : 0; }
bool BufferHandle::live() const noexcept { return state_ && state_->live.load(); }

// ---------------------------------------------------------------- DeviceArray

struct DeviceArray::Owner {
    BufferHandle handle;
    DeviceContext* ctx = nullptr;
    std::weak_ptr<DeviceContext> weak;

    ~Owner() {
        if (!handle.live()) return;
        if (auto c = weak.lock()) {
            try {
                c->free(handle);
            } catch (...) {
            }
        }
    }
};

const BufferHandle& DeviceArray::buffer() const {
    if (!owner_) throw Error(ErrorCode::InvalidArgument, "empty DeviceArray");
    return owner_->handle;
}

DeviceContext& DeviceArray::context() const {
    if (!owner_) throw Error(ErrorCode::InvalidArgument, "empty DeviceArray");
    return *owner_->ctx;
}

DeviceArray DeviceArray::view(ArrayDescriptor desc) const {
    if (!owner_) throw Error(ErrorCode::InvalidArgument, "empty DeviceArray");
    if (desc.rank() != desc.strides.rank()) throw Error(ErrorCode::InvalidArgument, "stride rank does not match shape rank");
    for (auto s : desc.strides.steps())
        if (s < 0) throw Error(ErrorCode::InvalidArgument, "negative strides are not supported");
    if (desc.offset < 0 || static_cast<std::uint64_t>(desc.required_span()) * 4 > owner_->handle.capacity()) {
        throw Error(ErrorCode::InvalidArgument, "view exceeds the buffer");
    }
    return DeviceArray(std::move(desc), owner_);
}

DeviceArray DeviceArray::reshape(const Shape& shape) const { return view(ndgpu::reshape(desc_, shape)); }

DeviceArray DeviceArray::transpose(std::span<const std::size_t> axes) const { return view(ndgpu::transpose(desc_, axes)); }

DeviceArray DeviceArray::broadcast_to(const Shape& shape) const { return view(broadcast_descriptor(desc_, shape)); }

// ---------------------------------------------------------------- DeviceContext

ContextPtr create_context(const ContextConfig& requested) {
    ContextConfig config = apply_env_overrides(requested);
    if (config.workgroup_size == 0 || config.workgroup_size > 256) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("workgroup size {} is outside [1, 256]", config.workgroup_size));
    }
    if (config.grid_stride_factor == 0) throw Error(ErrorCode::InvalidArgument, "grid_stride_factor must be positive");
    if (config.max_allocation == 0) throw Error(ErrorCode::InvalidArgument, "max_allocation must be positive");
    if (config.auto_submit_dispatches == 0) config.auto_submit_dispatches = 1;
    auto adapter = gpu::Instance::request_adapter();
    if (!adapter) throw Error(ErrorCode::NoAdapter, "no compute-capable adapter is available");
    gpu::DeviceDescriptor desc;
    desc.memory_budget = config.memory_budget;
    desc.exec.max_threads = config.max_threads;
    auto device = adapter->request_device(desc);
    return ContextPtr(new DeviceContext(std::move(config), std::move(device)));
}

DeviceContext::DeviceContext(ContextConfig config, gpu::DevicePtr device)
    : config_(std::move(config)), device_(std::move(device)) {}

DeviceContext::~DeviceContext() {
    std::lock_guard lock(mu_);
    scalars_.clear();
    kernels_.clear();
    encoder_.reset();
    for (auto& [key, list] : pool_)
        for (auto& b : list) b->destroy();
    pool_.clear();
    for (auto& s : deferred_)
        if (s->buffer) s->buffer->destroy();
    deferred_.clear();
}

void DeviceContext::check_device() const {
    if (device_->is_lost()) throw Error(ErrorCode::DeviceLost, "device lost: " + device_->lost_reason());
}

void DeviceContext::check_live(const BufferHandle& h, const char* what) const {
    if (!h.state_) throw Error(ErrorCode::InvalidArgument, std::string(what) + ": null buffer handle");
    if (!h.live()) throw Error(ErrorCode::UseAfterFree, fmt::format("{}: buffer {} was freed", what, h.id()));
}

BufferHandle DeviceContext::alloc(std::uint64_t bytes) { return alloc_kind(bytes, Kind::Storage); }

BufferHandle DeviceContext::alloc_kind(std::uint64_t bytes, Kind kind) {
    if (bytes == 0) throw Error(ErrorCode::InvalidArgument, "allocation size must be positive");
    if (bytes > config_.max_allocation) {
        throw Error(ErrorCode::AllocTooLarge,
                    fmt::format("requested {} bytes; the per-allocation cap is {}", bytes, config_.max_allocation));
    }
    std::uint64_t capacity = size_class(bytes);
    if (capacity > config_.max_allocation) capacity = (bytes + kMinClass - 1) / kMinClass * kMinClass;

    std::lock_guard lock(mu_);
    ++counters_.allocations;
    auto state = std::make_shared<detail::BufferState>();
    state->id = next_id_++;
    state->capacity = capacity;
    state->kind = static_cast<std::uint8_t>(kind);

    auto it = pool_.find({kind, capacity});
    if (it != pool_.end() && !it->second.empty()) {
        state->buffer = std::move(it->second.back());
        it->second.pop_back();
        bytes_resident_ -= capacity;
        ++counters_.pool_hits;
        return BufferHandle(std::move(state));
    }

    std::uint32_t usage = 0;
    switch (kind) {
        case Kind::Storage: usage = gpu::Storage | gpu::CopySrc | gpu::CopyDst; break;
        case Kind::Uniform: usage = gpu::Uniform | gpu::CopyDst; break;
        case Kind::Staging: usage = gpu::MapRead | gpu::CopyDst; break;
    }
    const auto label = fmt::format("buf{}", state->id);
    try {
        state->buffer = device_->create_buffer(capacity, usage, label);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::OutOfMemory || bytes_resident_ == 0) throw;
        // Give pooled memory back to the device and retry once.
        for (auto& [key, list] : pool_)
            for (auto& b : list) b->destroy();
        pool_.clear();
        bytes_resident_ = 0;
        device_->poll();
        state->buffer = device_->create_buffer(capacity, usage, label);
    }
    return BufferHandle(std::move(state));
}

void DeviceContext::free(const BufferHandle& handle) {
    if (!handle.state_) throw Error(ErrorCode::InvalidArgument, "free of a null buffer handle");
    std::lock_guard lock(mu_);
    bool expected = true;
    if (!handle.state_->live.compare_exchange_strong(expected, false)) {
        throw Error(ErrorCode::DoubleFree, fmt::format("buffer {} was already freed", handle.id()));
    }
    if (handle.state_->last_epoch == epoch_ && recorded_ > 0) {
        deferred_.push_back(handle.state_);
    } else {
        release_locked(handle.state_);
    }
}

void DeviceContext::release_locked(const std::shared_ptr<detail::BufferState>& s) {
    if (!s->buffer) return;
    if (config_.pool_cap > 0 && bytes_resident_ + s->capacity <= config_.pool_cap) {
        pool_[{static_cast<Kind>(s->kind), s->capacity}].push_back(s->buffer);
        bytes_resident_ += s->capacity;
        high_watermark_ = std::max(high_watermark_, bytes_resident_);
    } else {
        s->buffer->destroy();
    }
    s->buffer.reset();
}

void DeviceContext::release_deferred_locked() {
    auto list = std::move(deferred_);
    deferred_.clear();
    for (auto& s : list) release_locked(s);
}

DeviceArray DeviceContext::adopt(BufferHandle handle, ArrayDescriptor desc) {
    auto owner = std::make_shared<DeviceArray::Owner>();
    owner->handle = std::move(handle);
    owner->ctx = this;
    owner->weak = weak_from_this();
    DeviceArray arr(ArrayDescriptor{}, owner);
    return arr.view(std::move(desc));
}

DeviceArray DeviceContext::empty(DType dtype, const Shape& shape) {
    const auto desc = ArrayDescriptor::contiguous(dtype, shape);
    const std::uint64_t bytes = std::max<std::uint64_t>(4, static_cast<std::uint64_t>(desc.element_count()) * 4);
    return adopt(alloc(bytes), desc);
}

DeviceArray DeviceContext::upload(const HostArray& host) {
    check_device();
    const auto words = host.words();
    DeviceArray arr = empty(host.dtype(), host.shape());
    if (!words.empty()) {
        std::lock_guard lock(mu_);
        device_->queue().write_buffer(arr.buffer().state_->buffer, 0, words);
    }
    return arr;
}

BufferHandle DeviceContext::upload_uniform(std::span<const std::uint32_t> words) {
    auto h = alloc_kind(std::max<std::uint64_t>(16, words.size() * 4), Kind::Uniform);
    std::lock_guard lock(mu_);
    device_->queue().write_buffer(h.state_->buffer, 0, words);
    return h;
}

void DeviceContext::record_dispatch(const gpu::ComputePipelinePtr& pipeline, std::span<const Binding> bindings,
                                    std::array<std::uint32_t, 3> groups) {
    std::lock_guard lock(mu_);
    check_device();
    std::vector<gpu::BindGroupEntry> entries;
    entries.reserve(bindings.size());
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        const auto& b = bindings[i];
        check_live(b.buffer, "dispatch");
        entries.push_back({static_cast<std::uint32_t>(i), b.buffer.state_->buffer, b.offset, b.size});
    }
    auto group = device_->create_bind_group(pipeline, 0, std::move(entries));
    if (!encoder_) encoder_ = std::make_unique<gpu::CommandEncoder>(device_->create_command_encoder());
    auto pass = encoder_->begin_compute_pass();
    pass.set_pipeline(pipeline);
    pass.set_bind_group(0, group);
    pass.dispatch_workgroups(groups[0], groups[1], groups[2]);
    pass.end();
    for (const auto& b : bindings) b.buffer.state_->last_epoch = epoch_;
    ++recorded_;
    if (recorded_ >= config_.auto_submit_dispatches) submit_locked();
}

void DeviceContext::submit() {
    std::lock_guard lock(mu_);
    submit_locked();
}

void DeviceContext::submit_locked() {
    check_device();
    if (!encoder_ || recorded_ == 0) return;
    std::vector<gpu::CommandBuffer> cbs;
    cbs.push_back(encoder_->finish());
    encoder_.reset();
    recorded_ = 0;
    device_->queue().submit(std::move(cbs));
    ++counters_.submissions;
    ++epoch_;
    release_deferred_locked();
}

std::size_t DeviceContext::pending_dispatches() const {
    std::lock_guard lock(mu_);
    return recorded_;
}

HostArray DeviceContext::readback_blocking(const DeviceArray& arr) {
    check_live(arr.buffer(), "readback");
    check_device();
    const auto count = arr.size();
    if (count == 0) return HostArray::zeros(arr.dtype(), arr.shape());

    DeviceArray src = arr.descriptor().is_contiguous() ? arr : materialize(*this, arr);
    const std::uint64_t bytes = static_cast<std::uint64_t>(count) * 4;
    const std::uint64_t src_offset = static_cast<std::uint64_t>(src.descriptor().offset) * 4;

    BufferHandle staging = alloc_kind(bytes, Kind::Staging);
    gpu::BufferPtr staging_buffer = staging.state_->buffer;
    {
        std::lock_guard lock(mu_);
        if (!encoder_) encoder_ = std::make_unique<gpu::CommandEncoder>(device_->create_command_encoder());
        encoder_->copy_buffer_to_buffer(src.buffer().state_->buffer, src_offset, staging_buffer, 0, bytes);
        src.buffer().state_->last_epoch = epoch_;
        staging.state_->last_epoch = epoch_;
        ++recorded_;
        submit_locked();
    }

    bool done = false;
    gpu::MapStatus status = gpu::MapStatus::Aborted;
    staging_buffer->map_async(0, bytes, [&](gpu::MapStatus s) {
        status = s;
        done = true;
    });

    // Pump the device until the map callback fires; give up only if the queue stops making progress.
    auto last_progress = std::chrono::steady_clock::now();
    std::uint64_t last_completed = device_->completed_operations();
    while (!done) {
        device_->poll(true, 5);
        if (done) break;
        if (device_->is_lost()) {
            device_->poll();
            break;
        }
        const auto completed = device_->completed_operations();
        const auto now = std::chrono::steady_clock::now();
        if (completed != last_completed) {
            last_completed = completed;
            last_progress = now;
        } else if (now - last_progress > config_.readback_timeout) {
            device_->lose("readback made no progress within the timeout");
        }
    }
    if (!done || status != gpu::MapStatus::Success) {
        staging_buffer->unmap();
        free(staging);
        throw Error(ErrorCode::DeviceLost, "readback failed: " + device_->lost_reason());
    }
    const auto mapped = staging_buffer->mapped_words();
    HostArray out = HostArray::from_words(arr.dtype(), arr.shape(), std::vector<std::uint32_t>(mapped.begin(), mapped.end()));
    staging_buffer->unmap();
    free(staging);
    return out;
}

Counters DeviceContext::counters() const {
    std::lock_guard lock(mu_);
    return counters_;
}

PoolStats DeviceContext::pool_stats() const {
    std::lock_guard lock(mu_);
    PoolStats stats;
    for (const auto& [key, list] : pool_)
        if (!list.empty()) stats.buckets[key.second] += list.size();
    stats.bytes_resident = bytes_resident_;
    stats.high_watermark = high_watermark_;
    return stats;
}

std::shared_ptr<const CompiledKernel> DeviceContext::kernel_cache_get(
    const std::string& key, const std::function<std::shared_ptr<const CompiledKernel>()>& make) {
    std::lock_guard lock(mu_);
    if (auto it = kernels_.find(key); it != kernels_.end()) return it->second;
    auto kernel = make();
    ++counters_.compilations;
    kernels_.emplace(key, kernel);
    return kernel;
}

std::size_t DeviceContext::kernel_cache_size() const {
    std::lock_guard lock(mu_);
    return kernels_.size();
}

gpu::ComputePipelinePtr DeviceContext::compile_pipeline(const std::string& source, const std::string& label,
                                                        const std::string& entry) {
    if (!config_.shader_dump_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(config_.shader_dump_dir, ec);
        std::ofstream(std::filesystem::path(config_.shader_dump_dir) / (label + ".wgsl")) << source;
    }
    auto module = device_->create_shader_module(source, label);
    return device_->create_compute_pipeline(module, entry);
}

DeviceArray DeviceContext::scalar(DType dtype, std::uint32_t bits) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(dtype, bits);
    if (auto it = scalars_.find(key); it != scalars_.end()) return it->second;
    DeviceArray arr = upload(HostArray::from_words(dtype, Shape{}, {bits}));
    scalars_.emplace(key, arr);
    return arr;
}

}  // namespace ndgpu
