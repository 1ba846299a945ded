#include "ndgpu/soft/device.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>

#include <fmt/format.h>

#include "ndgpu/error.hpp"

namespace ndgpu::gpu {

namespace {

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::InvalidArgument, message); }

bool env_flag(const char* name) {
    const char* v = std::getenv(name);
    return v && *v && std::string_view(v) != "0";
}

}  // namespace

// ---------------------------------------------------------------- Buffer

Buffer::Buffer(std::shared_ptr<Device> device, std::uint64_t size, std::uint32_t usage, std::string label)
    : device_(device), size_(size), usage_(usage), label_(std::move(label)), words_(size / 4, 0u) {}

Buffer::~Buffer() {
    if (!destroyed_) {
        if (auto d = device_.lock()) d->release_bytes(size_);
    }
}

void Buffer::map_async(std::uint64_t offset, std::uint64_t size, std::function<void(MapStatus)> callback) {
    if (destroyed_) invalid("map_async on destroyed buffer '" + label_ + "'");
    if (!(usage_ & MapRead)) invalid("buffer '" + label_ + "' was not created with MapRead usage");
    if (map_state_ != MapState::Unmapped) invalid("buffer '" + label_ + "' is already mapped or has a pending map");
    if (offset % 4 || size % 4 || offset + size > size_) invalid("map range out of bounds");
    auto device = device_.lock();
    if (!device) invalid("device was destroyed");
    map_state_ = MapState::Pending;
    map_offset_ = offset;
    map_size_ = size;
    auto self = shared_from_this();
    Device* dev = device.get();
    if (dev->is_lost()) {
        dev->post_callback([self, cb = std::move(callback)] {
            if (self->map_state_ == MapState::Pending) self->map_state_ = MapState::Unmapped;
            cb(MapStatus::DeviceLost);
        });
        return;
    }
    dev->enqueue([dev, self, cb = std::move(callback)]() mutable {
        const bool lost = dev->is_lost();
        dev->post_callback([self, lost, cb = std::move(cb)] {
            if (self->map_state_ != MapState::Pending || self->destroyed_) {
                cb(MapStatus::Aborted);
                return;
            }
            if (lost) {
                self->map_state_ = MapState::Unmapped;
                cb(MapStatus::DeviceLost);
                return;
            }
            self->map_state_ = MapState::Mapped;
            cb(MapStatus::Success);
        });
    });
}

std::span<const std::uint32_t> Buffer::mapped_words() const {
    if (map_state_ != MapState::Mapped) invalid("buffer '" + label_ + "' is not mapped");
    return std::span<const std::uint32_t>(words_).subspan(map_offset_ / 4, map_size_ / 4);
}

void Buffer::unmap() { map_state_ = MapState::Unmapped; }

void Buffer::destroy() {
    if (destroyed_) return;
    destroyed_ = true;
    map_state_ = MapState::Unmapped;
    auto device = device_.lock();
    if (!device) {
        words_.clear();
        words_.shrink_to_fit();
        return;
    }
    // The budget is freed now; storage goes once previously submitted work that may still read it has run.
    device->release_bytes(size_);
    auto self = shared_from_this();
    device->enqueue([self] {
        self->words_.clear();
        self->words_.shrink_to_fit();
    });
}

// ---------------------------------------------------------------- encoding

void ComputePass::set_pipeline(ComputePipelinePtr pipeline) {
    if (!pipeline) invalid("null pipeline");
    pipeline_ = std::move(pipeline);
}

void ComputePass::set_bind_group(std::uint32_t index, BindGroupPtr group) {
    if (index >= 4) invalid("bind group index out of range");
    if (groups_.size() <= index) groups_.resize(index + 1);
    groups_[index] = std::move(group);
}

void ComputePass::dispatch_workgroups(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    if (ended_) invalid("compute pass already ended");
    if (!pipeline_) invalid("dispatch without a pipeline");
    const auto lim = limits_.max_compute_workgroups_per_dimension;
    if (x > lim || y > lim || z > lim) {
        invalid(fmt::format("dispatch ({}, {}, {}) exceeds the per-dimension workgroup limit {}", x, y, z, lim));
    }
    for (const auto& b : pipeline_->entry_point().bindings) {
        if (!b.used) continue;
        const BindGroup* g = b.group < groups_.size() ? groups_[b.group].get() : nullptr;
        const BindGroupEntry* found = nullptr;
        if (g) {
            for (const auto& e : g->entries)
                if (e.binding == b.binding) found = &e;
        }
        if (!found) invalid(fmt::format("resource '{}' at @group({}) @binding({}) is not bound", b.name, b.group, b.binding));
        if (found->buffer->destroyed()) invalid("dispatch uses destroyed buffer '" + found->buffer->label() + "'");
    }
    CommandBuffer::Command cmd;
    cmd.is_dispatch = true;
    cmd.dispatch.pipeline = pipeline_;
    cmd.dispatch.bind_groups = groups_;
    cmd.dispatch.groups = {x, y, z};
    enc_->cb_.commands_.push_back(std::move(cmd));
}

void ComputePass::end() {
    ended_ = true;
    enc_->pass_open_ = false;
}

ComputePass CommandEncoder::begin_compute_pass() {
    if (pass_open_) invalid("a compute pass is already open");
    pass_open_ = true;
    return ComputePass(this, limits_);
}

void CommandEncoder::copy_buffer_to_buffer(const BufferPtr& src, std::uint64_t src_offset, const BufferPtr& dst,
                                           std::uint64_t dst_offset, std::uint64_t size) {
    if (pass_open_) invalid("copy recorded while a compute pass is open");
    if (!src || !dst) invalid("null buffer in copy");
    if (!(src->usage() & CopySrc)) invalid("copy source '" + src->label() + "' lacks CopySrc usage");
    if (!(dst->usage() & CopyDst)) invalid("copy destination '" + dst->label() + "' lacks CopyDst usage");
    if (src_offset % 4 || dst_offset % 4 || size % 4) invalid("copy offsets and size must be multiples of 4");
    if (src_offset + size > src->size() || dst_offset + size > dst->size()) invalid("copy range out of bounds");
    if (src == dst) invalid("copy source and destination must differ");
    CommandBuffer::Command cmd;
    cmd.is_dispatch = false;
    cmd.copy = CopyCommand{src, src_offset, dst, dst_offset, size};
    cb_.commands_.push_back(std::move(cmd));
}

CommandBuffer CommandEncoder::finish() {
    if (pass_open_) invalid("finish() with an open compute pass");
    return std::move(cb_);
}

// ---------------------------------------------------------------- Queue

void Queue::write_buffer(const BufferPtr& buffer, std::uint64_t offset, std::span<const std::uint32_t> words) {
    if (!buffer || buffer->destroyed()) invalid("write_buffer on a destroyed buffer");
    if (!(buffer->usage() & CopyDst)) invalid("write_buffer target '" + buffer->label() + "' lacks CopyDst usage");
    if (offset % 4 || offset + words.size() * 4 > buffer->size()) invalid("write_buffer range out of bounds");
    if (buffer->map_state_ != Buffer::MapState::Unmapped) invalid("write_buffer on a mapped buffer");
    Device* dev = device_;
    if (dev->is_lost()) return;
    dev->enqueue([dev, buffer, offset, data = std::vector<std::uint32_t>(words.begin(), words.end())] {
        if (dev->is_lost()) return;
        std::copy(data.begin(), data.end(), buffer->words_.begin() + static_cast<std::ptrdiff_t>(offset / 4));
    });
}

void Queue::submit(std::vector<CommandBuffer> buffers) {
    for (const auto& cb : buffers) {
        for (const auto& c : cb.commands_) {
            auto check = [](const BufferPtr& b) {
                if (b->destroyed()) invalid("submit uses destroyed buffer '" + b->label() + "'");
                if (b->map_state_ != Buffer::MapState::Unmapped) invalid("submit uses mapped buffer '" + b->label() + "'");
            };
            if (c.is_dispatch) {
                for (const auto& g : c.dispatch.bind_groups)
                    if (g)
                        for (const auto& e : g->entries) check(e.buffer);
            } else {
                check(c.copy.src);
                check(c.copy.dst);
            }
        }
    }
    Device* dev = device_;
    if (dev->is_lost()) return;
    for (auto& cb : buffers) {
        dev->enqueue([dev, cb = std::move(cb)] {
            for (const auto& c : cb.commands_) {
                if (dev->is_lost()) return;
                dev->execute(c);
            }
        });
    }
}

void Queue::on_submitted_work_done(std::function<void()> callback) {
    Device* dev = device_;
    dev->enqueue([dev, cb = std::move(callback)]() mutable { dev->post_callback(std::move(cb)); });
}

// ---------------------------------------------------------------- Device

Device::Device(AdapterInfo info, Limits limits, DeviceDescriptor desc)
    : info_(std::move(info)), limits_(limits), desc_(desc), queue_(this) {}

Device::~Device() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    work_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void Device::start() { worker_ = std::thread([this] { run_worker(); }); }

void Device::enqueue(std::function<void()> task) {
    {
        std::lock_guard lock(mu_);
        tasks_.push_back(std::move(task));
        ++in_flight_;
    }
    work_cv_.notify_one();
}

void Device::post_callback(std::function<void()> cb) {
    {
        std::lock_guard lock(mu_);
        ready_callbacks_.push_back(std::move(cb));
    }
    done_cv_.notify_all();
}

void Device::run_worker() {
    for (;;) {
        std::function<void()> task;
        {
            std::unique_lock lock(mu_);
            work_cv_.wait(lock, [&] { return stop_ || !tasks_.empty(); });
            if (stop_) return;
            task = std::move(tasks_.front());
            tasks_.pop_front();
        }
        task();
        task = nullptr;
        {
            std::lock_guard lock(mu_);
            --in_flight_;
            ++completed_;
        }
        done_cv_.notify_all();
    }
}

void Device::execute(const CommandBuffer::Command& cmd) {
    if (!cmd.is_dispatch) {
        const auto& c = cmd.copy;
        std::memmove(c.dst->words_.data() + c.dst_offset / 4, c.src->words_.data() + c.src_offset / 4, c.size);
        return;
    }
    const auto& d = cmd.dispatch;
    const auto& entry = d.pipeline->entry_point();
    std::vector<soft::BoundResource> res(entry.bindings.size());
    for (std::size_t slot = 0; slot < entry.bindings.size(); ++slot) {
        const auto& b = entry.bindings[slot];
        if (b.group >= d.bind_groups.size() || !d.bind_groups[b.group]) continue;
        for (const auto& e : d.bind_groups[b.group]->entries) {
            if (e.binding != b.binding) continue;
            auto& words = e.buffer->words_;
            const std::uint64_t size = e.size ? e.size : e.buffer->size() - e.offset;
            res[slot].words = words.data() + e.offset / 4;
            res[slot].size_words = static_cast<std::uint32_t>(size / 4);
        }
    }
    soft::execute(entry, res, d.groups, desc_.exec);
}

BufferPtr Device::create_buffer(std::uint64_t size, std::uint32_t usage, std::string label) {
    if (size == 0 || size % 4) invalid("buffer size must be a positive multiple of 4");
    if (size > limits_.max_buffer_size) invalid(fmt::format("buffer size {} exceeds max_buffer_size", size));
    if ((usage & MapRead) && (usage & ~(MapRead | CopyDst))) invalid("MapRead buffers may only add CopyDst usage");
    {
        std::lock_guard lock(mu_);
        if (bytes_allocated_ + size > desc_.memory_budget) {
            throw Error(ErrorCode::OutOfMemory, fmt::format("device memory budget of {} bytes exhausted ({} in use, {} requested)",
                                                            desc_.memory_budget, bytes_allocated_, size));
        }
        bytes_allocated_ += size;
    }
    return BufferPtr(new Buffer(shared_from_this(), size, usage, std::move(label)));
}

void Device::release_bytes(std::uint64_t bytes) {
    std::lock_guard lock(mu_);
    bytes_allocated_ -= std::min(bytes, bytes_allocated_);
}

std::uint64_t Device::bytes_allocated() const {
    std::lock_guard lock(mu_);
    return bytes_allocated_;
}

ShaderModulePtr Device::create_shader_module(std::string_view source, std::string label) {
    soft::CompileOptions opt;
    opt.label = std::move(label);
    opt.max_workgroup_storage_bytes = limits_.max_compute_workgroup_storage_size;
    opt.max_invocations_per_workgroup = limits_.max_compute_invocations_per_workgroup;
    return ShaderModulePtr(new ShaderModule(soft::compile_wgsl(source, opt)));
}

ComputePipelinePtr Device::create_compute_pipeline(const ShaderModulePtr& module, const std::string& entry_point) {
    const auto& info = module->compilation_info();
    if (!info.ok()) throw ShaderCompileError(info.formatted_diagnostics);
    const soft::EntryPoint* e = info.find(entry_point);
    if (!e) throw ShaderCompileError("entry point '" + entry_point + "' not found in module");
    std::uint32_t storage = 0;
    for (const auto& b : e->bindings)
        if (b.space == soft::AddressSpace::Storage) ++storage;
    if (storage > limits_.max_storage_buffers_per_shader_stage) {
        throw ShaderCompileError(fmt::format("entry point '{}' uses {} storage buffers; the limit is {}", entry_point, storage,
                                             limits_.max_storage_buffers_per_shader_stage));
    }
    return ComputePipelinePtr(new ComputePipeline(*e));
}

BindGroupPtr Device::create_bind_group(const ComputePipelinePtr& pipeline, std::uint32_t group,
                                       std::vector<BindGroupEntry> entries) {
    auto bg = std::make_shared<BindGroup>();
    bg->group = group;
    for (auto& e : entries) {
        if (!e.buffer || e.buffer->destroyed()) invalid(fmt::format("binding {} uses a destroyed buffer", e.binding));
        const soft::ResourceBinding* rb = nullptr;
        for (const auto& b : pipeline->entry_point().bindings)
            if (b.group == group && b.binding == e.binding) rb = &b;
        if (!rb) invalid(fmt::format("pipeline has no resource at @group({}) @binding({})", group, e.binding));
        if (e.offset % 4 || e.offset >= e.buffer->size()) invalid(fmt::format("binding {} offset out of range", e.binding));
        const std::uint64_t size = e.size ? e.size : e.buffer->size() - e.offset;
        if (e.offset + size > e.buffer->size()) invalid(fmt::format("binding {} range exceeds the buffer", e.binding));
        const std::uint32_t need = rb->space == soft::AddressSpace::Uniform ? Uniform : Storage;
        if (!(e.buffer->usage() & need)) {
            invalid(fmt::format("buffer '{}' bound to '{}' lacks {} usage", e.buffer->label(), rb->name,
                                need == Uniform ? "Uniform" : "Storage"));
        }
        if (size < static_cast<std::uint64_t>(rb->min_words) * 4 || (rb->runtime_stride == 0 && size < 4)) {
            invalid(fmt::format("binding '{}' is {} bytes; at least {} required", rb->name, size, rb->min_words * 4));
        }
        if (rb->space == soft::AddressSpace::Storage && size > limits_.max_storage_buffer_binding_size) {
            invalid(fmt::format("binding '{}' exceeds max_storage_buffer_binding_size", rb->name));
        }
    }
    bg->entries = std::move(entries);
    return bg;
}

std::size_t Device::poll(bool wait, std::uint32_t timeout_ms) {
    std::deque<std::function<void()>> ready;
    {
        std::unique_lock lock(mu_);
        if (wait && ready_callbacks_.empty()) {
            done_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                              [&] { return !ready_callbacks_.empty() || lost_; });
        }
        ready.swap(ready_callbacks_);
    }
    for (auto& cb : ready) cb();
    return ready.size();
}

bool Device::idle() const {
    std::lock_guard lock(mu_);
    return in_flight_ == 0;
}

std::uint64_t Device::completed_operations() const {
    std::lock_guard lock(mu_);
    return completed_;
}

void Device::lose(std::string reason) {
    {
        std::lock_guard lock(mu_);
        lost_ = true;
        lost_reason_ = std::move(reason);
    }
    done_cv_.notify_all();
}

bool Device::is_lost() const {
    std::lock_guard lock(mu_);
    return lost_;
}

std::string Device::lost_reason() const {
    std::lock_guard lock(mu_);
    return lost_reason_;
}

// ---------------------------------------------------------------- Adapter / Instance

DevicePtr Adapter::request_device(const DeviceDescriptor& desc) const {
    DevicePtr d(new Device(info_, limits_, desc));
    d->start();
    return d;
}

AdapterPtr Instance::request_adapter(const RequestAdapterOptions& options) {
    if (!options.allow_fallback_adapter && !options.force_fallback_adapter) return nullptr;
    if (env_flag("NDGPU_DISABLE_FALLBACK_ADAPTER")) return nullptr;
    AdapterInfo info{"ndgpu software adapter", "cpu-simt", true};
    return AdapterPtr(new Adapter(std::move(info), Limits{}));
}

}  // namespace ndgpu::gpu
