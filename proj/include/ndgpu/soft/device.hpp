#pragma once

// A small WebGPU-shaped device API. Work is recorded into command buffers,
// submitted to a queue and executed in order on a device thread. Buffer
// mapping is asynchronous: map_async() returns immediately and its callback
// runs from Device::poll() on the caller's thread once the device has
// finished all work submitted before the map request.
//
// The only adapter is the software fallback adapter (compute shaders run on
// the WGSL interpreter in ndgpu/soft/shader.hpp).

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ndgpu/soft/shader.hpp"

namespace ndgpu::gpu {

enum BufferUsage : std::uint32_t {
    MapRead = 1u << 0,
    CopySrc = 1u << 2,
    CopyDst = 1u << 3,
    Uniform = 1u << 6,
    Storage = 1u << 7,
};

struct Limits {
    std::uint32_t max_compute_workgroups_per_dimension = 65535;
    std::uint32_t max_compute_invocations_per_workgroup = 256;
    std::uint32_t max_compute_workgroup_storage_size = 16384;
    std::uint32_t max_storage_buffers_per_shader_stage = 8;
    std::uint64_t max_buffer_size = 1ull << 31;
    std::uint64_t max_storage_buffer_binding_size = (1ull << 31) - 4;
};

struct AdapterInfo {
    std::string name;
    std::string backend;
    bool is_fallback = false;
};

enum class MapStatus { Success, DeviceLost, Aborted };

class Device;

class Buffer : public std::enable_shared_from_this<Buffer> {
 public:
    ~Buffer();
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;

    std::uint64_t size() const noexcept { return size_; }
    std::uint32_t usage() const noexcept { return usage_; }
    const std::string& label() const noexcept { return label_; }

    // Requests read access to [offset, offset + size). The callback runs from Device::poll().
    void map_async(std::uint64_t offset, std::uint64_t size, std::function<void(MapStatus)> callback);
    std::span<const std::uint32_t> mapped_words() const;
    void unmap();
    void destroy();
    bool destroyed() const noexcept { return destroyed_; }

 private:
    friend class Device;
    friend class Queue;
    Buffer(std::shared_ptr<Device> device, std::uint64_t size, std::uint32_t usage, std::string label);

    enum class MapState { Unmapped, Pending, Mapped };

    std::weak_ptr<Device> device_;
    std::uint64_t size_;
    std::uint32_t usage_;
    std::string label_;
    std::vector<std::uint32_t> words_;
    MapState map_state_ = MapState::Unmapped;
    std::uint64_t map_offset_ = 0;
    std::uint64_t map_size_ = 0;
    bool destroyed_ = false;
};

using BufferPtr = std::shared_ptr<Buffer>;

class ShaderModule {
 public:
    const soft::CompiledModule& compilation_info() const noexcept { return module_; }

 private:
    friend class Device;
    explicit ShaderModule(soft::CompiledModule m) : module_(std::move(m)) {}
    soft::CompiledModule module_;
};

using ShaderModulePtr = std::shared_ptr<ShaderModule>;

class ComputePipeline {
 public:
    const soft::EntryPoint& entry_point() const noexcept { return entry_; }

 private:
    friend class Device;
    explicit ComputePipeline(soft::EntryPoint e) : entry_(std::move(e)) {}
    soft::EntryPoint entry_;
};

using ComputePipelinePtr = std::shared_ptr<ComputePipeline>;

struct BindGroupEntry {
    std::uint32_t binding = 0;
    BufferPtr buffer;
    std::uint64_t offset = 0;
    std::uint64_t size = 0;  // 0: rest of the buffer
};

class BindGroup {
 private:
    friend class Device;
    friend class Queue;
    friend class ComputePass;
    std::uint32_t group = 0;
    std::vector<BindGroupEntry> entries;
};

using BindGroupPtr = std::shared_ptr<BindGroup>;

struct DispatchCommand {
    ComputePipelinePtr pipeline;
    std::vector<BindGroupPtr> bind_groups;
    std::array<std::uint32_t, 3> groups{1, 1, 1};
};

struct CopyCommand {
    BufferPtr src;
    std::uint64_t src_offset = 0;
    BufferPtr dst;
    std::uint64_t dst_offset = 0;
    std::uint64_t size = 0;
};

class CommandBuffer {
 public:
    struct Command {
        bool is_dispatch = true;
        DispatchCommand dispatch;
        CopyCommand copy;
    };

    std::size_t command_count() const noexcept { return commands_.size(); }

 private:
    friend class CommandEncoder;
    friend class ComputePass;
    friend class Queue;
    std::vector<Command> commands_;
};

class ComputePass {
 public:
    void set_pipeline(ComputePipelinePtr pipeline);
    void set_bind_group(std::uint32_t index, BindGroupPtr group);
    void dispatch_workgroups(std::uint32_t x, std::uint32_t y = 1, std::uint32_t z = 1);
    void end();

 private:
    friend class CommandEncoder;
    ComputePass(class CommandEncoder* enc, const Limits& limits) : enc_(enc), limits_(limits) {}
    class CommandEncoder* enc_;
    Limits limits_;
    ComputePipelinePtr pipeline_;
    std::vector<BindGroupPtr> groups_;
    bool ended_ = false;
};

class CommandEncoder {
 public:
    ComputePass begin_compute_pass();
    void copy_buffer_to_buffer(const BufferPtr& src, std::uint64_t src_offset, const BufferPtr& dst,
                               std::uint64_t dst_offset, std::uint64_t size);
    CommandBuffer finish();

 private:
    friend class Device;
    friend class ComputePass;
    explicit CommandEncoder(const Limits& limits) : limits_(limits) {}
    Limits limits_;
    CommandBuffer cb_;
    bool pass_open_ = false;
};

class Queue {
 public:
    void write_buffer(const BufferPtr& buffer, std::uint64_t offset, std::span<const std::uint32_t> words);
    void submit(std::vector<CommandBuffer> buffers);
    // The callback runs from Device::poll() once all work submitted so far has finished.
    void on_submitted_work_done(std::function<void()> callback);

 private:
    friend class Device;
    explicit Queue(Device* d) : device_(d) {}
    Device* device_;
};

struct DeviceDescriptor {
    std::uint64_t memory_budget = 4ull << 30;  // bytes of live buffers before OutOfMemory
    soft::ExecOptions exec;
};

class Device : public std::enable_shared_from_this<Device> {
 public:
    ~Device();
    Device(const Device&) = delete;
    Device& operator=(const Device&) = delete;

    const Limits& limits() const noexcept { return limits_; }
    const AdapterInfo& adapter_info() const noexcept { return info_; }
    Queue& queue() noexcept { return queue_; }

    BufferPtr create_buffer(std::uint64_t size, std::uint32_t usage, std::string label = {});
    // Never throws on WGSL errors; inspect compilation_info().
    ShaderModulePtr create_shader_module(std::string_view source, std::string label = "shader");
    // Throws ShaderCompileError if the module failed or the entry point is missing.
    ComputePipelinePtr create_compute_pipeline(const ShaderModulePtr& module, const std::string& entry_point);
    BindGroupPtr create_bind_group(const ComputePipelinePtr& pipeline, std::uint32_t group,
                                   std::vector<BindGroupEntry> entries);
    CommandEncoder create_command_encoder() const { return CommandEncoder(limits_); }

    // Delivers completed callbacks on the calling thread. With wait=true, blocks up to
    // `timeout_ms` for at least one callback to become ready. Returns the number delivered.
    std::size_t poll(bool wait = false, std::uint32_t timeout_ms = 0);
    // True when every submitted operation has finished executing.
    bool idle() const;
    // Number of queue operations finished so far; used to detect a stalled device.
    std::uint64_t completed_operations() const;

    // Simulates a lost device: pending work is dropped and map callbacks report DeviceLost.
    void lose(std::string reason);
    bool is_lost() const;
    std::string lost_reason() const;

    std::uint64_t bytes_allocated() const;

 private:
    friend class Adapter;
    friend class Buffer;
    friend class Queue;

    Device(AdapterInfo info, Limits limits, DeviceDescriptor desc);
    void start();
    void enqueue(std::function<void()> task);
    void post_callback(std::function<void()> cb);
    void run_worker();
    void execute(const CommandBuffer::Command& cmd);
    void release_bytes(std::uint64_t bytes);

    AdapterInfo info_;
    Limits limits_;
    DeviceDescriptor desc_;
    Queue queue_;

    mutable std::mutex mu_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    std::deque<std::function<void()>> tasks_;
    std::deque<std::function<void()>> ready_callbacks_;
    std::size_t in_flight_ = 0;
    std::uint64_t completed_ = 0;
    bool stop_ = false;
    bool lost_ = false;
    std::string lost_reason_;
    std::uint64_t bytes_allocated_ = 0;
    std::thread worker_;
};

using DevicePtr = std::shared_ptr<Device>;

class Adapter {
 public:
    const AdapterInfo& info() const noexcept { return info_; }
    const Limits& limits() const noexcept { return limits_; }
    DevicePtr request_device(const DeviceDescriptor& desc = {}) const;

 private:
    friend class Instance;
    Adapter(AdapterInfo info, Limits limits) : info_(std::move(info)), limits_(limits) {}
    AdapterInfo info_;
    Limits limits_;
};

using AdapterPtr = std::shared_ptr<Adapter>;

struct RequestAdapterOptions {
    bool force_fallback_adapter = false;
    bool allow_fallback_adapter = true;
};

class Instance {
 public:
    // Returns nullptr when no adapter satisfies the options. The fallback adapter is
    // hidden when NDGPU_DISABLE_FALLBACK_ADAPTER is set to a non-empty value other than 0.
    static AdapterPtr request_adapter(const RequestAdapterOptions& options = {});
};

}  // namespace ndgpu::gpu
