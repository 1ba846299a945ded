#pragma once

// WGSL-subset compiler and SIMT executor behind the software adapter.
//
// Supported: scalar types (bool, i32, u32, f32) and their vec2/3/4 forms,
// fixed and runtime-sized arrays, structs in uniform/storage/workgroup
// memory, var/let/const, if/else, for, while, loop/continuing/break if,
// break, continue, return, the common numeric builtins, bitcast,
// arrayLength and workgroupBarrier. Helper functions other than compute
// entry points, switch, pointers and matrices are rejected with a
// diagnostic.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ndgpu::soft {

namespace ir {
struct Program;
}

struct Diagnostic {
    int line = 0;
    int column = 0;
    std::string message;
};

enum class AddressSpace : std::uint8_t { Storage, Uniform };
enum class Access : std::uint8_t { Read, ReadWrite };

struct ResourceBinding {
    std::string name;
    std::uint32_t group = 0;
    std::uint32_t binding = 0;
    AddressSpace space = AddressSpace::Storage;
    Access access = Access::Read;
    std::uint32_t min_words = 0;      // fixed-size part of the bound type
    std::uint32_t runtime_stride = 0;  // element stride in words of a trailing runtime-sized array, 0 if none
    bool used = false;                 // statically referenced by the entry point
};

struct EntryPoint {
    std::string name;
    std::array<std::uint32_t, 3> workgroup_size{1, 1, 1};
    std::vector<ResourceBinding> bindings;  // slot order used by execute()
    std::shared_ptr<const ir::Program> program;
};

struct CompiledModule {
    std::vector<EntryPoint> entry_points;
    std::vector<Diagnostic> diagnostics;  // non-empty means compilation failed
    std::string formatted_diagnostics;     // "label:line:col error: ..." with source excerpt

    bool ok() const noexcept { return diagnostics.empty(); }
    const EntryPoint* find(std::string_view name) const;
};

struct CompileOptions {
    std::string label = "shader";
    std::uint32_t max_workgroup_storage_bytes = 16384;
    std::uint32_t max_invocations_per_workgroup = 256;
};

CompiledModule compile_wgsl(std::string_view source, const CompileOptions& options = {});

struct BoundResource {
    std::uint32_t* words = nullptr;
    std::uint32_t size_words = 0;
};

struct ExecOptions {
    int max_threads = 0;               // 0: OpenMP default
    std::uint32_t target_batch_lanes = 512;
};

// Runs a dispatch of `groups` workgroups. `resources` is indexed like entry.bindings;
// unused slots may be empty.
void execute(const EntryPoint& entry, std::span<const BoundResource> resources, std::array<std::uint32_t, 3> groups,
             const ExecOptions& options = {});

std::string disassemble(const EntryPoint& entry);

}  // namespace ndgpu::soft
