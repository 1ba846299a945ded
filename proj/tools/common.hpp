#pragma once

#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ndgpu/apps/report.hpp"
#include "ndgpu/device.hpp"

namespace tools {

struct DeviceFlags {
    std::string backend = "gpu";
    std::uint32_t workgroup_size = 64;
    std::uint64_t pool_cap = 256ull << 20;
};

inline void add_device_flags(CLI::App& app, DeviceFlags& f) {
    app.add_option("--backend", f.backend, "gpu or host")->check(CLI::IsMember({"gpu", "host"}));
    app.add_option("--workgroup-size", f.workgroup_size, "elementwise workgroup size")->check(CLI::Range(1, 256));
    app.add_option("--pool-cap", f.pool_cap, "bytes kept in the buffer pool (0 disables pooling)");
}

// nullptr for --backend host.
inline ndgpu::ContextPtr make_context(const DeviceFlags& f) {
    if (f.backend == "host") return nullptr;
    ndgpu::ContextConfig cfg;
    cfg.workgroup_size = f.workgroup_size;
    cfg.pool_cap = f.pool_cap;
    return ndgpu::create_context(cfg);
}

inline void write_report(const ndgpu::apps::BenchReport& report, const std::string& path) {
    if (path.empty() || path == "-") {
        fmt::print("{}\n", ndgpu::apps::to_json(report).dump(2));
        return;
    }
    ndgpu::apps::emit_report(report, ndgpu::apps::format_for_path(path), path);
    fmt::print(stderr, "report written to {}\n", path);
}

template <class Fn>
int run_guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ndgpu::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return e.code() == ndgpu::ErrorCode::NoAdapter ? 3 : 1;
    }
}

}  // namespace tools
