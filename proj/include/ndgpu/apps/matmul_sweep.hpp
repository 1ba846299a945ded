#pragma once

#include <cstdint>
#include <vector>

#include "ndgpu/apps/report.hpp"
#include "ndgpu/device.hpp"

namespace ndgpu::apps {

enum class SweepVariant { Host, Naive, Tiled };

struct MatmulSweepOptions {
    std::vector<std::int64_t> sizes{64, 256, 1024};
    std::vector<SweepVariant> variants{SweepVariant::Host, SweepVariant::Naive, SweepVariant::Tiled};
    int warmup = 1;
    int samples = 5;
    std::uint64_t seed = 7;
    std::uint32_t tile = 16;
};

// max |got - want| / max |want|; 0 when both are all zero.
double max_rel_err(const std::vector<double>& got, const std::vector<double>& want);

// Random uniform [-1, 1) float32 matrix.
HostArray random_matrix(std::int64_t rows, std::int64_t cols, std::uint64_t seed);

// One cell per (N, variant). ctx may be null when only the host variant is requested.
BenchReport run_matmul_sweep(DeviceContext* ctx, const MatmulSweepOptions& options);

}  // namespace ndgpu::apps
