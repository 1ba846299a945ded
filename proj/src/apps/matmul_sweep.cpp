#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "ndgpu/apps/matmul_sweep.hpp"
#include "ndgpu/host_ops.hpp"
#include "ndgpu/ops.hpp"

namespace ndgpu::apps {

double max_rel_err(const std::vector<double>& got, const std::vector<double>& want) {
    if (got.size() != want.size()) return INFINITY;
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        scale = std::max(scale, std::abs(want[i]));
        const double d = std::abs(got[i] - want[i]);
        diff = std::isnan(d) ? INFINITY : std::max(diff, d);
    }
    if (scale == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
    return diff / scale;
}

HostArray random_matrix(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(rows * cols));
    for (auto& x : v) x = dist(rng);
    return HostArray::from_f32(Shape{rows, cols}, v);
}

namespace {

const char* variant_name(SweepVariant v) {
    switch (v) {
        case SweepVariant::Host: return "host";
        case SweepVariant::Naive: return "naive";
        case SweepVariant::Tiled: return "tiled";
    }
    return "?";
}

HostArray identity(std::int64_t n) {
    std::vector<float> v(static_cast<std::size_t>(n * n), 0.0f);
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 1.0f;
    return HostArray::from_f32(Shape{n, n}, v);
}

}  // namespace

BenchReport run_matmul_sweep(DeviceContext* ctx, const MatmulSweepOptions& options) {
    if (!std::is_sorted(options.sizes.begin(), options.sizes.end())) {
        throw Error(ErrorCode::InvalidArgument, "matmul sizes must be ascending");
    }
    BenchReport report;
    report.workload = "matmul";
    report.backend = ctx ? ctx->adapter_info().name : "host";
    report.params = {{"sizes", options.sizes}, {"warmup", options.warmup}, {"samples", options.samples},
                     {"seed", options.seed},   {"tile", options.tile}};
    std::vector<std::string> variants;
    for (auto v : options.variants) variants.push_back(variant_name(v));
    report.params["variants"] = variants;

    for (const auto n : options.sizes) {
        const HostArray a = random_matrix(n, n, options.seed + static_cast<std::uint64_t>(n));
        const HostArray b = random_matrix(n, n, options.seed + static_cast<std::uint64_t>(n) + 1);
        const HostArray oracle = host::matmul(a, b);
        const HostArray eye = identity(n);
        for (const auto variant : options.variants) {
            BenchCell cell;
            cell.workload = "matmul";
            cell.params = {{"n", n}, {"variant", variant_name(variant)}};
            if (variant == SweepVariant::Tiled) cell.params["tile"] = options.tile;
            cell.throughput_unit = "GFLOP/s";
            if (variant != SweepVariant::Host && !ctx) {
                cell.backend = "none";
                cell.notes.push_back("skipped: no device context");
                report.cells.push_back(std::move(cell));
                continue;
            }
            cell.backend = variant == SweepVariant::Host ? "host" : ctx->adapter_info().name;
            try {
                HostArray result, eye_result;
                std::function<HostArray(const HostArray&, const HostArray&)> multiply;
                if (variant == SweepVariant::Host) {
                    multiply = [](const HostArray& x, const HostArray& y) { return host::matmul(x, y); };
                } else {
                    const auto mv = variant == SweepVariant::Naive ? MatmulVariant::Naive : MatmulVariant::Tiled;
                    multiply = [ctx, mv, &options](const HostArray& x, const HostArray& y) {
                        const DeviceArray dx = ctx->upload(x), dy = ctx->upload(y);
                        return ctx->readback_blocking(ops::matmul(*ctx, dx, dy, mv, options.tile));
                    };
                }
                cell.samples_ms = time_samples([&] { result = multiply(a, b); }, options.warmup, options.samples);
                eye_result = multiply(a, eye);
                cell.median_ms = median(cell.samples_ms);
                const double flops = 2.0 * static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(n);
                cell.throughput = cell.median_ms > 0 ? flops / (cell.median_ms * 1e-3) / 1e9 : 0.0;
                cell.correctness.max_rel_err = max_rel_err(result.to_f64(), oracle.to_f64());
                const bool identity_ok = eye_result.shape() == a.shape() && eye_result.words() == a.words();
                cell.correctness.passed = cell.correctness.max_rel_err <= 1e-3 && identity_ok;
                if (!identity_ok) cell.notes.push_back("A*I != A");
            } catch (const Error& e) {
                if (e.code() != ErrorCode::OutOfMemory && e.code() != ErrorCode::AllocTooLarge) throw;
                cell.notes.push_back(fmt::format("skipped: {}", e.what()));
            }
            report.cells.push_back(std::move(cell));
        }
    }

    // Soft check: on real GPUs the tiled kernel should not be slower than the naive one at the largest size.
    const auto cell_for = [&](std::int64_t n, const char* v) -> const BenchCell* {
        for (const auto& c : report.cells)
            if (c.params["n"] == n && c.params["variant"] == v && !c.samples_ms.empty()) return &c;
        return nullptr;
    };
    if (!options.sizes.empty()) {
        const auto n = options.sizes.back();
        const auto* naive = cell_for(n, "naive");
        const auto* tiled = cell_for(n, "tiled");
        nlohmann::json soft = {{"n", n}};
        if (!naive || !tiled) {
            soft["status"] = "skipped";
            soft["reason"] = "naive or tiled cell missing";
        } else if (ctx && ctx->adapter_info().is_fallback) {
            soft["status"] = "skipped";
            soft["reason"] = "software fallback adapter";
            soft["tiled_over_naive"] = tiled->throughput / std::max(naive->throughput, 1e-12);
        } else {
            soft["tiled_over_naive"] = tiled->throughput / std::max(naive->throughput, 1e-12);
            soft["status"] = tiled->throughput >= naive->throughput ? "pass" : "warn";
        }
        report.extra["soft_check_tiled_ge_naive"] = soft;
    }
    return report;
}

}  // namespace ndgpu::apps
