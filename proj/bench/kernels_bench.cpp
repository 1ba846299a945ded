// Serial host reference against the OpenMP-parallel device path.
#include <benchmark/benchmark.h>

#include <random>

#include "ndgpu/host_ops.hpp"
#include "ndgpu/kernel.hpp"
#include "ndgpu/ops.hpp"

using namespace ndgpu;

namespace {

HostArray random_f32(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(shape.element_count()));
    for (auto& x : v) x = dist(rng);
    return HostArray::from_f32(shape, v);
}

ContextPtr& shared_context() {
    static ContextPtr ctx = [] {
        try {
            return create_context();
        } catch (const Error&) {
            return ContextPtr{};
        }
    }();
    return ctx;
}

void BM_SquaredDiffHost(benchmark::State& state) {
    const auto n = state.range(0);
    const HostArray x = random_f32(Shape{n}, 1), y = random_f32(Shape{n}, 2);
    for (auto _ : state) {
        auto z = host::eval_elementwise([](std::span<const double> v) { return (v[0] - v[1]) * (v[0] - v[1]); }, {x, y},
                                        DType::F32);
        benchmark::DoNotOptimize(z);
    }
    state.SetItemsProcessed(state.iterations() * n);
}

void BM_SquaredDiffDevice(benchmark::State& state) {
    auto& ctx = shared_context();
    if (!ctx) {
        state.SkipWithError("no adapter");
        return;
    }
    const auto n = state.range(0);
    const DeviceArray x = ctx->upload(random_f32(Shape{n}, 1)), y = ctx->upload(random_f32(Shape{n}, 2));
    static const ElementwiseKernel k("float32 x, float32 y", "float32 z", "z = (x - y) * (x - y)", "squared_diff");
    for (auto _ : state) {
        auto z = k(*ctx, {x, y});
        benchmark::DoNotOptimize(ctx->readback_blocking(z));
    }
    state.SetItemsProcessed(state.iterations() * n);
}

void BM_MatmulHost(benchmark::State& state) {
    const auto n = state.range(0);
    const HostArray a = random_f32(Shape{n, n}, 3), b = random_f32(Shape{n, n}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(host::matmul(a, b));
    state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                   benchmark::Counter::OneK::kIs1000);
}

void BM_MatmulDevice(benchmark::State& state) {
    auto& ctx = shared_context();
    if (!ctx) {
        state.SkipWithError("no adapter");
        return;
    }
    const auto n = state.range(0);
    const auto variant = state.range(1) ? MatmulVariant::Tiled : MatmulVariant::Naive;
    const DeviceArray a = ctx->upload(random_f32(Shape{n, n}, 3)), b = ctx->upload(random_f32(Shape{n, n}, 4));
    for (auto _ : state) benchmark::DoNotOptimize(ctx->readback_blocking(ops::matmul(*ctx, a, b, variant)));
    state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                   benchmark::Counter::OneK::kIs1000);
}

}  // namespace

BENCHMARK(BM_SquaredDiffHost)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_SquaredDiffDevice)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_MatmulHost)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulDevice)->Args({64, 0})->Args({64, 1})->Args({256, 0})->Args({256, 1});

BENCHMARK_MAIN();
