#pragma once

// Mandelbrot escape counts. A pixel's count grows by one after each update
// z <- z^2 + c whose result satisfies |z|^2 < 4 (strict), for exactly
// max_iter updates, so counts lie in [0, max_iter].

#include <cstdint>
#include <string>

#include "ndgpu/apps/report.hpp"
#include "ndgpu/device.hpp"
#include "ndgpu/kernel.hpp"

namespace ndgpu::apps {

enum class MandelMode { Composed, Custom, Host };

std::string mode_name(MandelMode mode);
MandelMode parse_mode(const std::string& name);

struct MandelbrotParams {
    std::int64_t height = 1024;
    std::int64_t width = 1024;
    double real_min = -2.0;
    double real_max = 0.5;
    double imag_min = -1.2;
    double imag_max = 1.2;
    int max_iter = 500;
    MandelMode mode = MandelMode::Custom;
};

// float32 [H,W] grids of the real and imaginary parts (inclusive linspace per axis).
HostArray mandelbrot_real(const MandelbrotParams& p);
HostArray mandelbrot_imag(const MandelbrotParams& p);

// One dispatch per array operation, max_iter rounds of them.
DeviceArray mandelbrot_composed(DeviceContext& ctx, const DeviceArray& real, const DeviceArray& imag, int max_iter);
// Single elementwise kernel with max_iter substituted as a constant.
DeviceArray mandelbrot_custom(DeviceContext& ctx, const DeviceArray& real, const DeviceArray& imag, int max_iter);
const ElementwiseKernel& mandelbrot_kernel();
// Double-precision serial reference.
HostArray mandelbrot_host(const HostArray& real, const HostArray& imag, int max_iter);

DeviceArray mandelbrot_composed(DeviceContext& ctx, const MandelbrotParams& p);
DeviceArray mandelbrot_custom(DeviceContext& ctx, const MandelbrotParams& p);
HostArray mandelbrot_host(const MandelbrotParams& p);

struct MandelbrotRunOptions {
    int warmup = 1;
    int samples = 5;
    std::string image_path;
};

// Times the selected mode (readback included) and compares against the host reference.
// ctx may be null for MandelMode::Host.
BenchReport run_mandelbrot(DeviceContext* ctx, const MandelbrotParams& p, const MandelbrotRunOptions& options);

}  // namespace ndgpu::apps
