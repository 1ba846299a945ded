#include <fmt/format.h>

#include "ndgpu/apps/mandelbrot.hpp"
#include "ndgpu/ops.hpp"

namespace ndgpu::apps {

std::string mode_name(MandelMode mode) {
    switch (mode) {
        case MandelMode::Composed: return "composed";
        case MandelMode::Custom: return "custom";
        case MandelMode::Host: return "host";
    }
    return "?";
}

MandelMode parse_mode(const std::string& name) {
    if (name == "composed") return MandelMode::Composed;
    if (name == "custom") return MandelMode::Custom;
    if (name == "host") return MandelMode::Host;
    throw Error(ErrorCode::InvalidArgument, "unknown mandelbrot mode '" + name + "'");
}

namespace {

void check_params(const MandelbrotParams& p) {
    if (p.height <= 0 || p.width <= 0) throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
    if (p.max_iter < 0) throw Error(ErrorCode::InvalidArgument, "max_iter must be non-negative");
}

double linspace(double lo, double hi, std::int64_t i, std::int64_t n) {
    return n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

HostArray mandelbrot_real(const MandelbrotParams& p) {
    check_params(p);
    std::vector<float> v(static_cast<std::size_t>(p.height * p.width));
    for (std::int64_t y = 0; y < p.height; ++y)
        for (std::int64_t x = 0; x < p.width; ++x)
            v[static_cast<std::size_t>(y * p.width + x)] = static_cast<float>(linspace(p.real_min, p.real_max, x, p.width));
    return HostArray::from_f32(Shape{p.height, p.width}, v);
}

HostArray mandelbrot_imag(const MandelbrotParams& p) {
    check_params(p);
    std::vector<float> v(static_cast<std::size_t>(p.height * p.width));
    for (std::int64_t y = 0; y < p.height; ++y)
        for (std::int64_t x = 0; x < p.width; ++x)
            v[static_cast<std::size_t>(y * p.width + x)] = static_cast<float>(linspace(p.imag_min, p.imag_max, y, p.height));
    return HostArray::from_f32(Shape{p.height, p.width}, v);
}

DeviceArray mandelbrot_composed(DeviceContext& ctx, const DeviceArray& real, const DeviceArray& imag, int max_iter) {
    using namespace ops;
    const HostArray zeros = HostArray::zeros(DType::F32, real.shape());
    DeviceArray xs = ctx.upload(zeros);
    DeviceArray ys = ctx.upload(zeros);
    DeviceArray count = ctx.upload(HostArray::zeros(DType::I32, real.shape()));
    for (int k = 0; k < max_iter; ++k) {
        // Both new values come from the old xs, ys.
        DeviceArray nx = add(ctx, sub(ctx, mul(ctx, xs, xs), mul(ctx, ys, ys)), real);
        DeviceArray ny = add(ctx, binary(ctx, BinaryOpKind::Mul, mul(ctx, xs, ys), 2.0), imag);
        xs = std::move(nx);
        ys = std::move(ny);
        const DeviceArray inside =
            binary(ctx, BinaryOpKind::Less, add(ctx, mul(ctx, xs, xs), mul(ctx, ys, ys)), 4.0);
        count = add(ctx, count, astype(ctx, inside, DType::I32));
    }
    return count;
}

const ElementwiseKernel& mandelbrot_kernel() {
    static const ElementwiseKernel kernel("f32 real, f32 imag", "i32 c",
                                          "var xs = 0.0;\n"
                                          "var ys = 0.0;\n"
                                          "c = 0i;\n"
                                          "for (var k = 0u; k < max_iter; k = k + 1u) {\n"
                                          "    let nx = xs * xs - ys * ys + real;\n"
                                          "    let ny = xs * ys * 2.0 + imag;\n"
                                          "    xs = nx;\n"
                                          "    ys = ny;\n"
                                          "    if (xs * xs + ys * ys < 4.0) {\n"
                                          "        c = c + 1i;\n"
                                          "    }\n"
                                          "}",
                                          "mandelbrot", "u32 max_iter");
    return kernel;
}

DeviceArray mandelbrot_custom(DeviceContext& ctx, const DeviceArray& real, const DeviceArray& imag, int max_iter) {
    return mandelbrot_kernel()(ctx, {real, imag}, {{"max_iter", max_iter}});
}

HostArray mandelbrot_host(const HostArray& real, const HostArray& imag, int max_iter) {
    if (real.shape() != imag.shape()) throw Error(ErrorCode::ShapeMismatch, "real and imag grids differ in shape");
    const auto re = real.to_f64();
    const auto im = imag.to_f64();
    std::vector<std::int32_t> counts(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) {
        double x = 0.0, y = 0.0;
        std::int32_t c = 0;
        for (int k = 0; k < max_iter; ++k) {
            const double nx = x * x - y * y + re[i];
            const double ny = x * y * 2.0 + im[i];
            x = nx;
            y = ny;
            if (x * x + y * y < 4.0) ++c;
        }
        counts[i] = c;
    }
    return HostArray::from_i32(real.shape(), counts);
}

DeviceArray mandelbrot_composed(DeviceContext& ctx, const MandelbrotParams& p) {
    return mandelbrot_composed(ctx, ctx.upload(mandelbrot_real(p)), ctx.upload(mandelbrot_imag(p)), p.max_iter);
}

DeviceArray mandelbrot_custom(DeviceContext& ctx, const MandelbrotParams& p) {
    return mandelbrot_custom(ctx, ctx.upload(mandelbrot_real(p)), ctx.upload(mandelbrot_imag(p)), p.max_iter);
}

HostArray mandelbrot_host(const MandelbrotParams& p) {
    return mandelbrot_host(mandelbrot_real(p), mandelbrot_imag(p), p.max_iter);
}

BenchReport run_mandelbrot(DeviceContext* ctx, const MandelbrotParams& p, const MandelbrotRunOptions& options) {
    if (p.mode != MandelMode::Host && !ctx) throw Error(ErrorCode::InvalidArgument, "device modes need a context");
    const HostArray real = mandelbrot_real(p);
    const HostArray imag = mandelbrot_imag(p);

    HostArray counts;
    auto run = [&] {
        if (p.mode == MandelMode::Host) {
            counts = mandelbrot_host(real, imag, p.max_iter);
            return;
        }
        const DeviceArray re = ctx->upload(real);
        const DeviceArray im = ctx->upload(imag);
        const DeviceArray out = p.mode == MandelMode::Composed ? mandelbrot_composed(*ctx, re, im, p.max_iter)
                                                               : mandelbrot_custom(*ctx, re, im, p.max_iter);
        counts = ctx->readback_blocking(out);
    };

    BenchCell cell;
    cell.workload = "mandelbrot";
    cell.backend = p.mode == MandelMode::Host ? "host" : ctx->adapter_info().name;
    cell.params = {{"height", p.height},     {"width", p.width},       {"real", {p.real_min, p.real_max}},
                   {"imag", {p.imag_min, p.imag_max}}, {"max_iter", p.max_iter}, {"mode", mode_name(p.mode)},
                   {"warmup", options.warmup}, {"samples", options.samples}};
    cell.samples_ms = time_samples(run, options.warmup, options.samples);
    cell.median_ms = median(cell.samples_ms);
    cell.throughput = cell.median_ms > 0 ? static_cast<double>(p.height * p.width) / (cell.median_ms / 1000.0) : 0.0;
    cell.throughput_unit = "pixels/s";

    const HostArray oracle = p.mode == MandelMode::Host ? counts : mandelbrot_host(real, imag, p.max_iter);
    const auto got = counts.to_i32();
    const auto want = oracle.to_i32();
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != want[i];
    cell.correctness.pixel_mismatch_ppm = got.empty() ? 0.0 : 1e6 * static_cast<double>(mismatches) / static_cast<double>(got.size());
    cell.correctness.passed = cell.correctness.pixel_mismatch_ppm <= 1000.0;
    if (ctx && ctx->adapter_info().is_fallback) cell.notes.push_back("software fallback adapter; timings are not GPU timings");

    if (!options.image_path.empty()) emit_image(counts, std::max(1, p.max_iter), options.image_path);

    BenchReport report;
    report.workload = "mandelbrot";
    report.backend = cell.backend;
    report.params = cell.params;
    report.cells.push_back(std::move(cell));
    return report;
}

}  // namespace ndgpu::apps
