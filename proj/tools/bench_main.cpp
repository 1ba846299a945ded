#include "common.hpp"
#include "ndgpu/apps/mandelbrot.hpp"
#include "ndgpu/apps/matmul_sweep.hpp"

using namespace ndgpu;

int main(int argc, char** argv) {
    CLI::App app{"ndgpu benchmarks"};
    app.require_subcommand(1);
    tools::DeviceFlags dev;
    tools::add_device_flags(app, dev);

    auto* mandel = app.add_subcommand("mandelbrot", "Mandelbrot escape counts");
    std::int64_t size = 1024;
    int iters = 500;
    std::string mode;
    std::string image;
    std::string report_path;
    int warmup = 1, samples = 5;
    mandel->add_option("--size", size, "grid is size x size")->check(CLI::PositiveNumber);
    mandel->add_option("--iters", iters, "iterations per pixel")->check(CLI::NonNegativeNumber);
    mandel->add_option("--mode", mode, "composed, custom or host")->check(CLI::IsMember({"composed", "custom", "host"}));
    mandel->add_option("--out-image", image, "PGM output path");
    mandel->add_option("--report", report_path, "report path (.json or .csv); stdout when omitted");
    mandel->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
    mandel->add_option("--samples", samples)->check(CLI::Range(3, 1000));
    tools::add_device_flags(*mandel, dev);

    auto* mm = app.add_subcommand("matmul", "square matrix multiplication sweep");
    std::vector<std::int64_t> sizes{64, 256, 1024};
    std::string variant = "all";
    std::uint32_t tile = 16;
    mm->add_option("--sizes", sizes, "matrix sizes, ascending")->delimiter(',');
    mm->add_option("--variant", variant, "host, naive, tiled or all")->check(CLI::IsMember({"host", "naive", "tiled", "all"}));
    mm->add_option("--tile", tile, "tile edge for the tiled kernel")->check(CLI::Range(1, 16));
    mm->add_option("--report", report_path, "report path (.json or .csv); stdout when omitted");
    mm->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
    mm->add_option("--samples", samples)->check(CLI::Range(3, 1000));
    tools::add_device_flags(*mm, dev);

    CLI11_PARSE(app, argc, argv);

    return tools::run_guarded([&] {
        auto ctx = tools::make_context(dev);
        if (*mandel) {
            apps::MandelbrotParams p;
            p.height = p.width = size;
            p.max_iter = iters;
            p.mode = apps::parse_mode(mode.empty() ? (ctx ? "custom" : "host") : mode);
            if (!ctx && p.mode != apps::MandelMode::Host) {
                throw Error(ErrorCode::InvalidArgument, "--backend host only supports --mode host");
            }
            apps::MandelbrotRunOptions opt;
            opt.warmup = warmup;
            opt.samples = samples;
            opt.image_path = image;
            tools::write_report(apps::run_mandelbrot(ctx.get(), p, opt), report_path);
        } else {
            apps::MatmulSweepOptions opt;
            opt.sizes = sizes;
            opt.warmup = warmup;
            opt.samples = samples;
            opt.tile = tile;
            if (variant == "host") opt.variants = {apps::SweepVariant::Host};
            if (variant == "naive") opt.variants = {apps::SweepVariant::Naive};
            if (variant == "tiled") opt.variants = {apps::SweepVariant::Tiled};
            if (!ctx && variant != "host" && variant != "all") {
                throw Error(ErrorCode::InvalidArgument, "--backend host only supports --variant host");
            }
            if (!ctx) opt.variants = {apps::SweepVariant::Host};
            tools::write_report(apps::run_matmul_sweep(ctx.get(), opt), report_path);
        }
        return 0;
    });
}
