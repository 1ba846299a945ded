#include "common.hpp"
#include "ndgpu/apps/mlp.hpp"

using namespace ndgpu;

int main(int argc, char** argv) {
    CLI::App app{"ndgpu training demo"};
    app.require_subcommand(1);
    tools::DeviceFlags dev;
    tools::add_device_flags(app, dev);

    auto* mlp = app.add_subcommand("mlp", "train a small MLP on Gaussian blobs");
    apps::MLPConfig cfg;
    std::string report_path;
    mlp->add_option("--steps", cfg.steps)->check(CLI::NonNegativeNumber);
    mlp->add_option("--hidden", cfg.hidden, "hidden widths, comma separated")->delimiter(',');
    mlp->add_option("--batch", cfg.batch)->check(CLI::PositiveNumber);
    mlp->add_option("--lr", cfg.lr)->check(CLI::NonNegativeNumber);
    mlp->add_option("--seed", cfg.seed);
    mlp->add_option("--input-dim", cfg.input_dim)->check(CLI::PositiveNumber);
    mlp->add_option("--classes", cfg.classes)->check(CLI::PositiveNumber);
    mlp->add_option("--dataset", cfg.dataset, "training rows")->check(CLI::PositiveNumber);
    mlp->add_option("--report", report_path, "report path (.json or .csv); stdout when omitted");
    tools::add_device_flags(*mlp, dev);

    CLI11_PARSE(app, argc, argv);

    return tools::run_guarded([&] {
        auto ctx = tools::make_context(dev);
        const auto report = apps::run_mlp_train(ctx.get(), cfg);
        fmt::print(stderr, "loss {:.6f} -> {:.6f}, grad check max rel err {:.3g}\n", report.extra["initial_loss"].get<double>(),
                   report.extra["final_loss"].get<double>(), report.extra["grad_check"]["max_rel_err"].get<double>());
        tools::write_report(report, report_path);
        return report.cells.front().correctness.passed ? 0 : 1;
    });
}
