#include <fstream>

#include <unistd.h>

#include "common.hpp"
#include "ndgpu/apps/grid.hpp"

using namespace ndgpu;

namespace {

std::pair<std::string, int> split_address(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "address must be HOST:PORT");
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

std::string self_exe() {
    std::string buf(4096, '\0');
    const auto n = ::readlink("/proc/self/exe", buf.data(), buf.size() - 1);
    if (n <= 0) throw Error(ErrorCode::IoError, "cannot locate the running executable");
    buf.resize(static_cast<std::size_t>(n));
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed grid search"};
    app.require_subcommand(1);

    auto* serve = app.add_subcommand("serve", "hand out jobs and collect results");
    std::string bind = "127.0.0.1:8765";
    int layers = 3;
    std::vector<int> choices{4, 8, 16};
    std::string report_path;
    int deadline_ms = 60000;
    int stub_ms = -1;
    grid::JobSpec base;
    serve->add_option("--bind", bind, "HOST:PORT (port 0 picks one)");
    serve->add_option("--layers", layers)->check(CLI::PositiveNumber);
    serve->add_option("--choices", choices, "widths per layer, comma separated")->delimiter(',');
    serve->add_option("--report", report_path, "summary path (.json); stdout when omitted");
    serve->add_option("--deadline-ms", deadline_ms, "requeue a job after this long")->check(CLI::PositiveNumber);
    serve->add_option("--train-size", base.train_size)->check(CLI::PositiveNumber);
    serve->add_option("--eval-size", base.eval_size)->check(CLI::PositiveNumber);
    serve->add_option("--seed", base.seed);
    serve->add_option("--stub-job-ms", stub_ms, "sleep instead of training");

    auto* worker = app.add_subcommand("worker", "pull and run jobs");
    std::string connect = "127.0.0.1:8765";
    std::string backend = "gpu";
    grid::WorkerOptions wopt;
    worker->add_option("--connect", connect, "coordinator HOST:PORT");
    worker->add_option("--backend", backend)->check(CLI::IsMember({"gpu", "host"}));
    worker->add_option("--worker-id", wopt.worker_id);
    worker->add_option("--crash-after-claims", wopt.crash_after_claims, "exit abruptly after claiming N jobs");

    auto* scale = app.add_subcommand("scale", "wall time against worker count with stub jobs");
    grid::ScalingOptions sopt;
    scale->add_option("--workers", sopt.worker_counts, "worker counts, ascending")->delimiter(',');
    scale->add_option("--stub-job-ms", sopt.stub_job_ms)->check(CLI::NonNegativeNumber);
    scale->add_option("--jobs", sopt.jobs)->check(CLI::PositiveNumber);
    scale->add_option("--repeats", sopt.repeats)->check(CLI::Range(3, 1000));
    scale->add_option("--report", report_path, "report path (.json or .csv); stdout when omitted");

    CLI11_PARSE(app, argc, argv);

    return tools::run_guarded([&] {
        if (*serve) {
            const auto [host, port] = split_address(bind);
            base.stub_ms = stub_ms;
            const auto jobs = grid::enumerate_grid(std::vector<std::vector<int>>(static_cast<std::size_t>(layers), choices), base);
            grid::CoordinatorOptions co;
            co.host = host;
            co.port = port;
            co.deadline = std::chrono::milliseconds(deadline_ms);
            grid::Coordinator coordinator(jobs, co);
            coordinator.start();
            fmt::print(stderr, "serving {} jobs on {}:{}\n", jobs.size(), host, coordinator.port());
            const auto summary = coordinator.wait();
            nlohmann::json out = {{"total_seconds", summary.total_seconds},
                                  {"jobs", jobs.size()},
                                  {"requeues", summary.requeues},
                                  {"duplicate_results", summary.duplicate_results}};
            out["results"] = nlohmann::json::array();
            for (const auto& r : summary.results) out["results"].push_back(grid::to_json(r));
            if (summary.best) {
                out["best"] = grid::to_json(*summary.best);
                out["best"]["widths"] = jobs.at(static_cast<std::size_t>(summary.best->id)).widths;
            }
            if (report_path.empty() || report_path == "-") {
                fmt::print("{}\n", out.dump(2));
            } else {
                std::ofstream f(report_path);
                if (!(f << out.dump(2) << "\n")) throw Error(ErrorCode::IoError, "cannot write " + report_path);
            }
            return 0;
        }
        if (*worker) {
            const auto [host, port] = split_address(connect);
            wopt.host = host;
            wopt.port = port;
            wopt.use_device = backend == "gpu";
            return grid::worker_loop(wopt);
        }
        sopt.worker_exe = self_exe();
        tools::write_report(grid::scaling_experiment(sopt), report_path);
        return 0;
    });
}
