#include <algorithm>
#include <cerrno>
#include <cstring>
#include <spawn.h>
#include <sys/wait.h>

#include <fmt/format.h>

#include "ndgpu/apps/grid.hpp"

extern char** environ;

namespace ndgpu::grid {

WorkerProcess spawn_worker(const std::string& exe, const std::vector<std::string>& args) {
    std::vector<std::string> storage{exe};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    pid_t pid = -1;
    const int rc = posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ);
    if (rc != 0) throw Error(ErrorCode::IoError, fmt::format("cannot start {}: {}", exe, std::strerror(rc)));
    return {pid};
}

int wait_worker(WorkerProcess& p) {
    if (p.pid <= 0) return -1;
    int status = 0;
    while (waitpid(p.pid, &status, 0) < 0) {
        if (errno != EINTR) return -1;
    }
    p.pid = -1;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return -1;
}

apps::BenchReport scaling_experiment(const ScalingOptions& options) {
    if (options.worker_counts.empty() || options.worker_counts.front() < 1 ||
        !std::is_sorted(options.worker_counts.begin(), options.worker_counts.end())) {
        throw Error(ErrorCode::InvalidArgument, "worker counts must be ascending and >= 1");
    }
    if (options.jobs < 1 || options.repeats < 1) throw Error(ErrorCode::InvalidArgument, "jobs and repeats must be >= 1");
    if (options.worker_exe.empty()) throw Error(ErrorCode::InvalidArgument, "no worker executable");

    JobSpec base;
    base.stub_ms = options.stub_job_ms;
    std::vector<JobSpec> jobs;
    for (int i = 0; i < options.jobs; ++i) {
        JobSpec s = base;
        s.id = i;
        s.widths = {4 * (i + 1)};
        jobs.push_back(s);
    }

    apps::BenchReport report;
    report.workload = "gridsearch_scaling";
    report.backend = "processes";
    report.params = {{"worker_counts", options.worker_counts}, {"jobs", options.jobs},
                     {"stub_job_ms", options.stub_job_ms},     {"repeats", options.repeats}};
    nlohmann::json speedups = nlohmann::json::object();
    for (const int count : options.worker_counts) {
        apps::BenchCell cell;
        cell.workload = "gridsearch_scaling";
        cell.backend = "processes";
        cell.params = {{"workers", count}, {"jobs", options.jobs}, {"stub_job_ms", options.stub_job_ms}};
        bool all_ok = true;
        for (int rep = 0; rep < options.repeats; ++rep) {
            CoordinatorOptions co;
            co.linger = std::chrono::milliseconds(500);
            Coordinator coordinator(jobs, co);
            coordinator.start();
            std::vector<WorkerProcess> procs;
            for (int w = 0; w < count; ++w) {
                std::vector<std::string> args{"worker", "--connect", fmt::format("127.0.0.1:{}", coordinator.port()),
                                              "--worker-id", fmt::format("w{}-{}", count, w)};
                args.insert(args.end(), options.worker_args.begin(), options.worker_args.end());
                procs.push_back(spawn_worker(options.worker_exe, args));
            }
            const ServeSummary summary = coordinator.wait();
            for (auto& p : procs) all_ok = wait_worker(p) == 0 && all_ok;
            all_ok = all_ok && summary.results.size() == jobs.size();
            cell.samples_ms.push_back(summary.total_seconds * 1000.0);
        }
        cell.median_ms = apps::median(cell.samples_ms);
        cell.throughput = cell.median_ms > 0 ? options.jobs / (cell.median_ms * 1e-3) : 0.0;
        cell.throughput_unit = "jobs/s";
        cell.correctness.passed = all_ok;
        report.cells.push_back(std::move(cell));
    }
    const double t1 = report.cells.front().median_ms;
    for (auto& c : report.cells) {
        const int count = c.params["workers"];
        const double s = c.median_ms > 0 ? t1 / c.median_ms : 0.0;
        c.params["speedup_vs_first"] = s;
        speedups[std::to_string(count)] = s;
    }
    report.extra["speedup"] = speedups;
    report.extra["baseline_workers"] = options.worker_counts.front();
    return report;
}

}  // namespace ndgpu::grid
