#pragma once

// Grid search over per-layer widths: an HTTP coordinator hands out jobs to
// pull-based worker processes and collects their accuracies.
//
// Wire format: JSON bodies POSTed to /rpc.
//   {"type":"get_job","worker_id":W}      -> {"type":"job","spec":{...}} | {"type":"done"}
//                                            | {"type":"wait","retry_ms":N}
//   {"type":"result","result":{...}}      -> {"type":"ok"}
// Malformed requests get HTTP 400 with {"type":"error","message":...}.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndgpu/apps/report.hpp"
#include "ndgpu/device.hpp"

namespace ndgpu::grid {

struct JobSpec {
    int id = 0;
    std::vector<int> widths;  // hidden layer widths
    int train_size = 1000;
    int eval_size = 200;
    std::uint64_t seed = 1;
    int stub_ms = -1;  // >= 0: sleep instead of training
};

struct JobResult {
    int id = 0;
    double accuracy = 0.0;
    std::string worker_id;
    double train_seconds = 0.0;
};

nlohmann::json to_json(const JobSpec& spec);
nlohmann::json to_json(const JobResult& result);
// Throw Error(ProtocolError) on malformed input.
JobSpec job_from_json(const nlohmann::json& j);
JobResult result_from_json(const nlohmann::json& j);

// Cartesian product in row-major order (last layer varies fastest), ids 0..n-1.
std::vector<JobSpec> enumerate_grid(const std::vector<std::vector<int>>& choices, const JobSpec& base = {});

// Highest accuracy, ties to the lowest id.
std::optional<JobResult> best_result(const std::vector<JobResult>& results);

struct CoordinatorOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::chrono::milliseconds deadline{60000};
    std::chrono::milliseconds wait_retry{50};
    std::chrono::milliseconds linger{2000};  // keep answering "done" after the last result
};

struct ServeSummary {
    double total_seconds = 0.0;
    std::vector<JobResult> results;  // by job id
    std::optional<JobResult> best;
    int requeues = 0;
    int duplicate_results = 0;
    std::map<int, int> assignments;  // job id -> times handed out
};

class Coordinator {
 public:
    Coordinator(std::vector<JobSpec> jobs, CoordinatorOptions options = {});
    ~Coordinator();
    Coordinator(const Coordinator&) = delete;
    Coordinator& operator=(const Coordinator&) = delete;

    // Binds and starts serving in the background. Throws Error(BindError).
    void start();
    int port() const noexcept { return port_; }
    // Blocks until every job has a result and the linger period has passed, then stops the server.
    ServeSummary wait();
    void stop();

    // Protocol handler, also usable without a socket.
    nlohmann::json handle(const nlohmann::json& request);
    bool finished() const;

 private:
    struct State;
    std::unique_ptr<State> state_;
    int port_ = 0;
};

// start() + wait().
ServeSummary serve(std::vector<JobSpec> jobs, const CoordinatorOptions& options = {});

struct Backoff {
    std::chrono::milliseconds base{100};
    std::chrono::milliseconds cap{5000};
    int max_tries = 8;
};

// base * 2^attempt, capped. attempt counts from 0.
std::chrono::milliseconds backoff_delay(const Backoff& b, int attempt);

struct WorkerOptions {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string worker_id;  // default: worker-<pid>
    bool use_device = true;  // false, or NDGPU_FORCE_HOST set: train on the host reference path
    Backoff backoff;
    int crash_after_claims = -1;  // fault injection: exit abruptly after claiming this many jobs
};

// Trains and evaluates one job; ctx may be null (host path). Stub jobs only sleep.
JobResult run_job(const JobSpec& spec, DeviceContext* ctx, const std::string& worker_id);

// Returns the process exit code: 0 once the coordinator says done, 2 when retries are exhausted.
int worker_loop(const WorkerOptions& options);

struct ScalingOptions {
    std::vector<int> worker_counts{1, 2, 4};
    int jobs = 8;
    int stub_job_ms = 500;
    int repeats = 3;
    std::string worker_exe;  // executable accepting: worker --connect HOST:PORT --worker-id ID
    std::vector<std::string> worker_args;
};

// Child process handle for worker executables.
struct WorkerProcess {
    int pid = -1;
};
WorkerProcess spawn_worker(const std::string& exe, const std::vector<std::string>& args);
// Returns the exit status (or 128 + signal).
int wait_worker(WorkerProcess& p);

apps::BenchReport scaling_experiment(const ScalingOptions& options);

}  // namespace ndgpu::grid
