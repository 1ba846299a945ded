#include <gtest/gtest.h>

#include <chrono>
#include <future>
#include <thread>

#include <httplib.h>

#include "ndgpu/apps/grid.hpp"
#include "ndgpu/apps/report.hpp"
#include "support/test_util.hpp"

using namespace ndgpu;
using namespace ndgpu::grid;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

std::vector<JobSpec> stub_jobs(int n, int ms) {
    JobSpec base;
    base.stub_ms = ms;
    return enumerate_grid({std::vector<int>(static_cast<std::size_t>(n), 4)}, base);
}

WorkerOptions worker_for(const Coordinator& c, const std::string& id) {
    WorkerOptions w;
    w.port = c.port();
    w.worker_id = id;
    w.use_device = false;
    w.backoff = {10ms, 50ms, 3};
    return w;
}

}  // namespace

TEST(Enumerate, Counts) {
    EXPECT_EQ(enumerate_grid({{4, 16, 64, 256}, {4, 16, 64, 256}, {4, 16, 64, 256}}).size(), 64u);
    EXPECT_EQ(enumerate_grid({{8}}).size(), 1u);
    EXPECT_EQ(enumerate_grid({{4, 8, 16}, {4, 8, 16}, {4, 8, 16}}).size(), 27u);
}

TEST(Enumerate, LastLayerVariesFastest) {
    const auto jobs = enumerate_grid({{4, 8}, {4, 8}});
    ASSERT_EQ(jobs.size(), 4u);
    EXPECT_EQ(jobs[0].widths, (std::vector<int>{4, 4}));
    EXPECT_EQ(jobs[1].widths, (std::vector<int>{4, 8}));
    EXPECT_EQ(jobs[2].widths, (std::vector<int>{8, 4}));
    EXPECT_EQ(jobs[3].widths, (std::vector<int>{8, 8}));
    for (int i = 0; i < 4; ++i) EXPECT_EQ(jobs[static_cast<std::size_t>(i)].id, i);
}

TEST(Wire, JsonRoundTrip) {
    JobSpec s;
    s.id = 7;
    s.widths = {4, 16};
    s.seed = 99;
    s.stub_ms = 3;
    const auto back = job_from_json(to_json(s));
    EXPECT_EQ(back.id, 7);
    EXPECT_EQ(back.widths, s.widths);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.stub_ms, 3);
    JobResult r{3, 0.75, "w1", 1.5};
    const auto rb = result_from_json(to_json(r));
    EXPECT_EQ(rb.id, 3);
    EXPECT_EQ(rb.accuracy, 0.75);
    EXPECT_EQ(rb.worker_id, "w1");
    EXPECT_ERROR_CODE(job_from_json(json{{"id", "x"}}), ErrorCode::ProtocolError);
    EXPECT_ERROR_CODE(result_from_json(json::array()), ErrorCode::ProtocolError);
}

TEST(Best, ArgmaxWithLowestIdTieBreak) {
    std::vector<JobResult> rs{{2, 0.9, "a", 0}, {0, 0.5, "b", 0}, {1, 0.9, "c", 0}};
    EXPECT_EQ(best_result(rs)->id, 1);
    std::reverse(rs.begin(), rs.end());
    EXPECT_EQ(best_result(rs)->id, 1);
    EXPECT_FALSE(best_result({}).has_value());
}

TEST(Backoff, Doubles) {
    Backoff b{100ms, 1000ms, 5};
    EXPECT_EQ(backoff_delay(b, 0), 100ms);
    EXPECT_EQ(backoff_delay(b, 2), 400ms);
    EXPECT_EQ(backoff_delay(b, 10), 1000ms);
}

TEST(Protocol, HandlerLifecycle) {
    CoordinatorOptions o;
    o.deadline = 10s;
    Coordinator c(stub_jobs(2, 0), o);
    const auto j0 = c.handle({{"type", "get_job"}, {"worker_id", "a"}});
    ASSERT_EQ(j0["type"], "job");
    const auto j1 = c.handle({{"type", "get_job"}, {"worker_id", "b"}});
    ASSERT_EQ(j1["type"], "job");
    const auto w = c.handle({{"type", "get_job"}, {"worker_id", "c"}});
    EXPECT_EQ(w["type"], "wait");
    EXPECT_TRUE(w.contains("retry_ms"));
    for (const auto& j : {j0, j1}) {
        const JobResult r{j["spec"]["id"].get<int>(), 0.5, "a", 0.0};
        EXPECT_EQ(c.handle({{"type", "result"}, {"result", to_json(r)}})["type"], "ok");
    }
    EXPECT_TRUE(c.finished());
    EXPECT_EQ(c.handle({{"type", "get_job"}, {"worker_id", "a"}})["type"], "done");
}

TEST(Protocol, MalformedMessages) {
    Coordinator c(stub_jobs(1, 0));
    EXPECT_ERROR_CODE(c.handle(json::array()), ErrorCode::ProtocolError);
    EXPECT_ERROR_CODE(c.handle({{"type", "hello"}}), ErrorCode::ProtocolError);
    EXPECT_ERROR_CODE(c.handle({{"type", "get_job"}}), ErrorCode::ProtocolError);
    EXPECT_ERROR_CODE(c.handle({{"type", "result"}, {"result", to_json(JobResult{0, 0.5, "a", 0})}}), ErrorCode::ProtocolError);
    c.handle({{"type", "get_job"}, {"worker_id", "a"}});
    EXPECT_ERROR_CODE(c.handle({{"type", "result"}, {"result", to_json(JobResult{0, 1.5, "a", 0})}}), ErrorCode::ProtocolError);
    EXPECT_ERROR_CODE(c.handle({{"type", "result"}, {"result", to_json(JobResult{5, 0.5, "a", 0})}}), ErrorCode::ProtocolError);
}

TEST(Protocol, DeadlineRequeueAndLateDuplicate) {
    CoordinatorOptions o;
    o.deadline = 30ms;
    Coordinator c(stub_jobs(1, 0), o);
    const auto first = c.handle({{"type", "get_job"}, {"worker_id", "slow"}});
    ASSERT_EQ(first["type"], "job");
    std::this_thread::sleep_for(60ms);
    const auto again = c.handle({{"type", "get_job"}, {"worker_id", "fast"}});
    ASSERT_EQ(again["type"], "job");
    EXPECT_EQ(again["spec"]["id"], first["spec"]["id"]);
    c.handle({{"type", "result"}, {"result", to_json(JobResult{0, 0.6, "fast", 0})}});
    c.handle({{"type", "result"}, {"result", to_json(JobResult{0, 0.4, "slow", 0})}});
    c.start();
    c.handle({{"type", "get_job"}, {"worker_id", "fast"}});
    c.handle({{"type", "get_job"}, {"worker_id", "slow"}});
    const auto s = c.wait();
    EXPECT_EQ(s.results.size(), 1u);
    EXPECT_EQ(s.results[0].accuracy, 0.6);
    EXPECT_EQ(s.requeues, 1);
    EXPECT_EQ(s.duplicate_results, 1);
    EXPECT_EQ(s.assignments.at(0), 2);
}

TEST(Serve, ZeroJobsWorkerExitsCleanly) {
    CoordinatorOptions o;
    o.linger = 5s;
    Coordinator c({}, o);
    c.start();
    EXPECT_EQ(worker_loop(worker_for(c, "w")), 0);
    const auto s = c.wait();
    EXPECT_TRUE(s.results.empty());
}

TEST(Serve, UnreachableCoordinator) {
    WorkerOptions w;
    w.port = 1;  // nothing listens here
    w.backoff = {5ms, 20ms, 3};
    EXPECT_NE(worker_loop(w), 0);
}

TEST(Serve, HttpRejectsMalformedBody) {
    Coordinator c(stub_jobs(1, 0));
    c.start();
    httplib::Client client("127.0.0.1", c.port());
    const auto res = client.Post("/rpc", "{not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    EXPECT_EQ(json::parse(res->body)["type"], "error");
    c.stop();
}

TEST(Serve, OneWorkerRunsJobsSerially) {
    Coordinator c(stub_jobs(4, 150));
    c.start();
    auto w = std::async(std::launch::async, [&] { return worker_loop(worker_for(c, "solo")); });
    const auto s = c.wait();
    EXPECT_EQ(w.get(), 0);
    EXPECT_EQ(s.results.size(), 4u);
    EXPECT_GE(s.total_seconds, 0.6);
    EXPECT_LT(s.total_seconds, 0.6 + 1.0);
}

TEST(Serve, FourWorkersRunJobsInParallel) {
    Coordinator c(stub_jobs(4, 300));
    c.start();
    std::vector<std::future<int>> ws;
    for (int i = 0; i < 4; ++i) {
        ws.push_back(std::async(std::launch::async, [&c, i] { return worker_loop(worker_for(c, "w" + std::to_string(i))); }));
    }
    const auto s = c.wait();
    for (auto& w : ws) EXPECT_EQ(w.get(), 0);
    EXPECT_EQ(s.results.size(), 4u);
    EXPECT_GE(s.total_seconds, 0.3);
    EXPECT_LT(s.total_seconds, 0.3 + 0.5);
    for (const auto& [id, n] : s.assignments) EXPECT_EQ(n, 1) << id;
}

TEST(Jobs, RealJobBeatsChanceAndIsDeterministic) {
    JobSpec s;
    s.widths = {4, 4, 4};
    s.train_size = 1000;
    s.eval_size = 200;
    s.seed = 3;
    const auto a = run_job(s, nullptr, "t");
    const auto b = run_job(s, nullptr, "t");
    EXPECT_GT(a.accuracy, 0.25);
    EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(Processes, ScalingSingleCountIsUnitSpeedup) {
    ScalingOptions o;
    o.worker_counts = {1};
    o.jobs = 2;
    o.stub_job_ms = 50;
    o.repeats = 3;
    o.worker_exe = NDGPU_GRIDSEARCH_EXE;
    const auto r = scaling_experiment(o);
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.extra["speedup"]["1"], 1.0);
    EXPECT_TRUE(apps::validate_report_json(apps::to_json(r)).empty());
}

TEST(Processes, HeterogeneousJobsBoundedByLongest) {
    auto jobs = stub_jobs(3, 50);
    jobs[1].stub_ms = 400;
    Coordinator c(jobs);
    c.start();
    std::vector<WorkerProcess> ps;
    for (int i = 0; i < 3; ++i) {
        ps.push_back(spawn_worker(NDGPU_GRIDSEARCH_EXE, {"worker", "--connect", "127.0.0.1:" + std::to_string(c.port()),
                                                         "--worker-id", "p" + std::to_string(i), "--backend", "host"}));
    }
    const auto s = c.wait();
    for (auto& p : ps) EXPECT_EQ(wait_worker(p), 0);
    EXPECT_EQ(s.results.size(), 3u);
    EXPECT_GE(s.total_seconds, 0.4);
}

TEST(Processes, KilledWorkerJobIsRequeued) {
    CoordinatorOptions o;
    o.deadline = 300ms;
    Coordinator c(stub_jobs(3, 50), o);
    c.start();
    const auto addr = "127.0.0.1:" + std::to_string(c.port());
    auto crasher = spawn_worker(NDGPU_GRIDSEARCH_EXE, {"worker", "--connect", addr, "--worker-id", "crash", "--crash-after-claims", "1"});
    EXPECT_EQ(wait_worker(crasher), 3);
    auto healthy = spawn_worker(NDGPU_GRIDSEARCH_EXE, {"worker", "--connect", addr, "--worker-id", "ok", "--backend", "host"});
    const auto s = c.wait();
    EXPECT_EQ(wait_worker(healthy), 0);
    EXPECT_EQ(s.results.size(), 3u);
    EXPECT_GE(s.requeues, 1);
}
