#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <unistd.h>

#include "ndgpu/apps/grid.hpp"
#include "ndgpu/apps/mlp.hpp"

namespace ndgpu::grid {

using nlohmann::json;

std::chrono::milliseconds backoff_delay(const Backoff& b, int attempt) {
    auto d = b.base;
    for (int i = 0; i < attempt && d < b.cap; ++i) d *= 2;
    return std::min(d, b.cap);
}

JobResult run_job(const JobSpec& spec, DeviceContext* ctx, const std::string& worker_id) {
    const auto t0 = std::chrono::steady_clock::now();
    JobResult r;
    r.id = spec.id;
    r.worker_id = worker_id;
    if (spec.stub_ms >= 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(spec.stub_ms));
        double total = 0;
        for (int w : spec.widths) total += w;
        r.accuracy = 0.5 + 0.5 * total / (total + 100.0);
    } else {
        apps::MLPConfig cfg;
        cfg.hidden = spec.widths;
        cfg.batch = std::min(50, spec.train_size);
        cfg.dataset = spec.train_size;
        cfg.steps = spec.train_size / cfg.batch;  // one pass over the training rows
        cfg.seed = spec.seed;
        r.accuracy = apps::train_and_evaluate(ctx, cfg, spec.eval_size);
    }
    r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

namespace {

bool force_host() {
    const char* v = std::getenv("NDGPU_FORCE_HOST");
    return v && *v && std::string_view(v) != "0";
}

}  // namespace

int worker_loop(const WorkerOptions& options) {
    const std::string worker_id = options.worker_id.empty() ? fmt::format("worker-{}", ::getpid()) : options.worker_id;
    httplib::Client client(options.host, options.port);
    client.set_connection_timeout(std::chrono::seconds(2));
    client.set_read_timeout(std::chrono::seconds(60));

    ContextPtr ctx;
    bool ctx_tried = false;
    int claims = 0;
    int failures = 0;

    // Sends one message, retrying with backoff; nullopt once the retries are exhausted.
    auto call = [&](const json& msg) -> std::optional<json> {
        while (true) {
            auto res = client.Post("/rpc", msg.dump(), "application/json");
            if (res && res->status == 200) {
                failures = 0;
                try {
                    return json::parse(res->body);
                } catch (const json::exception& e) {
                    fmt::print(stderr, "{}: bad reply: {}\n", worker_id, e.what());
                }
            } else if (res) {
                fmt::print(stderr, "{}: coordinator answered {}: {}\n", worker_id, res->status, res->body);
            }
            if (++failures >= options.backoff.max_tries) return std::nullopt;
            std::this_thread::sleep_for(backoff_delay(options.backoff, failures - 1));
        }
    };

    while (true) {
        const auto reply = call({{"type", "get_job"}, {"worker_id", worker_id}});
        if (!reply) {
            fmt::print(stderr, "{}: coordinator unreachable, giving up\n", worker_id);
            return 2;
        }
        const auto type = reply->value("type", "");
        if (type == "done") return 0;
        if (type == "wait") {
            std::this_thread::sleep_for(std::chrono::milliseconds(reply->value("retry_ms", 50)));
            continue;
        }
        if (type != "job") {
            fmt::print(stderr, "{}: unexpected reply {}\n", worker_id, reply->dump());
            return 2;
        }
        const JobSpec spec = job_from_json(reply->at("spec"));
        if (options.crash_after_claims >= 0 && ++claims >= options.crash_after_claims) std::_Exit(3);
        if (spec.stub_ms < 0 && options.use_device && !force_host() && !ctx_tried) {
            ctx_tried = true;
            try {
                ctx = create_context();
            } catch (const Error& e) {
                fmt::print(stderr, "{}: {}; training on the host path\n", worker_id, e.what());
            }
        }
        JobResult result;
        try {
            result = run_job(spec, ctx.get(), worker_id);
        } catch (const Error& e) {
            // A failed job is reported with accuracy 0 so the run can finish.
            fmt::print(stderr, "{}: job {} failed: {}\n", worker_id, spec.id, e.what());
            result = JobResult{spec.id, 0.0, worker_id, 0.0};
        }
        if (!call({{"type", "result"}, {"result", to_json(result)}})) {
            fmt::print(stderr, "{}: could not deliver result for job {}\n", worker_id, spec.id);
            return 2;
        }
    }
}

}  // namespace ndgpu::grid
