#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "ndgpu/apps/grid.hpp"

namespace ndgpu::grid {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Coordinator::State {
    CoordinatorOptions options;
    std::map<int, JobSpec> jobs;

    mutable std::mutex mu;
    std::condition_variable cv;
    std::deque<int> pending;
    struct Assignment {
        std::string worker;
        Clock::time_point deadline;
    };
    std::map<int, Assignment> assigned;
    std::map<int, JobResult> completed;
    std::set<std::string> workers_seen;
    std::set<std::string> workers_done;
    std::map<int, int> assignments;
    int requeues = 0;
    int duplicates = 0;
    Clock::time_point started{};
    Clock::time_point finished_at{};

    httplib::Server server;
    std::thread thread;
    bool running = false;

    bool all_done_locked() const { return completed.size() == jobs.size(); }

    void expire_locked(Clock::time_point now) {
        for (auto it = assigned.begin(); it != assigned.end();) {
            if (it->second.deadline <= now) {
                pending.push_front(it->first);
                ++requeues;
                it = assigned.erase(it);
            } else {
                ++it;
            }
        }
    }
};

Coordinator::Coordinator(std::vector<JobSpec> jobs, CoordinatorOptions options) : state_(std::make_unique<State>()) {
    state_->options = std::move(options);
    for (auto& j : jobs) {
        const int id = j.id;
        if (!state_->jobs.emplace(id, std::move(j)).second) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate job id {}", id));
        }
        state_->pending.push_back(id);
    }
    state_->started = state_->finished_at = Clock::now();
}

Coordinator::~Coordinator() { stop(); }

json Coordinator::handle(const json& request) {
    auto& s = *state_;
    if (!request.is_object() || !request.contains("type") || !request["type"].is_string()) {
        throw Error(ErrorCode::ProtocolError, "request needs a string 'type'");
    }
    const auto type = request["type"].get<std::string>();
    const auto now = Clock::now();
    std::lock_guard lock(s.mu);
    s.expire_locked(now);

    if (type == "get_job") {
        if (!request.contains("worker_id") || !request["worker_id"].is_string()) {
            throw Error(ErrorCode::ProtocolError, "get_job needs a string 'worker_id'");
        }
        const auto worker = request["worker_id"].get<std::string>();
        s.workers_seen.insert(worker);
        if (s.all_done_locked()) {
            s.workers_done.insert(worker);
            s.cv.notify_all();
            return {{"type", "done"}};
        }
        if (s.pending.empty()) return {{"type", "wait"}, {"retry_ms", s.options.wait_retry.count()}};
        const int id = s.pending.front();
        s.pending.pop_front();
        s.assigned[id] = {worker, now + s.options.deadline};
        ++s.assignments[id];
        return {{"type", "job"}, {"spec", to_json(s.jobs.at(id))}};
    }

    if (type == "result") {
        if (!request.contains("result")) throw Error(ErrorCode::ProtocolError, "result message needs 'result'");
        const JobResult r = result_from_json(request["result"]);
        if (!s.jobs.contains(r.id)) throw Error(ErrorCode::ProtocolError, fmt::format("unknown job id {}", r.id));
        if (!s.assignments.contains(r.id)) {
            throw Error(ErrorCode::ProtocolError, fmt::format("job {} was never assigned", r.id));
        }
        if (!std::isfinite(r.accuracy) || r.accuracy < 0.0 || r.accuracy > 1.0) {
            throw Error(ErrorCode::ProtocolError, fmt::format("job {}: accuracy {} is outside [0, 1]", r.id, r.accuracy));
        }
        if (s.completed.contains(r.id)) {
            ++s.duplicates;
            return {{"type", "ok"}};
        }
        s.completed.emplace(r.id, r);
        s.assigned.erase(r.id);
        std::erase(s.pending, r.id);
        if (s.all_done_locked()) {
            s.finished_at = now;
            s.cv.notify_all();
        }
        return {{"type", "ok"}};
    }
    throw Error(ErrorCode::ProtocolError, fmt::format("unknown message type '{}'", type));
}

bool Coordinator::finished() const {
    std::lock_guard lock(state_->mu);
    return state_->all_done_locked();
}

void Coordinator::start() {
    auto& s = *state_;
    s.server.Post("/rpc", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const json reply = handle(json::parse(req.body));
            res.set_content(reply.dump(), "application/json");
        } catch (const json::exception& e) {
            res.status = 400;
            res.set_content(json{{"type", "error"}, {"message", e.what()}}.dump(), "application/json");
        } catch (const Error& e) {
            res.status = 400;
            res.set_content(json{{"type", "error"}, {"message", e.what()}}.dump(), "application/json");
        }
    });
    if (s.options.port == 0) {
        port_ = s.server.bind_to_any_port(s.options.host);
    } else {
        port_ = s.server.bind_to_port(s.options.host, s.options.port) ? s.options.port : -1;
    }
    if (port_ <= 0) {
        throw Error(ErrorCode::BindError, fmt::format("cannot bind {}:{}", s.options.host, s.options.port));
    }
    {
        std::lock_guard lock(s.mu);
        s.started = Clock::now();
        if (s.jobs.empty()) s.finished_at = s.started;
    }
    s.running = true;
    s.thread = std::thread([&s] { s.server.listen_after_bind(); });
    // stop() is a no-op until the listen loop is running.
    s.server.wait_until_ready();
}

ServeSummary Coordinator::wait() {
    auto& s = *state_;
    {
        std::unique_lock lock(s.mu);
        while (true) {
            const auto now = Clock::now();
            s.expire_locked(now);
            if (s.all_done_locked()) {
                bool everyone_told = !s.workers_seen.empty();
                for (const auto& w : s.workers_seen) everyone_told = everyone_told && s.workers_done.contains(w);
                if (everyone_told || now - s.finished_at >= s.options.linger) break;
            }
            s.cv.wait_for(lock, std::chrono::milliseconds(20));
        }
    }
    stop();
    std::lock_guard lock(s.mu);
    ServeSummary out;
    out.total_seconds = std::chrono::duration<double>(s.finished_at - s.started).count();
    for (const auto& [id, r] : s.completed) out.results.push_back(r);
    out.best = best_result(out.results);
    out.requeues = s.requeues;
    out.duplicate_results = s.duplicates;
    out.assignments = s.assignments;
    return out;
}

void Coordinator::stop() {
    auto& s = *state_;
    if (!s.running) return;
    s.server.stop();
    if (s.thread.joinable()) s.thread.join();
    s.running = false;
}

ServeSummary serve(std::vector<JobSpec> jobs, const CoordinatorOptions& options) {
    Coordinator c(std::move(jobs), options);
    c.start();
    return c.wait();
}

}  // namespace ndgpu::grid
