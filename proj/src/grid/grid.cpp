#include <fmt/format.h>

#include "ndgpu/apps/grid.hpp"

namespace ndgpu::grid {

using nlohmann::json;

json to_json(const JobSpec& s) {
    json j = {{"id", s.id},   {"widths", s.widths}, {"train_size", s.train_size}, {"eval_size", s.eval_size},
              {"seed", s.seed}};
    if (s.stub_ms >= 0) j["stub_ms"] = s.stub_ms;
    return j;
}

json to_json(const JobResult& r) {
    return {{"id", r.id}, {"accuracy", r.accuracy}, {"worker_id", r.worker_id}, {"train_seconds", r.train_seconds}};
}

JobSpec job_from_json(const json& j) {
    try {
        JobSpec s;
        s.id = j.at("id").get<int>();
        s.widths = j.at("widths").get<std::vector<int>>();
        s.train_size = j.at("train_size").get<int>();
        s.eval_size = j.at("eval_size").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.stub_ms = j.value("stub_ms", -1);
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, fmt::format("bad job spec: {}", e.what()));
    }
}

JobResult result_from_json(const json& j) {
    try {
        JobResult r;
        r.id = j.at("id").get<int>();
        r.accuracy = j.at("accuracy").get<double>();
        r.worker_id = j.at("worker_id").get<std::string>();
        r.train_seconds = j.at("train_seconds").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, fmt::format("bad job result: {}", e.what()));
    }
}

std::vector<JobSpec> enumerate_grid(const std::vector<std::vector<int>>& choices, const JobSpec& base) {
    if (choices.empty()) throw Error(ErrorCode::InvalidArgument, "the grid needs at least one layer");
    for (const auto& c : choices)
        if (c.empty()) throw Error(ErrorCode::InvalidArgument, "every layer needs at least one choice");
    std::vector<JobSpec> jobs;
    std::vector<std::size_t> idx(choices.size(), 0);
    while (true) {
        JobSpec s = base;
        s.id = static_cast<int>(jobs.size());
        s.widths.clear();
        for (std::size_t l = 0; l < choices.size(); ++l) s.widths.push_back(choices[l][idx[l]]);
        jobs.push_back(std::move(s));
        std::size_t l = choices.size();
        while (l-- > 0) {
            if (++idx[l] < choices[l].size()) break;
            idx[l] = 0;
        }
        if (l == static_cast<std::size_t>(-1)) break;
    }
    return jobs;
}

std::optional<JobResult> best_result(const std::vector<JobResult>& results) {
    std::optional<JobResult> best;
    for (const auto& r : results) {
        if (!best || r.accuracy > best->accuracy || (r.accuracy == best->accuracy && r.id < best->id)) best = r;
    }
    return best;
}

}  // namespace ndgpu::grid
