#pragma once

// Benchmark reports (JSON / CSV) and grayscale images.

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndgpu/array.hpp"

namespace ndgpu::apps {

struct Correctness {
    bool passed = false;
    double max_rel_err = 0.0;
    double pixel_mismatch_ppm = 0.0;
};

// One measured (workload, configuration) cell. Serialized with the fields
// workload, backend, params, samples_ms, median_ms, throughput, correctness.
struct BenchCell {
    std::string workload;
    std::string backend;
    nlohmann::json params = nlohmann::json::object();
    std::vector<double> samples_ms;
    double median_ms = 0.0;
    double throughput = 0.0;
    std::string throughput_unit;
    Correctness correctness;
    std::vector<std::string> notes;
};

struct BenchReport {
    std::string workload;
    std::string backend;
    nlohmann::json params = nlohmann::json::object();
    std::vector<BenchCell> cells;
    nlohmann::json extra = nlohmann::json::object();
};

enum class ReportFormat { Json, Csv };

double median(std::vector<double> values);

// Runs `fn` warmup times untimed, then `samples` timed runs; returns milliseconds.
std::vector<double> time_samples(const std::function<void()>& fn, int warmup, int samples);

nlohmann::json to_json(const BenchCell& cell);
nlohmann::json to_json(const BenchReport& report);
// Returns human-readable schema violations; empty when valid.
std::vector<std::string> validate_report_json(const nlohmann::json& doc);
// Header plus one row per cell.
std::string to_csv(const BenchReport& report);

// Format from the extension (.csv -> Csv, otherwise Json).
ReportFormat format_for_path(const std::string& path);
// Throws Error(IoError).
void emit_report(const BenchReport& report, ReportFormat format, const std::string& path);
// 8-bit binary PGM, pixel = 255 * count / max_iter. Throws Error(IoError).
void emit_image(const HostArray& counts, int max_iter, const std::string& path);

}  // namespace ndgpu::apps
