#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>

#include "ndgpu/apps/report.hpp"

namespace ndgpu::apps {

using nlohmann::json;

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> time_samples(const std::function<void()>& fn, int warmup, int samples) {
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> out;
    for (int i = 0; i < samples; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        out.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return out;
}

json to_json(const BenchCell& c) {
    json j;
    j["workload"] = c.workload;
    j["backend"] = c.backend;
    j["params"] = c.params;
    j["samples_ms"] = c.samples_ms;
    j["median_ms"] = c.median_ms;
    j["throughput"] = c.throughput;
    j["throughput_unit"] = c.throughput_unit;
    j["correctness"] = {{"passed", c.correctness.passed},
                        {"max_rel_err", c.correctness.max_rel_err},
                        {"pixel_mismatch_ppm", c.correctness.pixel_mismatch_ppm}};
    if (!c.notes.empty()) j["notes"] = c.notes;
    return j;
}

json to_json(const BenchReport& r) {
    json j;
    j["workload"] = r.workload;
    j["backend"] = r.backend;
    j["params"] = r.params;
    j["cells"] = json::array();
    for (const auto& c : r.cells) j["cells"].push_back(to_json(c));
    if (!r.extra.empty()) j["extra"] = r.extra;
    return j;
}

std::vector<std::string> validate_report_json(const json& doc) {
    std::vector<std::string> errors;
    auto need = [&errors](const json& obj, const char* key, auto pred, const char* what, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) {
            errors.push_back(fmt::format("{}: missing '{}'", where, key));
        } else if (!pred(obj.at(key))) {
            errors.push_back(fmt::format("{}: '{}' must be {}", where, key, what));
        }
    };
    auto is_string = [](const json& v) { return v.is_string(); };
    auto is_number = [](const json& v) { return v.is_number(); };
    auto is_object = [](const json& v) { return v.is_object(); };
    need(doc, "workload", is_string, "a string", "report");
    need(doc, "backend", is_string, "a string", "report");
    need(doc, "params", is_object, "an object", "report");
    need(doc, "cells", [](const json& v) { return v.is_array(); }, "an array", "report");
    if (!doc.is_object() || !doc.contains("cells") || !doc["cells"].is_array()) return errors;
    std::size_t i = 0;
    for (const auto& c : doc["cells"]) {
        const auto where = fmt::format("cells[{}]", i++);
        need(c, "workload", is_string, "a string", where);
        need(c, "backend", is_string, "a string", where);
        need(c, "params", is_object, "an object", where);
        need(c, "samples_ms",
             [](const json& v) {
                 return v.is_array() && v.size() >= 3 &&
                        std::all_of(v.begin(), v.end(), [](const json& s) { return s.is_number() && s.get<double>() >= 0.0; });
             },
             "an array of at least 3 non-negative numbers", where);
        need(c, "median_ms", is_number, "a number", where);
        need(c, "throughput", is_number, "a number", where);
        need(c, "correctness", is_object, "an object", where);
        if (c.contains("correctness") && c["correctness"].is_object()) {
            const auto& k = c["correctness"];
            need(k, "passed", [](const json& v) { return v.is_boolean(); }, "a boolean", where + ".correctness");
            need(k, "max_rel_err", is_number, "a number", where + ".correctness");
            need(k, "pixel_mismatch_ppm", is_number, "a number", where + ".correctness");
        }
    }
    return errors;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string to_csv(const BenchReport& r) {
    std::string out = "workload,backend,params,samples_ms,median_ms,throughput,throughput_unit,passed,max_rel_err,"
                      "pixel_mismatch_ppm\n";
    for (const auto& c : r.cells) {
        std::string samples;
        for (std::size_t i = 0; i < c.samples_ms.size(); ++i) samples += fmt::format("{}{:.6g}", i ? ";" : "", c.samples_ms[i]);
        out += fmt::format("{},{},{},{},{:.6g},{:.6g},{},{},{:.6g},{:.6g}\n", csv_field(c.workload), csv_field(c.backend),
                           csv_field(c.params.dump()), samples, c.median_ms, c.throughput, csv_field(c.throughput_unit),
                           c.correctness.passed ? "true" : "false", c.correctness.max_rel_err,
                           c.correctness.pixel_mismatch_ppm);
    }
    return out;
}

ReportFormat format_for_path(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0 ? ReportFormat::Csv : ReportFormat::Json;
}

void emit_report(const BenchReport& report, ReportFormat format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    out << (format == ReportFormat::Json ? to_json(report).dump(2) + "\n" : to_csv(report));
    if (!out) throw Error(ErrorCode::IoError, "write to " + path + " failed");
}

void emit_image(const HostArray& counts, int max_iter, const std::string& path) {
    if (counts.shape().rank() != 2) throw Error(ErrorCode::InvalidArgument, "image needs a rank-2 array");
    if (max_iter <= 0) throw Error(ErrorCode::InvalidArgument, "max_iter must be positive");
    const auto h = counts.shape()[0], w = counts.shape()[1];
    std::string pixels(static_cast<std::size_t>(h * w), '\0');
    const auto values = counts.to_f64();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, static_cast<double>(max_iter));
        pixels[i] = static_cast<char>(static_cast<unsigned char>(255.0 * v / max_iter));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw Error(ErrorCode::IoError, "write to " + path + " failed");
}

}  // namespace ndgpu::apps
