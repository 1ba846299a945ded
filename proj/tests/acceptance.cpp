// Acceptance runner: one PASS/FAIL/SKIP line per criterion on stdout, details on stderr.
//
//   acceptance [--only 1,3,...] [--expect-no-adapter]
//
// Checks that need a device report SKIP when no adapter is available; checks that
// run on the host reference path still execute. Exit status is 1 if any line FAILs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ndgpu/apps/grid.hpp"
#include "ndgpu/apps/mandelbrot.hpp"
#include "ndgpu/apps/matmul_sweep.hpp"
#include "ndgpu/apps/mlp.hpp"
#include "ndgpu/host_ops.hpp"
#include "ndgpu/kernel.hpp"
#include "ndgpu/ops.hpp"
#include "support/suites.hpp"

using namespace ndgpu;
namespace ts = ndgpu::testing;
using Clock = std::chrono::steady_clock;

namespace {

enum class Status { Pass, Fail, Skip };

struct Check {
    std::string name;
    Status status = Status::Pass;
    std::string detail;
};

struct Criterion {
    int id = 0;
    std::string title;
    std::vector<Check> checks;
    double seconds = 0.0;

    Status status() const {
        bool skipped = false;
        for (const auto& c : checks) {
            if (c.status == Status::Fail) return Status::Fail;
            skipped = skipped || c.status == Status::Skip;
        }
        return skipped ? Status::Skip : Status::Pass;
    }
};

const char* label(Status s) {
    switch (s) {
        case Status::Pass: return "PASS";
        case Status::Fail: return "FAIL";
        case Status::Skip: return "SKIP";
    }
    return "?";
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

class Runner {
 public:
    Runner(ContextPtr ctx, std::string no_adapter_reason) : ctx_(std::move(ctx)), no_adapter_(std::move(no_adapter_reason)) {}

    DeviceContext* ctx() const { return ctx_.get(); }

    // Runs `fn`, which returns "" on success or a failure description.
    void check(Criterion& c, const std::string& name, const std::function<std::string()>& fn) {
        const auto t = Clock::now();
        Check out{name, Status::Pass, {}};
        try {
            out.detail = fn();
            if (!out.detail.empty() && out.detail.rfind("ok: ", 0) != 0) out.status = Status::Fail;
            if (out.detail.rfind("ok: ", 0) == 0) out.detail = out.detail.substr(4);
        } catch (const std::exception& e) {
            out.status = Status::Fail;
            out.detail = std::string("exception: ") + e.what();
        }
        fmt::print(stderr, "  [{}] {} {}{} ({:.1f} s)\n", label(out.status), name, out.detail.empty() ? "" : "- ",
                   out.detail, seconds_since(t));
        c.checks.push_back(std::move(out));
    }

    // Same, but reported as an explicit skip when there is no device.
    void device_check(Criterion& c, const std::string& name, const std::function<std::string()>& fn) {
        if (!ctx_) {
            fmt::print(stderr, "  [SKIP] {} - no device: {}\n", name, no_adapter_);
            c.checks.push_back({name, Status::Skip, "no device"});
            return;
        }
        check(c, name, fn);
    }

 private:
    ContextPtr ctx_;
    std::string no_adapter_;
};

std::string fail_if(bool bad, const std::string& what) { return bad ? what : std::string(); }

std::string suite_result(const ts::SuiteStats& s, int required) {
    if (s.cases < required) return fmt::format("only {} cases", s.cases);
    if (!s.ok()) return fmt::format("{} of {} cases failed; first: {}", s.failures, s.cases, s.first_failure);
    return fmt::format("ok: {} cases, max err {:.2e}", s.cases, s.max_err);
}

// ---------------------------------------------------------------- 1

Criterion oracle_suite(Runner& r) {
    Criterion c{1, "oracle suite", {}};
    constexpr int kCases = 200;
    const auto t = Clock::now();
    for (auto kind : {BinaryOpKind::Add, BinaryOpKind::Sub, BinaryOpKind::Mul, BinaryOpKind::Div, BinaryOpKind::Maximum,
                      BinaryOpKind::Greater, BinaryOpKind::Less, BinaryOpKind::Equal}) {
        r.device_check(c, std::string(op_name(kind)), [&] {
            return suite_result(ts::binary_suite(*r.ctx(), kind, kCases, 7000 + static_cast<int>(kind)), kCases);
        });
    }
    r.device_check(c, "where", [&] { return suite_result(ts::where_suite(*r.ctx(), kCases, 71), kCases); });
    r.device_check(c, "astype", [&] { return suite_result(ts::astype_suite(*r.ctx(), kCases, 72), kCases); });
    r.device_check(c, "reduce", [&] { return suite_result(ts::reduce_suite(*r.ctx(), kCases, 73), kCases); });
    for (auto [k, name] : {std::pair{ts::TestKernel::SquaredDiff, "squared_diff"}, std::pair{ts::TestKernel::ReluBwd, "relu_bwd"},
                           std::pair{ts::TestKernel::Identity, "identity"}}) {
        r.device_check(c, name, [&, k] { return suite_result(ts::kernel_suite(*r.ctx(), k, kCases, 80 + static_cast<int>(k)), kCases); });
    }
    if (r.ctx()) {
        const double secs = seconds_since(t);
        r.check(c, "runtime < 120 s", [&] { return secs < 120 ? fmt::format("ok: {:.1f} s", secs) : fmt::format("{:.1f} s", secs); });
    }
    return c;
}

// ---------------------------------------------------------------- 2

// float32 replay of the host loop; identical operation order to the device kernel.
std::vector<std::int32_t> mandelbrot_f32(const HostArray& real, const HostArray& imag, int max_iter) {
    const auto re = real.to_f32(), im = imag.to_f32();
    std::vector<std::int32_t> out(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) {
        float x = 0, y = 0;
        int n = 0;
        for (int k = 0; k < max_iter; ++k) {
            const float nx = x * x - y * y + re[i];
            const float ny = x * y * 2.0f + im[i];
            x = nx;
            y = ny;
            n += (x * x + y * y < 4.0f);
        }
        out[i] = n;
    }
    return out;
}

double mismatch_ppm(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < a.size(); ++i) bad += a[i] != b[i];
    return a.empty() ? 0.0 : 1e6 * static_cast<double>(bad) / static_cast<double>(a.size());
}

Criterion mandelbrot(Runner& r) {
    Criterion c{2, "mandelbrot", {}};
    r.check(c, "host c=0 -> 500", [] {
        const float zero[] = {0.0f};
        const auto n = apps::mandelbrot_host(HostArray::from_f32(Shape{1}, zero), HostArray::from_f32(Shape{1}, zero), 500).to_i32()[0];
        return fail_if(n != 500, fmt::format("count {}", n));
    });
    r.device_check(c, "device c=0 -> 500", [&] {
        const float zero[] = {0.0f};
        const auto z = r.ctx()->upload(HostArray::from_f32(Shape{1}, zero));
        const auto a = r.ctx()->readback_blocking(apps::mandelbrot_custom(*r.ctx(), z, z, 500)).to_i32()[0];
        const auto b = r.ctx()->readback_blocking(apps::mandelbrot_composed(*r.ctx(), z, z, 500)).to_i32()[0];
        return fail_if(a != 500 || b != 500, fmt::format("custom {} composed {}", a, b));
    });
    for (std::int64_t n : {64, 256, 1024}) {
        r.device_check(c, fmt::format("composed == custom at {}^2", n), [&, n]() -> std::string {
            apps::MandelbrotParams p;
            p.height = p.width = n;
            const auto t = Clock::now();
            const auto composed = r.ctx()->readback_blocking(apps::mandelbrot_composed(*r.ctx(), p));
            const auto custom = r.ctx()->readback_blocking(apps::mandelbrot_custom(*r.ctx(), p));
            const double ppm = mismatch_ppm(composed.to_i32(), custom.to_i32());
            std::string out = fail_if(ppm != 0.0, fmt::format("{:.1f} ppm differ", ppm));
            if (n == 256) {
                const auto real = apps::mandelbrot_real(p), imag = apps::mandelbrot_imag(p);
                const auto host = apps::mandelbrot_host(real, imag, p.max_iter).to_i32();
                const double host_ppm = mismatch_ppm(custom.to_i32(), host);
                const double f32_ppm = mismatch_ppm(custom.to_i32(), mandelbrot_f32(real, imag, p.max_iter));
                const double secs = seconds_since(t);
                fmt::print(stderr, "    256^2: vs double host {:.1f} ppm, vs float32 host replay {:.1f} ppm, {:.1f} s\n",
                           host_ppm, f32_ppm, secs);
                if (host_ppm > 1000.0) {
                    out += fmt::format("{}agreement with double host {:.3f}% < 99.9% ({:.0f} ppm; float32 replay {:.0f} ppm)",
                                       out.empty() ? "" : "; ", 100.0 - host_ppm / 1e4, host_ppm, f32_ppm);
                }
                if (secs >= 60.0) out += fmt::format("{}256^2 took {:.1f} s", out.empty() ? "" : "; ", secs);
                if (out.empty()) out = fmt::format("ok: host agreement {:.3f}%, {:.1f} s", 100.0 - host_ppm / 1e4, secs);
            }
            return out;
        });
    }
    return c;
}

// ---------------------------------------------------------------- 3

Criterion matmul(Runner& r) {
    Criterion c{3, "matmul", {}};
    r.check(c, "host A*I == A", [] {
        const auto a = apps::random_matrix(37, 37, 5);
        std::vector<float> eye(37 * 37, 0.0f);
        for (int i = 0; i < 37; ++i) eye[static_cast<std::size_t>(i * 37 + i)] = 1.0f;
        const auto p = host::matmul(a, HostArray::from_f32(Shape{37, 37}, eye));
        return fail_if(p.shape() != a.shape() || p.words() != a.words(), "product differs from A");
    });
    r.device_check(c, "20 random shapes", [&]() -> std::string {
        std::mt19937_64 rng(2024);
        std::uniform_int_distribution<std::int64_t> dim(1, 256);
        double worst_cross = 0, worst_host = 0;
        int non_multiple = 0;
        for (int t = 0; t < 20; ++t) {
            std::int64_t m = dim(rng), k = dim(rng), n = dim(rng);
            if (t == 0) m = 256, k = 256, n = 256;
            non_multiple += (m % 16 || k % 16 || n % 16);
            const auto ha = apps::random_matrix(m, k, 100 + t), hb = apps::random_matrix(k, n, 200 + t);
            const auto a = r.ctx()->upload(ha), b = r.ctx()->upload(hb);
            const auto naive = r.ctx()->readback_blocking(ops::matmul(*r.ctx(), a, b, MatmulVariant::Naive)).to_f64();
            const auto tiled = r.ctx()->readback_blocking(ops::matmul(*r.ctx(), a, b, MatmulVariant::Tiled)).to_f64();
            const auto want = host::matmul(ha, hb).to_f64();
            const double cross = apps::max_rel_err(tiled, naive);
            const double err = std::max(apps::max_rel_err(naive, want), apps::max_rel_err(tiled, want));
            worst_cross = std::max(worst_cross, cross);
            worst_host = std::max(worst_host, err);
            if (cross > 1e-4 || err > 1e-3) {
                return fmt::format("({},{},{}): naive vs tiled {:.2e}, vs host {:.2e}", m, k, n, cross, err);
            }
        }
        if (non_multiple == 0) return "no shape was a non-multiple of the tile size";
        return fmt::format("ok: naive vs tiled {:.2e}, vs host {:.2e}, {} non-multiple shapes", worst_cross, worst_host, non_multiple);
    });
    r.device_check(c, "device A*I == A", [&]() -> std::string {
        for (std::int64_t n : {1, 16, 45}) {
            const auto a = apps::random_matrix(n, n, 9);
            std::vector<float> eye(static_cast<std::size_t>(n * n), 0.0f);
            for (std::int64_t i = 0; i < n; ++i) eye[static_cast<std::size_t>(i * n + i)] = 1.0f;
            for (auto v : {MatmulVariant::Naive, MatmulVariant::Tiled}) {
                const auto p = r.ctx()->readback_blocking(
                    ops::matmul(*r.ctx(), r.ctx()->upload(a), r.ctx()->upload(HostArray::from_f32(Shape{n, n}, eye)), v));
                if (p.shape() != a.shape() || p.words() != a.words()) return fmt::format("{} at n={}", op_name(v), n);
            }
        }
        return "";
    });
    if (r.ctx() && r.ctx()->adapter_info().is_fallback) {
        fmt::print(stderr, "  [note] tiled >= naive throughput at 1024 is a GPU-only soft check; software adapter in use\n");
    }
    return c;
}

// ---------------------------------------------------------------- 4

Criterion readback(Runner& r) {
    Criterion c{4, "readback bridge", {}};
    r.device_check(c, "100 enqueue/readback cycles", [&]() -> std::string {
        std::mt19937_64 rng(4);
        for (int cycle = 0; cycle < 100; ++cycle) {
            const auto a = ts::random_array(rng, DType::F32, Shape{64}, -10, 10);
            const auto b = ts::random_array(rng, DType::F32, Shape{64}, -10, 10);
            const auto got = r.ctx()->readback_blocking(
                ops::add(*r.ctx(), ops::mul(*r.ctx(), r.ctx()->upload(a), r.ctx()->upload(b)), r.ctx()->upload(a)));
            const auto want = host::binary(BinaryOpKind::Add, host::binary(BinaryOpKind::Mul, a, b), a);
            if (got.words() != want.words()) return fmt::format("cycle {} differs", cycle);
        }
        return "";
    });
    r.device_check(c, "readback without flush", [&]() -> std::string {
        auto x = r.ctx()->upload(HostArray::full(DType::I32, Shape{10}, 1));
        for (int i = 0; i < 5; ++i) x = ops::add(*r.ctx(), x, x);  // below the auto-submit batch
        if (r.ctx()->pending_dispatches() == 0) return "dispatches were flushed early";
        const auto got = r.ctx()->readback_blocking(x).to_i32();
        return fail_if(got != std::vector<std::int32_t>(10, 32), "result does not reflect the pending ops");
    });
    r.device_check(c, "round trip all dtypes", [&]() -> std::string {
        std::mt19937_64 rng(44);
        for (DType dt : {DType::F32, DType::I32, DType::U32, DType::Bool}) {
            for (int rep = 0; rep < 5; ++rep) {
                const Shape s = ts::random_shape(rng, 4, 9);
                std::vector<std::uint32_t> words(static_cast<std::size_t>(s.element_count()));
                for (auto& w : words) w = dt == DType::Bool ? static_cast<std::uint32_t>(rng() & 1) : static_cast<std::uint32_t>(rng());
                if (dt == DType::F32 && words.size() >= 4) {
                    words[0] = 0x7fc00001u;  // NaN payload
                    words[1] = 0x80000000u;  // -0
                    words[2] = 0x7f800000u;  // inf
                    words[3] = 0x00000001u;  // subnormal
                }
                const auto h = HostArray::from_words(dt, s, words);
                if (r.ctx()->readback_blocking(r.ctx()->upload(h)).words() != words) {
                    return fmt::format("{} {} not bit-exact", dtype_name(dt), s.str());
                }
            }
        }
        return "";
    });
    return c;
}

// ---------------------------------------------------------------- 5

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Criterion kernel_machinery(Runner& r) {
    Criterion c{5, "kernel machinery", {}};
    r.check(c, "parse_params", []() -> std::string {
        if (parse_params("float32 x, float32 y") != std::vector<ParamDecl>{{DType::F32, "x"}, {DType::F32, "y"}}) return "float32 form";
        if (parse_params("f32 y, f32 gy") != std::vector<ParamDecl>{{DType::F32, "y"}, {DType::F32, "gy"}}) return "f32 form";
        try {
            parse_params("f64 x");
            return "f64 accepted";
        } catch (const ParseError&) {
        }
        return "";
    });
    r.check(c, "golden sources", []() -> std::string {
        const std::filesystem::path dir = NDGPU_GOLDEN_DIR;
        const auto sq = KernelSpec::make("squared_diff", "float32 x, float32 y", "float32 z", "z = (x - y) * (x - y)");
        const std::vector<std::pair<std::string, std::string>> cases{
            {"squared_diff_r1.wgsl", generate_source(sq, 1)},
            {"squared_diff_r3_wg128.wgsl", generate_source(sq, 3, 128)},
            {"relu_bwd_r2.wgsl", generate_source(apps::relu_bwd_kernel().spec(), 2)},
            {"identity_r0.wgsl", generate_source(KernelSpec::make("identity", "f32 x", "f32 z", "z = x;"), 0)},
            {"mandelbrot_r2.wgsl", generate_source(apps::mandelbrot_kernel().spec(), 2, 64, {{"max_iter", 500}})},
            {"compare_bool_r4.wgsl", generate_source(KernelSpec::make("less_than", "i32 a, i32 b", "bool c", "c = a < b"), 4)},
        };
        for (const auto& [file, src] : cases) {
            if (read_file(dir / file) != src) return file + " differs";
            if (generate_source(sq, 1) != cases[0].second) return "generation is not deterministic";
        }
        return fmt::format("ok: {} files", cases.size());
    });
    r.device_check(c, "cache compiles once per key", [&]() -> std::string {
        const auto base = r.ctx()->counters().compilations;
        const std::vector<KernelSpec> specs{KernelSpec::make("acc_a", "f32 x", "f32 z", "z = x * 3.0;"),
                                            KernelSpec::make("acc_a", "f32 x", "f32 z", "z = x * 4.0;"),
                                            KernelSpec::make("acc_b", "i32 x", "i32 z", "z = x + k;", "i32 k")};
        std::set<std::string> keys;
        for (int round = 0; round < 3; ++round) {
            for (const auto& s : specs) {
                for (std::size_t rank : {1u, 2u}) {
                    ConstantValues cv;
                    if (!s.constants.empty()) cv["k"] = rank;
                    keys.insert(kernel_cache_key(s, rank, r.ctx()->config().workgroup_size, cv));
                    compile_or_get(*r.ctx(), s, rank, cv);
                }
            }
        }
        const auto compiled = r.ctx()->counters().compilations - base;
        return fail_if(compiled != keys.size(), fmt::format("{} compilations for {} keys", compiled, keys.size()));
    });
    r.device_check(c, "launch completeness", [&]() -> std::string {
        static const ElementwiseKernel mark("u32 base", "u32 y", "y = base + i;", "acc_mark");
        const std::int64_t ws = r.ctx()->config().workgroup_size;
        for (std::int64_t n : {std::int64_t{1}, ws - 1, ws, ws * 65535 + 1}) {
            const DeviceArray buf = r.ctx()->upload(HostArray::full(DType::U32, Shape{n + 1}, 4294967295.0));
            const DeviceArray in[] = {r.ctx()->upload(HostArray::full(DType::U32, Shape{}, 1))};
            const DeviceArray out[] = {buf.view(ArrayDescriptor::contiguous(DType::U32, Shape{n}))};
            mark.run(*r.ctx(), in, out);
            const auto got = r.ctx()->readback_blocking(buf).words();
            for (std::int64_t k = 0; k < n; ++k) {
                if (got[static_cast<std::size_t>(k)] != static_cast<std::uint32_t>(k + 1)) return fmt::format("n={} element {}", n, k);
            }
            if (got[static_cast<std::size_t>(n)] != 0xFFFFFFFFu) return fmt::format("n={} wrote past the end", n);
        }
        return "";
    });
    return c;
}

// ---------------------------------------------------------------- 6

Criterion mlp(Runner& r) {
    Criterion c{6, "mlp", {}};
    r.check(c, "grad check (host)", []() -> std::string {
        apps::MLPConfig cfg;
        const auto batch = apps::make_blobs(cfg.batch, cfg.input_dim, cfg.classes, 17);
        const auto g = apps::grad_check(cfg, batch, 1e-2);
        if (g.checked < g.kinked) return fmt::format("only {} of {} entries free of relu kinks", g.checked, g.checked + g.kinked);
        return g.max_rel_err < 1e-2 ? fmt::format("ok: max rel err {:.2e} over {} entries ({} skipped at kinks)",
                                                   g.max_rel_err, g.checked, g.kinked)
                                    : fmt::format("max rel err {:.2e}", g.max_rel_err);
    });
    auto zero_lr = [](DeviceContext* ctx) -> std::string {
        apps::MLPConfig cfg;
        cfg.lr = 0;
        cfg.steps = 20;
        cfg.dataset = cfg.batch;
        const auto data = apps::make_blobs(cfg.dataset, cfg.input_dim, cfg.classes, 3);
        const auto res = apps::train(ctx, cfg, data);
        for (double l : res.losses)
            if (l != res.losses.front()) return fmt::format("loss moved from {} to {}", res.losses.front(), l);
        return "";
    };
    r.check(c, "zero lr constant loss (host)", [&] { return zero_lr(nullptr); });
    r.device_check(c, "zero lr constant loss (device)", [&] { return zero_lr(r.ctx()); });
    r.device_check(c, "100-step device run", [&]() -> std::string {
        apps::MLPConfig cfg;
        const auto data = apps::make_blobs(cfg.dataset, cfg.input_dim, cfg.classes, cfg.seed);
        const auto res = apps::train(r.ctx(), cfg, data);
        if (res.losses.size() != 100) return "wrong step count";
        return res.losses.back() < res.losses.front()
                   ? fmt::format("ok: loss {:.4f} -> {:.4f}", res.losses.front(), res.losses.back())
                   : fmt::format("loss {:.4f} -> {:.4f}", res.losses.front(), res.losses.back());
    });
    return c;
}

// ---------------------------------------------------------------- 7

std::vector<grid::WorkerProcess> spawn_workers(int port, int n, const std::string& prefix, const std::vector<std::string>& extra = {}) {
    std::vector<grid::WorkerProcess> ps;
    for (int i = 0; i < n; ++i) {
        std::vector<std::string> args{"worker", "--connect", fmt::format("127.0.0.1:{}", port), "--worker-id", fmt::format("{}{}", prefix, i)};
        args.insert(args.end(), extra.begin(), extra.end());
        ps.push_back(grid::spawn_worker(NDGPU_GRIDSEARCH_EXE, args));
    }
    return ps;
}

Criterion grid_search(Runner& r) {
    Criterion c{7, "grid search", {}};
    double stub_seconds = 0;
    r.check(c, "27-job desk grid exactly once", []() -> std::string {
        grid::JobSpec base;
        base.train_size = 1000;
        base.eval_size = 200;
        auto jobs = grid::enumerate_grid({{4, 8, 16}, {4, 8, 16}, {4, 8, 16}}, base);
        if (jobs.size() != 27) return fmt::format("{} jobs", jobs.size());
        grid::Coordinator coord(jobs);
        coord.start();
        auto ps = spawn_workers(coord.port(), 3, "desk");
        const auto s = coord.wait();
        std::string bad;
        for (auto& p : ps)
            if (const int code = grid::wait_worker(p); code != 0) bad = fmt::format("worker exit {}", code);
        std::set<int> ids;
        for (const auto& res : s.results) ids.insert(res.id);
        if (s.results.size() != 27 || ids.size() != 27) return fmt::format("{} results, {} distinct", s.results.size(), ids.size());
        for (const auto& [id, n] : s.assignments)
            if (n != 1) return fmt::format("job {} assigned {} times", id, n);
        if (s.requeues || s.duplicate_results) return fmt::format("{} requeues, {} duplicates", s.requeues, s.duplicate_results);
        if (!bad.empty()) return bad;
        return fmt::format("ok: best {} acc {:.3f}, {:.1f} s", s.best->id, s.best->accuracy, s.total_seconds);
    });
    const auto t = Clock::now();
    r.check(c, "speedup(4) >= 3.0", []() -> std::string {
        grid::ScalingOptions o;
        o.worker_counts = {1, 2, 4};
        o.jobs = 8;
        o.stub_job_ms = 500;
        o.repeats = 3;
        o.worker_exe = NDGPU_GRIDSEARCH_EXE;
        const auto rep = grid::scaling_experiment(o);
        const double s2 = rep.extra["speedup"]["2"], s4 = rep.extra["speedup"]["4"];
        fmt::print(stderr, "    medians: {}\n", rep.extra.dump());
        return s4 >= 3.0 ? fmt::format("ok: speedup(2) {:.2f}, speedup(4) {:.2f}", s2, s4) : fmt::format("speedup(4) {:.2f}", s4);
    });
    r.check(c, "worker kill", []() -> std::string {
        grid::JobSpec base;
        base.stub_ms = 200;
        auto jobs = grid::enumerate_grid({{4, 8}, {4, 8, 16}}, base);
        grid::CoordinatorOptions o;
        o.deadline = std::chrono::milliseconds(1000);
        grid::Coordinator coord(jobs, o);
        coord.start();
        auto crashers = spawn_workers(coord.port(), 1, "crash", {"--crash-after-claims", "2"});
        if (const int code = grid::wait_worker(crashers[0]); code != 3) return fmt::format("crasher exit {}", code);
        auto ps = spawn_workers(coord.port(), 2, "survivor", {"--backend", "host"});
        const auto s = coord.wait();
        for (auto& p : ps) grid::wait_worker(p);
        if (s.results.size() != jobs.size()) return fmt::format("{} of {} jobs completed", s.results.size(), jobs.size());
        if (s.requeues < 1) return "no requeue recorded";
        return fmt::format("ok: {} requeues", s.requeues);
    });
    stub_seconds = seconds_since(t);
    r.check(c, "stub runtime < 180 s", [&] {
        return stub_seconds < 180 ? fmt::format("ok: {:.1f} s", stub_seconds) : fmt::format("{:.1f} s", stub_seconds);
    });
    return c;
}

// ---------------------------------------------------------------- 8

// Re-runs this binary with the fallback adapter hidden and inspects its lines.
Criterion no_adapter_mode(Runner& r, const std::set<int>& only) {
    Criterion c{8, "no-adapter mode", {}};
    if (!r.ctx()) {
        r.check(c, "context creation reports NoAdapter", [] {
            try {
                create_context();
                return std::string("a context was created");
            } catch (const Error& e) {
                return fail_if(e.code() != ErrorCode::NoAdapter, e.what());
            }
        });
        return c;
    }
    r.check(c, "host-only rerun", [&]() -> std::string {
        const auto self = std::filesystem::read_symlink("/proc/self/exe").string();
        std::string cmd = "NDGPU_DISABLE_FALLBACK_ADAPTER=1 '" + self + "' --expect-no-adapter";
        std::string list;
        for (int id : only)
            if (id != 8) list += (list.empty() ? "" : ",") + std::to_string(id);
        if (!list.empty()) cmd += " --only " + list;
        cmd += " 2>/dev/null";
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) return "popen failed";
        std::string out;
        char buf[512];
        while (std::fgets(buf, sizeof buf, pipe)) out += buf;
        const int status = ::pclose(pipe);
        fmt::print(stderr, "{}", out);
        int pass = 0, skip = 0, fail = 0;
        std::istringstream lines(out);
        for (std::string line; std::getline(lines, line);) {
            pass += line.rfind("PASS", 0) == 0;
            skip += line.rfind("SKIP", 0) == 0;
            fail += line.rfind("FAIL", 0) == 0;
        }
        if (fail || status != 0) return fmt::format("{} failing lines, exit status {}", fail, status);
        if (skip == 0) return "no explicit skip markers";
        return fmt::format("ok: {} pass, {} skip", pass, skip);
    });
    return c;
}

std::set<int> parse_only(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) out.insert(std::stoi(tok));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    std::set<int> known_failures;  // must fail; passing is reported as unexpected
    bool expect_no_adapter = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            only = parse_only(argv[++i]);
        } else if (a == "--known-failure" && i + 1 < argc) {
            known_failures.merge(parse_only(argv[++i]));
        } else if (a == "--expect-no-adapter") {
            expect_no_adapter = true;
        } else {
            fmt::print(stderr, "usage: {} [--only 1,2,...] [--known-failure 2,...] [--expect-no-adapter]\n", argv[0]);
            return 2;
        }
    }

    ContextPtr ctx;
    std::string reason;
    try {
        ctx = create_context();
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoAdapter) throw;
        reason = e.what();
    }
    if (expect_no_adapter && ctx) {
        fmt::print("FAIL [8] no-adapter mode: a device context was created although the adapter should be hidden\n");
        return 1;
    }
    fmt::print(stderr, "adapter: {}\n", ctx ? ctx->adapter_info().name : "none (" + reason + ")");

    Runner runner(ctx, reason);
    const std::vector<std::pair<int, std::function<Criterion()>>> all{
        {1, [&] { return oracle_suite(runner); }},   {2, [&] { return mandelbrot(runner); }},
        {3, [&] { return matmul(runner); }},         {4, [&] { return readback(runner); }},
        {5, [&] { return kernel_machinery(runner); }}, {6, [&] { return mlp(runner); }},
        {7, [&] { return grid_search(runner); }},    {8, [&] { return no_adapter_mode(runner, only); }},
    };
    bool failed = false;
    for (const auto& [id, fn] : all) {
        if (!only.empty() && !only.contains(id)) continue;
        fmt::print(stderr, "criterion {}\n", id);
        const auto t = Clock::now();
        Criterion c = fn();
        c.seconds = seconds_since(t);
        std::string summary;
        for (const auto& ch : c.checks) {
            if (!summary.empty()) summary += "; ";
            summary += ch.name;
            if (ch.status == Status::Fail) summary += " FAILED (" + ch.detail + ")";
            if (ch.status == Status::Skip) summary += " skipped (no device)";
        }
        fmt::print("{} [{}] {}: {} ({:.1f} s)\n", label(c.status()), c.id, c.title, summary, c.seconds);
        std::fflush(stdout);
        const bool known = known_failures.contains(id);
        if (known && c.status() != Status::Fail) {
            fmt::print(stderr, "criterion {} was expected to fail but reported {}\n", id, label(c.status()));
            failed = true;
        }
        if (c.status() == Status::Fail) {
            if (known) fmt::print(stderr, "criterion {} failed as expected\n", id);
            failed = failed || !known;
        }
    }
    return failed ? 1 : 0;
}
