#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "ndgpu/apps/mlp.hpp"
#include "ndgpu/host_ops.hpp"
#include "ndgpu/ops.hpp"

namespace ndgpu::apps {

void validate(const MLPConfig& cfg) {
    if (cfg.input_dim <= 0 || cfg.classes <= 0 || cfg.batch <= 0 || cfg.steps < 0 || cfg.dataset <= 0) {
        throw Error(ErrorCode::InvalidArgument, "MLP dimensions, batch, steps and dataset size must be positive");
    }
    for (int h : cfg.hidden)
        if (h <= 0) throw Error(ErrorCode::InvalidArgument, "hidden widths must be positive");
    if (cfg.batch > cfg.dataset) throw Error(ErrorCode::InvalidArgument, "batch is larger than the dataset");
    if (!std::isfinite(cfg.lr) || cfg.lr < 0) throw Error(ErrorCode::InvalidArgument, "learning rate must be finite and >= 0");
}

Dataset make_blobs(int rows, int dim, int classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> centers(static_cast<std::size_t>(classes * dim));
    for (auto& c : centers) c = 2.5 * normal(rng);
    std::vector<int> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    Dataset d;
    std::vector<float> x(static_cast<std::size_t>(rows * dim));
    std::vector<float> onehot(static_cast<std::size_t>(rows * classes), 0.0f);
    d.labels.resize(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const int label = order[static_cast<std::size_t>(r)] % classes;
        d.labels[static_cast<std::size_t>(r)] = label;
        onehot[static_cast<std::size_t>(r * classes + label)] = 1.0f;
        for (int j = 0; j < dim; ++j) {
            x[static_cast<std::size_t>(r * dim + j)] =
                static_cast<float>(centers[static_cast<std::size_t>(label * dim + j)] + normal(rng));
        }
    }
    d.x = HostArray::from_f32(Shape{rows, dim}, x);
    d.onehot = HostArray::from_f32(Shape{rows, classes}, onehot);
    return d;
}

Dataset slice_rows(const Dataset& d, int begin, int end) {
    auto rows = [&](const HostArray& a) {
        const auto cols = a.shape()[1];
        return a.view(ArrayDescriptor::contiguous(a.dtype(), Shape{end - begin, cols}, begin * cols)).contiguous();
    };
    Dataset out;
    out.x = rows(d.x);
    out.onehot = rows(d.onehot);
    out.labels.assign(d.labels.begin() + begin, d.labels.begin() + end);
    return out;
}

MLPParams init_params(const MLPConfig& cfg) {
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> normal(0.0, 1.0);
    MLPParams p;
    std::vector<int> widths{cfg.input_dim};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(cfg.classes);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l], out = widths[l + 1];
        const double scale = std::sqrt(2.0 / in);
        std::vector<float> w(static_cast<std::size_t>(in * out));
        for (auto& v : w) v = static_cast<float>(scale * normal(rng));
        p.weights.push_back(HostArray::from_f32(Shape{in, out}, w));
        p.biases.push_back(HostArray::zeros(DType::F32, Shape{out}));
    }
    return p;
}

const ElementwiseKernel& relu_bwd_kernel() {
    static const ElementwiseKernel k("f32 y, f32 gy", "f32 gx", "if (y > 0.0) { gx = gy; } else { gx = 0.0; }",
                                     "relu_bwd");
    return k;
}

namespace {

const Shape& dims_of(const HostArray& a) { return a.shape(); }
const Shape& dims_of(const DeviceArray& a) { return a.shape(); }

ArrayDescriptor transposed(const ArrayDescriptor& d) {
    const std::size_t axes[] = {1, 0};
    return transpose(d, axes);
}

struct HostBackend {
    using A = HostArray;

    A upload(const HostArray& h) const { return h; }
    HostArray download(const A& a) const { return a; }
    A rows(const A& a, std::int64_t begin, std::int64_t count) const {
        const auto cols = a.shape()[1];
        return a.view(ArrayDescriptor::contiguous(a.dtype(), Shape{count, cols}, a.descriptor().offset + begin * cols));
    }
    A t(const A& a) const { return a.view(transposed(a.descriptor())); }
    A reshape(const A& a, const Shape& s) const {
        const HostArray c = a.contiguous();
        return c.view(ndgpu::reshape(c.descriptor(), s));
    }
    A matmul(const A& a, const A& b) const { return host::matmul(a, b); }
    A add(const A& a, const A& b) const { return host::binary(BinaryOpKind::Add, a, b); }
    A reduce(const A& a, ReduceOp op, std::optional<std::size_t> axis) const { return host::reduce(a, op, axis); }
    A relu(const A& x) const {
        return host::eval_elementwise([](std::span<const double> v) { return v[0] > 0.0 ? v[0] : 0.0; }, {x}, DType::F32);
    }
    A relu_bwd(const A& y, const A& gy) const {
        return host::eval_elementwise([](std::span<const double> v) { return v[0] > 0.0 ? v[1] : 0.0; }, {y, gy},
                                      DType::F32);
    }
    A shift_exp(const A& l, const A& m) const {
        return host::eval_elementwise([](std::span<const double> v) { return std::exp(v[0] - v[1]); }, {l, m}, DType::F32);
    }
    A xent(const A& y, const A& l, const A& m, const A& s) const {
        return host::eval_elementwise([](std::span<const double> v) { return v[0] * (std::log(v[3]) + v[2] - v[1]); },
                                      {y, l, m, s}, DType::F32);
    }
    A softmax_grad(const A& e, const A& s, const A& y, double inv_b) const {
        return host::eval_elementwise(
            [inv_b](std::span<const double> v) { return (v[0] / v[1] - v[2]) * static_cast<float>(inv_b); }, {e, s, y},
            DType::F32);
    }
    A sgd(const A& w, const A& g, double lr) const {
        const float lr32 = static_cast<float>(lr);
        return host::eval_elementwise([lr32](std::span<const double> v) { return v[0] - lr32 * v[1]; }, {w, g},
                                      DType::F32);
    }
    double scalar(const A& a) const { return a.value_at(0); }
};

struct DeviceBackend {
    using A = DeviceArray;
    DeviceContext& ctx;

    A upload(const HostArray& h) const { return ctx.upload(h); }
    HostArray download(const A& a) const { return ctx.readback_blocking(a); }
    A rows(const A& a, std::int64_t begin, std::int64_t count) const {
        const auto cols = a.shape()[1];
        return a.view(ArrayDescriptor::contiguous(a.dtype(), Shape{count, cols}, a.descriptor().offset + begin * cols));
    }
    A t(const A& a) const { return a.view(transposed(a.descriptor())); }
    A reshape(const A& a, const Shape& s) const {
        return a.descriptor().is_contiguous() ? a.reshape(s) : materialize(ctx, a).reshape(s);
    }
    A matmul(const A& a, const A& b) const { return ops::matmul(ctx, a, b, MatmulVariant::Tiled); }
    A add(const A& a, const A& b) const { return ops::add(ctx, a, b); }
    A reduce(const A& a, ReduceOp op, std::optional<std::size_t> axis) const { return ops::reduce(ctx, a, op, axis); }
    A relu(const A& x) const {
        static const ElementwiseKernel k("f32 x", "f32 y", "if (x > 0.0) { y = x; } else { y = 0.0; }", "relu");
        return k(ctx, {x});
    }
    A relu_bwd(const A& y, const A& gy) const { return relu_bwd_kernel()(ctx, {y, gy}); }
    A shift_exp(const A& l, const A& m) const {
        static const ElementwiseKernel k("f32 l, f32 m", "f32 e", "e = exp(l - m);", "shift_exp");
        return k(ctx, {l, m});
    }
    A xent(const A& y, const A& l, const A& m, const A& s) const {
        static const ElementwiseKernel k("f32 y, f32 l, f32 m, f32 s", "f32 t", "t = y * (log(s) + m - l);", "xent");
        return k(ctx, {y, l, m, s});
    }
    A softmax_grad(const A& e, const A& s, const A& y, double inv_b) const {
        static const ElementwiseKernel k("f32 e, f32 s, f32 y", "f32 g", "g = (e / s - y) * inv_b;", "softmax_grad",
                                         "f32 inv_b");
        return k(ctx, {e, s, y}, {{"inv_b", inv_b}});
    }
    A sgd(const A& w, const A& g, double lr) const {
        static const ElementwiseKernel k("f32 w, f32 g", "f32 z", "z = w - lr * g;", "sgd", "f32 lr");
        return k(ctx, {w, g}, {{"lr", lr}});
    }
    double scalar(const A& a) const { return ctx.readback_blocking(a).value_at(0); }
};

template <class Bk>
struct Net {
    std::vector<typename Bk::A> w, b;
};

template <class Bk>
Net<Bk> to_backend(const Bk& bk, const MLPParams& p) {
    Net<Bk> n;
    for (const auto& w : p.weights) n.w.push_back(bk.upload(w));
    for (const auto& b : p.biases) n.b.push_back(bk.upload(b));
    return n;
}

template <class Bk>
MLPParams to_host(const Bk& bk, const Net<Bk>& n) {
    MLPParams p;
    for (const auto& w : n.w) p.weights.push_back(bk.download(w).contiguous());
    for (const auto& b : n.b) p.biases.push_back(bk.download(b).contiguous());
    return p;
}

// acts[l] is the input of layer l; the last entry is the logits.
template <class Bk>
std::vector<typename Bk::A> forward(const Bk& bk, const Net<Bk>& net, const typename Bk::A& x) {
    std::vector<typename Bk::A> acts{x};
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        auto z = bk.add(bk.matmul(acts.back(), net.w[l]), net.b[l]);
        acts.push_back(l + 1 < net.w.size() ? bk.relu(z) : z);
    }
    return acts;
}

template <class Bk>
struct LossGrad {
    typename Bk::A loss_sum;  // scalar: sum of per-row losses
    typename Bk::A grad;      // d(mean loss) / d(logits)
};

template <class Bk>
LossGrad<Bk> softmax_xent(const Bk& bk, const typename Bk::A& logits, const typename Bk::A& onehot) {
    const auto b = dims_of(logits)[0];
    const Shape col{b, 1};
    const auto m = bk.reshape(bk.reduce(logits, ReduceOp::Max, 1), col);
    const auto e = bk.shift_exp(logits, m);
    const auto s = bk.reshape(bk.reduce(e, ReduceOp::Sum, 1), col);
    const auto t = bk.xent(onehot, logits, m, s);
    return {bk.reduce(t, ReduceOp::Sum, std::nullopt), bk.softmax_grad(e, s, onehot, 1.0 / static_cast<double>(b))};
}

template <class Bk>
Net<Bk> backward(const Bk& bk, const Net<Bk>& net, const std::vector<typename Bk::A>& acts, typename Bk::A g) {
    Net<Bk> grads;
    grads.w.resize(net.w.size());
    grads.b.resize(net.b.size());
    for (std::size_t l = net.w.size(); l-- > 0;) {
        grads.w[l] = bk.matmul(bk.t(acts[l]), g);
        grads.b[l] = bk.reduce(g, ReduceOp::Sum, 0);
        if (l > 0) g = bk.relu_bwd(acts[l], bk.matmul(g, bk.t(net.w[l])));
    }
    return grads;
}

template <class Bk>
TrainResult train_with(const Bk& bk, const MLPConfig& cfg, const Dataset& data) {
    validate(cfg);
    const int n = static_cast<int>(data.x.shape()[0]);
    if (n < cfg.batch) throw Error(ErrorCode::InvalidArgument, "dataset has fewer rows than one batch");
    Net<Bk> net = to_backend(bk, init_params(cfg));
    const auto x = bk.upload(data.x);
    const auto y = bk.upload(data.onehot);
    const int batches = n / cfg.batch;

    TrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::int64_t begin = static_cast<std::int64_t>(step % batches) * cfg.batch;
        const auto xb = bk.rows(x, begin, cfg.batch);
        const auto yb = bk.rows(y, begin, cfg.batch);
        const auto acts = forward(bk, net, xb);
        const auto lg = softmax_xent(bk, acts.back(), yb);
        const auto grads = backward(bk, net, acts, lg.grad);
        for (std::size_t l = 0; l < net.w.size(); ++l) {
            net.w[l] = bk.sgd(net.w[l], grads.w[l], cfg.lr);
            net.b[l] = bk.sgd(net.b[l], grads.b[l], cfg.lr);
        }
        const double loss = bk.scalar(lg.loss_sum) / cfg.batch;
        result.step_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        if (!std::isfinite(loss)) {
            throw Error(ErrorCode::NonFiniteLoss, fmt::format("loss is {} at step {} (lr {})", loss, step, cfg.lr));
        }
        result.losses.push_back(loss);
    }
    result.params = to_host(bk, net);
    return result;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / scale;
}

}  // namespace

TrainResult train(DeviceContext* ctx, const MLPConfig& cfg, const Dataset& data) {
    if (ctx) return train_with(DeviceBackend{*ctx}, cfg, data);
    return train_with(HostBackend{}, cfg, data);
}

namespace {

// Loss plus the sign pattern of every hidden activation.
double loss_and_pattern(const MLPParams& params, const Dataset& batch, std::vector<bool>* pattern) {
    const HostBackend bk;
    const auto net = to_backend(bk, params);
    const auto acts = forward(bk, net, batch.x);
    if (pattern) {
        pattern->clear();
        for (std::size_t l = 1; l + 1 < acts.size(); ++l)
            for (double v : acts[l].to_f64()) pattern->push_back(v > 0.0);
    }
    return bk.scalar(softmax_xent(bk, acts.back(), batch.onehot).loss_sum) / static_cast<double>(batch.x.shape()[0]);
}

}  // namespace

double loss_host(const MLPParams& params, const Dataset& batch) { return loss_and_pattern(params, batch, nullptr); }

double accuracy_host(const MLPParams& params, const Dataset& data) {
    const HostBackend bk;
    const auto logits = forward(bk, to_backend(bk, params), data.x).back();
    const auto v = logits.to_f64();
    const auto classes = static_cast<std::size_t>(logits.shape()[1]);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.labels.size(); ++r) {
        const auto row = v.begin() + static_cast<std::ptrdiff_t>(r * classes);
        const auto best = std::max_element(row, row + static_cast<std::ptrdiff_t>(classes)) - row;
        correct += best == data.labels[r];
    }
    return data.labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.labels.size());
}

GradCheck grad_check(const MLPConfig& cfg, const Dataset& batch, double eps) {
    validate(cfg);
    const HostBackend bk;
    MLPParams params = init_params(cfg);
    const auto net = to_backend(bk, params);
    const auto acts = forward(bk, net, batch.x);
    const auto grads = backward(bk, net, acts, softmax_xent(bk, acts.back(), batch.onehot).grad);

    GradCheck out;
    std::vector<bool> base, plus_pattern, minus_pattern;
    loss_and_pattern(params, batch, &base);
    auto check = [&](HostArray& tensor, const HostArray& analytic) {
        const auto n = static_cast<std::size_t>(tensor.size());
        const auto g = analytic.contiguous().to_f64();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (n > 256) {
            // Deterministic spread of 256 entries.
            for (std::size_t k = 0; k < 256; ++k) idx[k] = k * n / 256;
            idx.resize(256);
        }
        std::vector<double> fd, an;
        auto words = tensor.mutable_storage();
        for (auto i : idx) {
            const float orig = std::bit_cast<float>(words[i]);
            words[i] = std::bit_cast<std::uint32_t>(static_cast<float>(orig + eps));
            const double plus = loss_and_pattern(params, batch, &plus_pattern);
            words[i] = std::bit_cast<std::uint32_t>(static_cast<float>(orig - eps));
            const double minus = loss_and_pattern(params, batch, &minus_pattern);
            words[i] = std::bit_cast<std::uint32_t>(orig);
            if (plus_pattern != base || minus_pattern != base) {
                ++out.kinked;
                continue;
            }
            fd.push_back((plus - minus) / (2.0 * eps));
            an.push_back(g[i]);
        }
        out.checked += fd.size();
        const double e = rel_err(fd, an);
        out.per_tensor.push_back(e);
        out.max_rel_err = std::max(out.max_rel_err, e);
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) check(params.weights[l], grads.w[l]);
    for (std::size_t l = 0; l < params.biases.size(); ++l) check(params.biases[l], grads.b[l]);
    return out;
}

double train_and_evaluate(DeviceContext* ctx, const MLPConfig& cfg, int eval_rows) {
    const Dataset all = make_blobs(cfg.dataset + eval_rows, cfg.input_dim, cfg.classes, cfg.seed);
    const Dataset train_set = slice_rows(all, 0, cfg.dataset);
    const Dataset eval_set = slice_rows(all, cfg.dataset, cfg.dataset + eval_rows);
    const TrainResult r = train(ctx, cfg, train_set);
    return accuracy_host(r.params, eval_set);
}

BenchReport run_mlp_train(DeviceContext* ctx, const MLPConfig& cfg) {
    validate(cfg);
    const Dataset data = make_blobs(cfg.dataset, cfg.input_dim, cfg.classes, cfg.seed);
    const TrainResult r = train(ctx, cfg, data);
    const Dataset gc_batch = slice_rows(data, 0, std::min(cfg.batch, 32));
    const GradCheck gc = grad_check(cfg, gc_batch);

    BenchCell cell;
    cell.workload = "mlp_train";
    cell.backend = ctx ? ctx->adapter_info().name : "host";
    cell.params = {{"input_dim", cfg.input_dim}, {"hidden", cfg.hidden}, {"classes", cfg.classes},
                   {"batch", cfg.batch},         {"steps", cfg.steps},   {"lr", cfg.lr},
                   {"seed", cfg.seed},           {"dataset", cfg.dataset}};
    if (r.step_ms.size() > 1) cell.samples_ms.assign(r.step_ms.begin() + 1, r.step_ms.end());
    cell.median_ms = median(cell.samples_ms);
    cell.throughput = cell.median_ms > 0 ? cfg.batch / (cell.median_ms * 1e-3) : 0.0;
    cell.throughput_unit = "samples/s";
    const bool decreased = r.losses.size() >= 2 && r.losses.back() < r.losses.front();
    const bool lr_zero_ok = cfg.lr != 0.0 || std::all_of(r.losses.begin(), r.losses.end(),
                                                         [&](double l) { return l == r.losses.front(); });
    cell.correctness.max_rel_err = gc.max_rel_err;
    cell.correctness.passed = gc.max_rel_err <= 1e-2 && (cfg.lr == 0.0 ? lr_zero_ok : decreased);

    BenchReport report;
    report.workload = "mlp_train";
    report.backend = cell.backend;
    report.params = cell.params;
    report.cells.push_back(std::move(cell));
    report.extra["losses"] = r.losses;
    report.extra["initial_loss"] = r.losses.empty() ? 0.0 : r.losses.front();
    report.extra["final_loss"] = r.losses.empty() ? 0.0 : r.losses.back();
    report.extra["grad_check"] = {{"eps", 1e-2}, {"max_rel_err", gc.max_rel_err}, {"per_tensor", gc.per_tensor},
                                  {"checked", gc.checked}, {"kinked", gc.kinked}, {"passed", gc.max_rel_err <= 1e-2}};
    report.extra["accuracy"] = accuracy_host(r.params, data);
    return report;
}

}  // namespace ndgpu::apps
