#include "suites.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ndgpu/apps/mlp.hpp"
#include "ndgpu/ops.hpp"

namespace ndgpu::testing {

void SuiteStats::merge(const SuiteStats& o) {
    cases += o.cases;
    failures += o.failures;
    max_err = std::max(max_err, o.max_err);
    if (first_failure.empty()) first_failure = o.first_failure;
}

Shape random_shape(Rng& rng, std::size_t max_rank, std::int64_t max_dim) {
    std::uniform_int_distribution<std::size_t> rank(0, max_rank);
    std::uniform_int_distribution<std::int64_t> dim(1, max_dim);
    std::vector<std::int64_t> dims(rank(rng));
    for (auto& d : dims) d = dim(rng);
    return Shape(dims);
}

std::pair<Shape, Shape> broadcast_pair(Rng& rng) {
    const Shape full = random_shape(rng);
    auto derive = [&](const Shape& s) {
        std::vector<std::int64_t> dims = s.dims();
        std::uniform_int_distribution<std::size_t> drop(0, dims.size());
        const auto lead = std::bernoulli_distribution(0.3)(rng) ? drop(rng) : 0;
        dims.erase(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(lead));
        for (auto& d : dims)
            if (std::bernoulli_distribution(0.3)(rng)) d = 1;
        return Shape(dims);
    };
    return std::bernoulli_distribution(0.5)(rng) ? std::pair{derive(full), full} : std::pair{full, derive(full)};
}

HostArray random_array(Rng& rng, DType dtype, const Shape& shape, double lo, double hi) {
    const auto n = static_cast<std::size_t>(shape.element_count());
    std::vector<std::uint32_t> words(n);
    for (auto& w : words) {
        switch (dtype) {
            case DType::F32: w = encode_word(DType::F32, std::uniform_real_distribution<double>(lo, hi)(rng)); break;
            case DType::I32:
            case DType::U32:
                w = encode_word(dtype, static_cast<double>(std::uniform_int_distribution<std::int64_t>(
                                           static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi))(rng)));
                break;
            case DType::Bool: w = std::bernoulli_distribution(0.5)(rng) ? 1u : 0u; break;
        }
    }
    return HostArray::from_words(dtype, shape, std::move(words));
}

SuiteStats compare(const HostArray& got, const HostArray& want, double rel, double abs) {
    SuiteStats s;
    s.cases = 1;
    if (got.shape() != want.shape() || got.dtype() != want.dtype()) {
        s.failures = 1;
        s.first_failure = fmt::format("shape/dtype {} {} vs {} {}", got.shape().str(), dtype_name(got.dtype()),
                                      want.shape().str(), dtype_name(want.dtype()));
        return s;
    }
    const auto g = got.words();
    const auto w = want.words();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (got.dtype() == DType::F32) {
            const double gv = decode_word(DType::F32, g[i]), wv = decode_word(DType::F32, w[i]);
            const double diff = std::abs(gv - wv);
            const bool same = g[i] == w[i] || (std::isnan(gv) && std::isnan(wv)) || diff <= std::max(rel * std::abs(wv), abs);
            s.max_err = std::max(s.max_err, wv != 0.0 ? diff / std::abs(wv) : diff);
            if (!same && s.first_failure.empty()) s.first_failure = fmt::format("element {}: {} vs {}", i, gv, wv);
            s.failures = s.failures || !same;
        } else if (g[i] != w[i]) {
            s.max_err = std::max(s.max_err, std::abs(decode_word(got.dtype(), g[i]) - decode_word(got.dtype(), w[i])));
            if (s.first_failure.empty()) s.first_failure = fmt::format("element {}: word {} vs {}", i, g[i], w[i]);
            s.failures = 1;
        }
    }
    return s;
}

DeviceArray upload_varied(DeviceContext& ctx, Rng& rng, const HostArray& host) {
    const auto& shape = host.shape();
    const int how = std::uniform_int_distribution<int>(0, 2)(rng);
    if (how == 1 && shape.rank() >= 2) {
        // Store the transpose contiguously and view it back: same logical array, permuted strides.
        std::vector<std::size_t> axes(shape.rank());
        for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = axes.size() - 1 - i;
        const HostArray t = host.view(transpose(host.descriptor(), axes)).contiguous();
        return ctx.upload(t).transpose(inverse_permutation(axes));
    }
    if (how == 2) {
        // Place the data after a random prefix in one buffer.
        const auto prefix = std::uniform_int_distribution<std::int64_t>(1, 7)(rng);
        auto words = host.words();
        words.insert(words.begin(), static_cast<std::size_t>(prefix), 0xdeadbeefu);
        const auto total = static_cast<std::int64_t>(words.size());
        const DeviceArray flat = ctx.upload(HostArray::from_words(host.dtype(), Shape{total}, std::move(words)));
        return flat.view(ArrayDescriptor::contiguous(host.dtype(), shape, prefix));
    }
    return ctx.upload(host);
}

namespace {

SuiteStats tagged(SuiteStats s, const std::string& tag) {
    if (!s.first_failure.empty()) s.first_failure = tag + ": " + s.first_failure;
    return s;
}

}  // namespace

SuiteStats binary_suite(DeviceContext& ctx, BinaryOpKind kind, int cases, std::uint64_t seed) {
    Rng rng(seed);
    SuiteStats total;
    for (int c = 0; c < cases; ++c) {
        std::vector<DType> dtypes{DType::F32};
        if (kind != BinaryOpKind::Div) dtypes.insert(dtypes.end(), {DType::I32, DType::U32});
        if (is_comparison(kind)) dtypes.push_back(DType::Bool);
        const DType dt = dtypes[std::uniform_int_distribution<std::size_t>(0, dtypes.size() - 1)(rng)];
        auto [sa, sb] = broadcast_pair(rng);
        // Operand ranges keep integer results representable: b <= a for unsigned subtraction.
        double alo = -1000, ahi = 1000, blo = -1000, bhi = 1000;
        if (dt == DType::U32) {
            alo = 1000, ahi = 2000, blo = 0, bhi = 1000;
        }
        if (dt == DType::F32 && kind == BinaryOpKind::Div) blo = 0.5;
        HostArray a = random_array(rng, dt, sa, alo, ahi);
        HostArray b = random_array(rng, dt, sb, blo, bhi);
        if (is_comparison(kind) && std::bernoulli_distribution(0.3)(rng) && sa == sb) b = a;  // exercise equality
        const bool scalar_rhs = std::bernoulli_distribution(0.1)(rng) && dt != DType::Bool;
        HostArray want;
        DeviceArray got;
        if (scalar_rhs) {
            const double s = b.value_at(0);
            want = host::binary(kind, a, s);
            got = ops::binary(ctx, kind, upload_varied(ctx, rng, a), s);
        } else {
            want = host::binary(kind, a, b);
            got = ops::binary(ctx, kind, upload_varied(ctx, rng, a), upload_varied(ctx, rng, b));
        }
        total.merge(tagged(compare(ctx.readback_blocking(got), want),
                           fmt::format("{} {} {} {}", op_name(kind), dtype_name(dt), sa.str(), sb.str())));
    }
    return total;
}

SuiteStats where_suite(DeviceContext& ctx, int cases, std::uint64_t seed) {
    Rng rng(seed);
    SuiteStats total;
    for (int c = 0; c < cases; ++c) {
        const DType dt = std::array{DType::F32, DType::I32, DType::U32, DType::Bool}[std::uniform_int_distribution<int>(0, 3)(rng)];
        auto [sc, sa] = broadcast_pair(rng);
        const Shape sb = std::bernoulli_distribution(0.5)(rng) ? sa : Shape{};
        const HostArray cond = random_array(rng, DType::Bool, sc, 0, 1);
        const HostArray a = random_array(rng, dt, sa, -1e4, 1e4);
        const HostArray b = random_array(rng, dt, sb, -1e4, 1e4);
        const auto got = ops::where(ctx, upload_varied(ctx, rng, cond), upload_varied(ctx, rng, a), upload_varied(ctx, rng, b));
        // where is a selection, so even f32 must match bit for bit.
        total.merge(tagged(compare(ctx.readback_blocking(got), host::where(cond, a, b), 0.0, 0.0),
                           fmt::format("where {} {} {}", dtype_name(dt), sc.str(), sa.str())));
    }
    return total;
}

SuiteStats astype_suite(DeviceContext& ctx, int cases, std::uint64_t seed) {
    Rng rng(seed);
    SuiteStats total;
    const std::array all{DType::F32, DType::I32, DType::U32, DType::Bool};
    for (int c = 0; c < cases; ++c) {
        const DType from = all[std::uniform_int_distribution<int>(0, 3)(rng)];
        const DType to = all[std::uniform_int_distribution<int>(0, 3)(rng)];
        double lo = -3e9, hi = 3e9;
        if (from == DType::I32) lo = -2147483648.0, hi = 2147483647.0;
        if (from == DType::U32) lo = 0, hi = 4294967295.0;
        if (from == DType::F32 && std::bernoulli_distribution(0.5)(rng)) lo = -100, hi = 100;
        const Shape s = random_shape(rng);
        const HostArray a = random_array(rng, from, s, lo, hi);
        const auto got = ops::astype(ctx, upload_varied(ctx, rng, a), to);
        total.merge(tagged(compare(ctx.readback_blocking(got), host::astype(a, to), 0.0, 0.0),
                           fmt::format("astype {} -> {} {}", dtype_name(from), dtype_name(to), s.str())));
    }
    return total;
}

SuiteStats reduce_suite(DeviceContext& ctx, int cases, std::uint64_t seed) {
    Rng rng(seed);
    SuiteStats total;
    for (int c = 0; c < cases; ++c) {
        const DType dt = std::bernoulli_distribution(0.6)(rng) ? DType::F32 : DType::I32;
        const ReduceOp op = std::bernoulli_distribution(0.5)(rng) ? ReduceOp::Sum : ReduceOp::Max;
        Shape s = random_shape(rng, 4, 9);
        if (c % 10 == 0) s = Shape{std::uniform_int_distribution<std::int64_t>(1, 70000)(rng)};
        std::optional<std::size_t> axis;
        if (s.rank() > 0 && std::bernoulli_distribution(0.5)(rng)) {
            axis = std::uniform_int_distribution<std::size_t>(0, s.rank() - 1)(rng);
        }
        const HostArray a = random_array(rng, dt, s, -1000, 1000);
        const HostArray want = host::reduce(a, op, axis);
        const HostArray got = ctx.readback_blocking(ops::reduce(ctx, upload_varied(ctx, rng, a), op, axis));
        const auto tag = fmt::format("{} {} {} axis {}", op_name(op), dtype_name(dt), s.str(), axis ? int(*axis) : -1);
        if (dt == DType::F32 && op == ReduceOp::Sum) {
            // Tolerance 1e-5 * n * max|a| where n is the number of summed elements.
            const double n = axis ? static_cast<double>(s[*axis]) : static_cast<double>(s.element_count());
            double max_abs = 0;
            for (double v : a.to_f64()) max_abs = std::max(max_abs, std::abs(v));
            SuiteStats st;
            st.cases = 1;
            const auto g = got.to_f64(), w = want.to_f64();
            const double tol = 1e-5 * n * max_abs;
            for (std::size_t i = 0; i < g.size() && got.shape() == want.shape(); ++i) {
                const double d = std::abs(g[i] - w[i]);
                st.max_err = std::max(st.max_err, max_abs > 0 ? d / (n * max_abs) : d);
                if (d > tol) {
                    st.failures = 1;
                    if (st.first_failure.empty()) st.first_failure = fmt::format("element {}: {} vs {}", i, g[i], w[i]);
                }
            }
            if (got.shape() != want.shape()) st.failures = 1, st.first_failure = "shape mismatch";
            total.merge(tagged(st, tag));
        } else {
            total.merge(tagged(compare(got, want, 0.0, 0.0), tag));
        }
    }
    return total;
}

const ElementwiseKernel& test_kernel(TestKernel k) {
    static const ElementwiseKernel squared_diff("float32 x, float32 y", "float32 z", "z = (x - y) * (x - y)",
                                                "squared_diff");
    static const ElementwiseKernel identity("f32 x", "f32 z", "z = x;", "identity");
    switch (k) {
        case TestKernel::SquaredDiff: return squared_diff;
        case TestKernel::ReluBwd: return apps::relu_bwd_kernel();
        case TestKernel::Identity: return identity;
    }
    return identity;
}

SuiteStats kernel_suite(DeviceContext& ctx, TestKernel k, int cases, std::uint64_t seed) {
    Rng rng(seed);
    SuiteStats total;
    const auto& kernel = test_kernel(k);
    for (int c = 0; c < cases; ++c) {
        auto [sa, sb] = broadcast_pair(rng);
        HostArray want;
        DeviceArray got;
        if (k == TestKernel::Identity) {
            const HostArray x = random_array(rng, DType::F32, sa, -1e3, 1e3);
            want = x.contiguous();
            got = kernel(ctx, {upload_varied(ctx, rng, x)});
        } else {
            const HostArray x = random_array(rng, DType::F32, sa, -10, 10);
            const HostArray y = random_array(rng, DType::F32, sb, -10, 10);
            if (k == TestKernel::SquaredDiff) {
                want = host::eval_elementwise([](std::span<const double> v) { return (v[0] - v[1]) * (v[0] - v[1]); },
                                              {x, y}, DType::F32);
            } else {
                want = host::eval_elementwise([](std::span<const double> v) { return v[0] > 0.0 ? v[1] : 0.0; }, {x, y},
                                              DType::F32);
            }
            got = kernel(ctx, {upload_varied(ctx, rng, x), upload_varied(ctx, rng, y)});
        }
        total.merge(tagged(compare(ctx.readback_blocking(got), want), fmt::format("{} {} {}", kernel.spec().name, sa.str(), sb.str())));
    }
    return total;
}

}  // namespace ndgpu::testing
