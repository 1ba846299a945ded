#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ndgpu/apps/mandelbrot.hpp"
#include "ndgpu/apps/mlp.hpp"
#include "ndgpu/host_ops.hpp"
#include "ndgpu/kernel.hpp"
#include "support/suites.hpp"
#include "support/test_util.hpp"

using namespace ndgpu;
namespace nt = ndgpu::testing;
using nt::DeviceTest;

namespace {

const KernelSpec& squared_diff_spec() {
    static const KernelSpec s = KernelSpec::make("squared_diff", "float32 x, float32 y", "float32 z", "z = (x - y) * (x - y)");
    return s;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

// Compares against tests/golden/<name>; NDGPU_UPDATE_GOLDEN=1 rewrites the file instead.
void expect_golden(const std::string& name, const std::string& text) {
    const std::filesystem::path path = std::filesystem::path(NDGPU_GOLDEN_DIR) / name;
    if (const char* u = std::getenv("NDGPU_UPDATE_GOLDEN"); u && std::string(u) == "1") {
        std::ofstream(path, std::ios::binary) << text;
        return;
    }
    std::ifstream in(path, std::ios::binary);
    ASSERT_TRUE(in) << "missing golden file " << path;
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), text) << "generated source for " << name << " changed";
}

}  // namespace

TEST(ParseParams, AcceptsDocumentedSpellings) {
    EXPECT_EQ(parse_params("float32 x, float32 y"), (std::vector<ParamDecl>{{DType::F32, "x"}, {DType::F32, "y"}}));
    EXPECT_EQ(parse_params("f32 y, f32 gy"), (std::vector<ParamDecl>{{DType::F32, "y"}, {DType::F32, "gy"}}));
    EXPECT_EQ(parse_params("  int32 a,uint32 b ,\tbool c  "),
              (std::vector<ParamDecl>{{DType::I32, "a"}, {DType::U32, "b"}, {DType::Bool, "c"}}));
    EXPECT_EQ(parse_params("i32 a, u32 b"), (std::vector<ParamDecl>{{DType::I32, "a"}, {DType::U32, "b"}}));
    EXPECT_TRUE(parse_params("").empty());
}

TEST(ParseParams, Rejections) {
    try {
        parse_params("f64 x");
        FAIL() << "f64 accepted";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_EQ(e.position(), 0u);
        EXPECT_NE(e.detail().find("f64"), std::string::npos);
    }
    for (const char* bad : {"float64 x", "f32", "f32 x y", "f32 x,", "f32 x, f32 x", "f32 1x", "f32 fn", "f32 ek_in_x",
                            "f32 launch_meta", "f32 __x", "f32 select", "f32 x;"}) {
        EXPECT_THROW(parse_params(bad), ParseError) << bad;
    }
    try {
        parse_params("f32 a, f16 b");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position(), 7u);
    }
}

TEST(KernelSpec, Validation) {
    EXPECT_ERROR_CODE(KernelSpec::make("k", "f32 x", "", "x;"), ErrorCode::InvalidArgument);
    EXPECT_ERROR_CODE(KernelSpec::make("k", "f32 x", "f32 z", "  "), ErrorCode::InvalidArgument);
    EXPECT_ERROR_CODE(KernelSpec::make("bad name", "f32 x", "f32 z", "z = x;"), ErrorCode::InvalidArgument);
    EXPECT_THROW(KernelSpec::make("k", "f32 x", "f32 x", "x = x;"), ParseError);
    EXPECT_THROW(KernelSpec::make("k", "f32 x", "f32 z", "z = x;", "u32 x"), ParseError);
}

TEST(GenerateSource, SquaredDiffContainsOperationOnce) {
    const auto src = generate_source(squared_diff_spec(), 1);
    EXPECT_EQ(count_occurrences(src, "z = (x - y) * (x - y)"), 1u);
    EXPECT_NE(src.find("@workgroup_size(64)"), std::string::npos);
    EXPECT_EQ(generate_source(squared_diff_spec(), 1), src);
}

TEST(GenerateSource, Golden) {
    expect_golden("squared_diff_r1.wgsl", generate_source(squared_diff_spec(), 1));
    expect_golden("squared_diff_r3_wg128.wgsl", generate_source(squared_diff_spec(), 3, 128));
    expect_golden("relu_bwd_r2.wgsl", generate_source(apps::relu_bwd_kernel().spec(), 2));
    expect_golden("identity_r0.wgsl", generate_source(KernelSpec::make("identity", "f32 x", "f32 z", "z = x;"), 0));
    expect_golden("mandelbrot_r2.wgsl", generate_source(apps::mandelbrot_kernel().spec(), 2, 64, {{"max_iter", 500}}));
    expect_golden("compare_bool_r4.wgsl",
                  generate_source(KernelSpec::make("less_than", "i32 a, i32 b", "bool c", "c = a < b"), 4));
}

TEST(GenerateSource, ConstantsAreSubstituted) {
    const auto src = generate_source(apps::mandelbrot_kernel().spec(), 2, 64, {{"max_iter", 500}});
    EXPECT_NE(src.find("k < 500u"), std::string::npos);
    EXPECT_EQ(src.find("max_iter"), std::string::npos);
    const auto spec = KernelSpec::make("scale", "f32 x", "f32 z", "z = x * lr + 1e5 + bias", "f32 lr, i32 bias");
    const auto s2 = generate_source(spec, 1, 64, {{"lr", -0.5}, {"bias", 3}});
    EXPECT_NE(s2.find("z = x * (-0.5f) + 1e5 + 3i"), std::string::npos) << s2;
    EXPECT_ERROR_CODE(generate_source(spec, 1, 64, {{"lr", 1}}), ErrorCode::InvalidArgument);
    EXPECT_ERROR_CODE(generate_source(spec, 1, 64, {{"lr", 1}, {"bias", 1}, {"extra", 2}}), ErrorCode::InvalidArgument);
}

TEST(GenerateSource, RankLimit) {
    EXPECT_ERROR_CODE(generate_source(squared_diff_spec(), 5), ErrorCode::UnsupportedRank);
}

TEST(CacheKey, IncludesBodyAndRank) {
    const auto a = KernelSpec::make("k", "f32 x", "f32 z", "z = x;");
    const auto b = KernelSpec::make("k", "f32 x", "f32 z", "z = -x;");
    EXPECT_NE(kernel_cache_key(a, 1, 64, {}), kernel_cache_key(b, 1, 64, {}));
    EXPECT_NE(kernel_cache_key(a, 1, 64, {}), kernel_cache_key(a, 2, 64, {}));
    EXPECT_NE(kernel_cache_key(a, 1, 64, {}), kernel_cache_key(a, 1, 128, {}));
    EXPECT_EQ(kernel_cache_key(a, 1, 64, {}), kernel_cache_key(a, 1, 64, {}));
}

TEST(LaunchMeta, MergesContiguousDims) {
    const auto c = ArrayDescriptor::contiguous(DType::F32, Shape{2, 3, 4});
    const ArrayDescriptor ins[] = {c};
    const ArrayDescriptor outs[] = {c};
    const auto m = make_launch_meta(ins, outs);
    EXPECT_EQ(m.rank, 1u);
    EXPECT_EQ(m.total, 24);

    const auto row = ArrayDescriptor::contiguous(DType::F32, Shape{1, 4});
    const ArrayDescriptor ins2[] = {row};
    const ArrayDescriptor outs2[] = {ArrayDescriptor::contiguous(DType::F32, Shape{3, 4})};
    const auto m2 = make_launch_meta(ins2, outs2);
    EXPECT_EQ(m2.rank, 2u);
    EXPECT_EQ(m2.strides[0][0], 0);
    EXPECT_EQ(m2.strides[0][1], 1);

    const ArrayDescriptor bad_in[] = {ArrayDescriptor::contiguous(DType::F32, Shape{5})};
    EXPECT_ERROR_CODE(make_launch_meta(bad_in, outs2), ErrorCode::ShapeMismatch);
    const ArrayDescriptor two_outs[] = {outs2[0], c};
    EXPECT_ERROR_CODE(make_launch_meta(ins2, two_outs), ErrorCode::ShapeMismatch);
}

TEST(LaunchMeta, DispatchGroupsClamp) {
    EXPECT_EQ(dispatch_groups(1, 64, 1), 1u);
    EXPECT_EQ(dispatch_groups(64, 64, 1), 1u);
    EXPECT_EQ(dispatch_groups(65, 64, 1), 2u);
    EXPECT_EQ(dispatch_groups(64ll * 65535 + 1, 64, 1), 65535u);
    EXPECT_EQ(dispatch_groups(1000, 64, 4), 4u);
    EXPECT_EQ(dispatch_groups(0, 64, 1), 0u);
}

TEST_F(DeviceTest, CompileOnceThenCacheHit) {
    const auto spec = KernelSpec::make("cache_probe", "f32 x", "f32 z", "z = x + 1.0;");
    const auto before = ctx().counters().compilations;
    const auto k1 = compile_or_get(ctx(), spec, 1);
    const auto k2 = compile_or_get(ctx(), spec, 1);
    EXPECT_EQ(k1.get(), k2.get());
    EXPECT_EQ(ctx().counters().compilations, before + 1);
    const auto other = KernelSpec::make("cache_probe", "f32 x", "f32 z", "z = x + 2.0;");
    const auto k3 = compile_or_get(ctx(), other, 1);
    EXPECT_NE(k3.get(), k1.get());
    EXPECT_EQ(ctx().counters().compilations, before + 2);
}

TEST_F(DeviceTest, SyntaxErrorCarriesDiagnostics) {
    const auto spec = KernelSpec::make("broken", "f32 x", "f32 z", "z = (x -");
    try {
        compile_or_get(ctx(), spec, 1);
        FAIL() << "compiled";
    } catch (const ShaderCompileError& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShaderCompileError);
        EXPECT_NE(e.diagnostics().find("error"), std::string::npos) << e.diagnostics();
        EXPECT_NE(e.diagnostics().find(":"), std::string::npos);
    }
    // Type errors surface the same way.
    EXPECT_THROW(compile_or_get(ctx(), KernelSpec::make("typed", "f32 x", "i32 z", "z = x;"), 1), ShaderCompileError);
}

TEST_F(DeviceTest, ReluBwdCompilesCleanly) {
    const auto k = compile_or_get(ctx(), apps::relu_bwd_kernel().spec(), 1);
    EXPECT_TRUE(k->pipeline);
    EXPECT_TRUE(ctx().device().create_shader_module(k->source)->compilation_info().diagnostics.empty());
}

TEST_F(DeviceTest, SquaredDiffSmall) {
    const float x[] = {3, 0, -1}, y[] = {1, 0, 1};
    const auto z = nt::test_kernel(nt::TestKernel::SquaredDiff)(
        ctx(), {ctx().upload(HostArray::from_f32(Shape{3}, x)), ctx().upload(HostArray::from_f32(Shape{3}, y))});
    EXPECT_EQ(ctx().readback_blocking(z).to_f32(), (std::vector<float>{4, 0, 4}));
}

TEST_F(DeviceTest, ReluBwdSmall) {
    const float y[] = {2, -1, 0}, gy[] = {5, 5, 5};
    const auto gx = apps::relu_bwd_kernel()(
        ctx(), {ctx().upload(HostArray::from_f32(Shape{3}, y)), ctx().upload(HostArray::from_f32(Shape{3}, gy))});
    EXPECT_EQ(ctx().readback_blocking(gx).to_f32(), (std::vector<float>{5, 0, 0}));
}

TEST_F(DeviceTest, SquaredDiffBroadcast) {
    nt::Rng rng(3);
    const auto x = nt::random_array(rng, DType::F32, Shape{3, 1}, -5, 5);
    const auto y = nt::random_array(rng, DType::F32, Shape{1, 4}, -5, 5);
    const auto z = ctx().readback_blocking(
        nt::test_kernel(nt::TestKernel::SquaredDiff)(ctx(), {ctx().upload(x), ctx().upload(y)}));
    EXPECT_EQ(z.shape(), (Shape{3, 4}));
    const auto want = host::eval_elementwise([](std::span<const double> v) { return (v[0] - v[1]) * (v[0] - v[1]); },
                                             {x, y}, DType::F32);
    EXPECT_TRUE(nt::compare(z, want).ok());
}

TEST_F(DeviceTest, IdentityOnMatrices) {
    nt::Rng rng(4);
    for (auto shape : {Shape{1, 1}, Shape{7, 5}, Shape{64, 3}}) {
        const auto x = nt::random_array(rng, DType::F32, shape, -100, 100);
        const auto z = nt::test_kernel(nt::TestKernel::Identity)(ctx(), {ctx().upload(x)});
        EXPECT_EQ(ctx().readback_blocking(z).words(), x.words());
    }
}

TEST_F(DeviceTest, KernelSuites) {
    for (auto k : {nt::TestKernel::SquaredDiff, nt::TestKernel::ReluBwd, nt::TestKernel::Identity}) {
        const auto s = nt::kernel_suite(ctx(), k, 40, 100 + static_cast<int>(k));
        EXPECT_TRUE(s.ok()) << s.first_failure;
    }
}

TEST_F(DeviceTest, LaunchChecksDTypes) {
    const auto x = ctx().upload(HostArray::zeros(DType::I32, Shape{3}));
    EXPECT_ERROR_CODE(nt::test_kernel(nt::TestKernel::Identity)(ctx(), {x}), ErrorCode::DTypeMismatch);
    const auto f = ctx().upload(HostArray::zeros(DType::F32, Shape{3}));
    EXPECT_ERROR_CODE(nt::test_kernel(nt::TestKernel::SquaredDiff)(ctx(), {f}), ErrorCode::InvalidArgument);
}

TEST_F(DeviceTest, IndexVariableAndRawBindings) {
    static const ElementwiseKernel neighbor("f32 x", "f32 z",
                                            "let j = min(i + 1u, 3u); z = ek_in_x[j] - x;",
                                            "forward_diff");
    const float v[] = {1, 3, 6, 10};
    const auto z = neighbor(ctx(), {ctx().upload(HostArray::from_f32(Shape{4}, v))});
    EXPECT_EQ(ctx().readback_blocking(z).to_f32(), (std::vector<float>{2, 3, 4, 0}));
}

TEST_F(DeviceTest, MultipleOutputs) {
    static const ElementwiseKernel split("i32 a", "i32 q, i32 r", "q = a / 3i; r = a % 3i;", "divmod3");
    const std::int32_t v[] = {7, -7, 9};
    const DeviceArray in[] = {ctx().upload(HostArray::from_i32(Shape{3}, v))};
    const auto outs = split(ctx(), in);
    ASSERT_EQ(outs.size(), 2u);
    EXPECT_EQ(ctx().readback_blocking(outs[0]).to_i32(), (std::vector<std::int32_t>{2, -2, 3}));
    EXPECT_EQ(ctx().readback_blocking(outs[1]).to_i32(), (std::vector<std::int32_t>{1, -1, 0}));
}

class LaunchCompleteness : public DeviceTest, public ::testing::WithParamInterface<std::int64_t> {};

TEST_P(LaunchCompleteness, EveryElementWrittenOnce) {
    const std::int64_t n = GetParam();
    static const ElementwiseKernel mark("u32 base", "u32 y", "y = base + i;", "mark_index");
    constexpr std::uint32_t kSentinel = 0xFFFFFFFFu;
    // One extra trailing word detects writes past the end.
    const DeviceArray buf = ctx().upload(HostArray::full(DType::U32, Shape{n + 1}, kSentinel));
    const DeviceArray out = buf.view(ArrayDescriptor::contiguous(DType::U32, Shape{n}));
    const DeviceArray in[] = {ctx().upload(HostArray::full(DType::U32, Shape{}, 1.0))};
    const DeviceArray outs[] = {out};
    mark.run(ctx(), in, outs);
    const auto got = ctx().readback_blocking(buf).words();
    std::int64_t bad = 0;
    for (std::int64_t k = 0; k < n; ++k) bad += got[k] != static_cast<std::uint32_t>(k + 1);
    EXPECT_EQ(bad, 0);
    EXPECT_EQ(got[n], kSentinel);
}

INSTANTIATE_TEST_SUITE_P(Sizes, LaunchCompleteness, ::testing::Values(1, 63, 64, 65, 64ll * 65535 + 1));
