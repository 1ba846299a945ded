#include <gtest/gtest.h>

#include "ndgpu/apps/matmul_sweep.hpp"
#include "ndgpu/apps/mlp.hpp"
#include "ndgpu/host_ops.hpp"
#include "ndgpu/ops.hpp"
#include "support/suites.hpp"
#include "support/test_util.hpp"

using namespace ndgpu;
namespace nt = ndgpu::testing;
using nt::DeviceTest;

namespace {

HostArray f32(const Shape& s, std::vector<float> v) { return HostArray::from_f32(s, v); }

}  // namespace

TEST_F(DeviceTest, AddVectors) {
    const auto r = ops::add(ctx(), ctx().upload(f32({3}, {1, 2, 3})), ctx().upload(f32({3}, {10, 20, 30})));
    EXPECT_EQ(ctx().readback_blocking(r).to_f32(), (std::vector<float>{11, 22, 33}));
}

TEST_F(DeviceTest, BroadcastOnes) {
    const auto r = ops::mul(ctx(), ctx().upload(HostArray::full(DType::F32, {3, 1}, 1)),
                            ctx().upload(HostArray::full(DType::F32, {1, 4}, 1)));
    EXPECT_EQ(r.shape(), (Shape{3, 4}));
    EXPECT_EQ(ctx().readback_blocking(r).to_f32(), std::vector<float>(12, 1.0f));
}

TEST_F(DeviceTest, ScalarOperand) {
    const auto r = ops::binary(ctx(), BinaryOpKind::Sub, ctx().upload(HostArray::from_i32({3}, std::vector<std::int32_t>{5, 6, 7})), 2);
    EXPECT_EQ(ctx().readback_blocking(r).to_i32(), (std::vector<std::int32_t>{3, 4, 5}));
}

TEST_F(DeviceTest, OpErrors) {
    const auto a = ctx().upload(HostArray::zeros(DType::F32, {3}));
    const auto i = ctx().upload(HostArray::zeros(DType::I32, {3}));
    const auto b = ctx().upload(HostArray::zeros(DType::Bool, {3}));
    EXPECT_ERROR_CODE(ops::add(ctx(), a, i), ErrorCode::DTypeMismatch);
    EXPECT_ERROR_CODE(ops::div(ctx(), i, i), ErrorCode::IntegerDivisionUnsupported);
    EXPECT_ERROR_CODE(ops::add(ctx(), b, b), ErrorCode::DTypeMismatch);
    EXPECT_ERROR_CODE(ops::add(ctx(), a, ctx().upload(HostArray::zeros(DType::F32, {4}))), ErrorCode::IncompatibleShapes);
    EXPECT_ERROR_CODE(ops::reduce(ctx(), a, ReduceOp::Sum, 1), ErrorCode::AxisOutOfRange);
    EXPECT_ERROR_CODE(ops::reduce(ctx(), ctx().upload(HostArray::zeros(DType::U32, {3})), ReduceOp::Sum), ErrorCode::DTypeMismatch);
    EXPECT_ERROR_CODE(ops::matmul(ctx(), a.reshape({1, 3}), a.reshape({1, 3})), ErrorCode::ShapeMismatch);
    EXPECT_ERROR_CODE(ops::matmul(ctx(), i.reshape({1, 3}), i.reshape({3, 1})), ErrorCode::DTypeMismatch);
    EXPECT_ERROR_CODE(ops::matmul(ctx(), a.reshape({1, 3}), a.reshape({3, 1}), MatmulVariant::Tiled, 17), ErrorCode::InvalidArgument);
}

TEST_F(DeviceTest, GreaterOnMagnitude) {
    nt::Rng rng(21);
    for (int c = 0; c < 5; ++c) {
        const auto xs = nt::random_array(rng, DType::F32, {16, 16}, -2, 2);
        const auto ys = nt::random_array(rng, DType::F32, {16, 16}, -2, 2);
        const auto dx = ctx().upload(xs), dy = ctx().upload(ys);
        const auto mag = ops::add(ctx(), ops::mul(ctx(), dx, dx), ops::mul(ctx(), dy, dy));
        const auto got = ctx().readback_blocking(ops::binary(ctx(), BinaryOpKind::Greater, mag, 4.0));
        const auto hmag = host::binary(BinaryOpKind::Add, host::binary(BinaryOpKind::Mul, xs, xs), host::binary(BinaryOpKind::Mul, ys, ys));
        EXPECT_EQ(got.words(), host::binary(BinaryOpKind::Greater, hmag, 4.0).words());
    }
}

TEST_F(DeviceTest, WhereSelects) {
    const std::uint8_t cond[] = {1, 0, 1};
    const auto c = ctx().upload(HostArray::from_bool({3}, cond));
    const auto r = ops::where(ctx(), c, ctx().upload(f32({3}, {5, 5, 5})), ctx().upload(f32({3}, {0, 0, 0})));
    EXPECT_EQ(ctx().readback_blocking(r).to_f32(), (std::vector<float>{5, 0, 5}));

    nt::Rng rng(8);
    const auto b = nt::random_array(rng, DType::F32, {4, 5}, -1e6, 1e6);
    const auto zero = ctx().upload(HostArray::zeros(DType::Bool, {4, 5}));
    const auto got = ops::where(ctx(), zero, ctx().upload(nt::random_array(rng, DType::F32, {4, 5}, -1, 1)), ctx().upload(b));
    EXPECT_EQ(ctx().readback_blocking(got).words(), b.words());
}

TEST_F(DeviceTest, WhereMatchesReluBwd) {
    nt::Rng rng(13);
    for (int c = 0; c < 10; ++c) {
        const Shape s = nt::random_shape(rng, 3, 9);
        const auto y = ctx().upload(nt::random_array(rng, DType::F32, s, -1, 1));
        const auto gy = ctx().upload(nt::random_array(rng, DType::F32, s, -1, 1));
        const auto composed = ops::where(ctx(), ops::binary(ctx(), BinaryOpKind::Greater, y, 0.0), gy,
                                         ctx().upload(HostArray::zeros(DType::F32, {})));
        const auto custom = apps::relu_bwd_kernel()(ctx(), {y, gy});
        EXPECT_EQ(ctx().readback_blocking(composed).words(), ctx().readback_blocking(custom).words());
    }
}

TEST_F(DeviceTest, AstypeCases) {
    const std::uint8_t bits[] = {1, 0, 1};
    const auto r = ops::astype(ctx(), ctx().upload(HostArray::from_bool({3}, bits)), DType::I32);
    EXPECT_EQ(ctx().readback_blocking(r).to_i32(), (std::vector<std::int32_t>{1, 0, 1}));
    const auto t = ops::astype(ctx(), ctx().upload(f32({2}, {1.9f, -1.9f})), DType::I32);
    EXPECT_EQ(ctx().readback_blocking(t).to_i32(), (std::vector<std::int32_t>{1, -1}));
    const auto src = ctx().upload(f32({3}, {0.1f, -0.0f, 7.5f}));
    const auto same = ops::astype(ctx(), src, DType::F32);
    EXPECT_FALSE(same.buffer() == src.buffer());
    EXPECT_EQ(ctx().readback_blocking(same).words(), ctx().readback_blocking(src).words());
}

TEST_F(DeviceTest, ReduceCases) {
    EXPECT_EQ(ctx().readback_blocking(ops::reduce(ctx(), ctx().upload(HostArray::full(DType::F32, {1024}, 1)), ReduceOp::Sum)).value_at(0),
              1024.0);
    EXPECT_EQ(ctx().readback_blocking(ops::reduce(ctx(), ctx().upload(f32({3}, {-3, 7, 2})), ReduceOp::Max)).value_at(0), 7.0);
    nt::Rng rng(9);
    const auto a = nt::random_array(rng, DType::F32, {33, 17}, -1, 1);
    const auto got = ctx().readback_blocking(ops::reduce(ctx(), ctx().upload(a), ReduceOp::Sum, 0)).to_f64();
    const auto want = host::reduce(a, ReduceOp::Sum, 0).to_f64();
    ASSERT_EQ(got.size(), 17u);
    for (std::size_t j = 0; j < 17; ++j) EXPECT_NEAR(got[j], want[j], 1e-5 * 33);
    const auto r = ops::reduce(ctx(), ctx().upload(HostArray::zeros(DType::I32, {4, 0})), ReduceOp::Sum, 1);
    EXPECT_EQ(ctx().readback_blocking(r).to_i32(), (std::vector<std::int32_t>{0, 0, 0, 0}));
}

TEST_F(DeviceTest, MatmulSmall) {
    const auto a = ctx().upload(f32({2, 2}, {1, 2, 3, 4}));
    const auto b = ctx().upload(f32({2, 2}, {5, 6, 7, 8}));
    for (auto v : {MatmulVariant::Naive, MatmulVariant::Tiled}) {
        EXPECT_EQ(ctx().readback_blocking(ops::matmul(ctx(), a, b, v)).to_f32(), (std::vector<float>{19, 22, 43, 50}));
    }
}

TEST_F(DeviceTest, MatmulVariantsAgree) {
    const auto ha = apps::random_matrix(130, 70, 1), hb = apps::random_matrix(70, 90, 2);
    const auto a = ctx().upload(ha), b = ctx().upload(hb);
    const auto naive = ctx().readback_blocking(ops::matmul(ctx(), a, b, MatmulVariant::Naive)).to_f64();
    const auto want = host::matmul(ha, hb).to_f64();
    for (std::uint32_t tile : {16u, 8u, 5u, 1u}) {
        const auto tiled = ctx().readback_blocking(ops::matmul(ctx(), a, b, MatmulVariant::Tiled, tile)).to_f64();
        for (std::size_t i = 0; i < tiled.size(); ++i) {
            ASSERT_LE(std::abs(tiled[i] - naive[i]), 1e-4 * std::max(1.0, std::abs(naive[i]))) << "tile " << tile;
        }
        EXPECT_LE(apps::max_rel_err(tiled, want), 1e-3);
    }
}

TEST_F(DeviceTest, MatmulOfTransposedView) {
    const auto ha = apps::random_matrix(5, 7, 3);
    const std::size_t swap[] = {1, 0};
    const auto at = ctx().upload(ha).transpose(swap);
    const auto got = ctx().readback_blocking(ops::matmul(ctx(), at, ctx().upload(ha)));
    EXPECT_LE(apps::max_rel_err(got.to_f64(), host::matmul(ha.view(transpose(ha.descriptor(), swap)), ha).to_f64()), 1e-5);
}

TEST_F(DeviceTest, BinarySuites) {
    for (auto kind : {BinaryOpKind::Add, BinaryOpKind::Sub, BinaryOpKind::Mul, BinaryOpKind::Div, BinaryOpKind::Maximum,
                      BinaryOpKind::Greater, BinaryOpKind::Less, BinaryOpKind::Equal}) {
        const auto s = nt::binary_suite(ctx(), kind, 30, 1000 + static_cast<int>(kind));
        EXPECT_TRUE(s.ok()) << s.first_failure;
    }
}

TEST_F(DeviceTest, WhereAstypeReduceSuites) {
    auto w = nt::where_suite(ctx(), 30, 1);
    EXPECT_TRUE(w.ok()) << w.first_failure;
    auto a = nt::astype_suite(ctx(), 40, 2);
    EXPECT_TRUE(a.ok()) << a.first_failure;
    auto r = nt::reduce_suite(ctx(), 30, 3);
    EXPECT_TRUE(r.ok()) << r.first_failure;
}
