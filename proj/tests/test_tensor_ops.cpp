// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "awracle/gradcheck.hpp"
#include "awracle/ops.hpp"
#include "awracle/rng.hpp"
#include "awracle/tensor.hpp"

using namespace awracle;

namespace {

Tensor64 random64(const Shape& shape, std::uint64_t seed, bool grad = true) {
    Rng rng(seed);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor64(shape, v, grad);
}

// Hand-rolled normal CDF from the series of erf, independent of std::erf.
double phi_series(double x) {
    const double z = x / std::sqrt(2.0);
    double term = z, acc = z;
    for (int n = 1; n < 60; ++n) {
        term *= -z * z / n;
        acc += term / (2 * n + 1);
    }
    return 0.5 * (1.0 + 2.0 / std::sqrt(M_PI) * acc);
}

}  // namespace

TEST(Tensor, RejectsZeroDimAndSizeMismatch) {
    EXPECT_THROW(Tensor32({0, 2}, {}), DimensionError);
    EXPECT_THROW(Tensor32({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, RejectsNonFiniteUnlessAllowed) {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(Tensor32({1}, {nan}), ParameterError);
    set_allow_nonfinite(true);
    EXPECT_NO_THROW(Tensor32({1}, {nan}));
    set_allow_nonfinite(false);
}

TEST(Tensor, CopiesShareCloneDoesNot) {
    Tensor32 a({2}, {1, 2});
    Tensor32 b = a;
    Tensor32 c = a.clone();
    a.mutable_data()[0] = 5;
    EXPECT_EQ(b[0], 5);
    EXPECT_EQ(c[0], 1);
}

TEST(Tensor, ItemNeedsOneElement) {
    EXPECT_EQ(Tensor32::scalar(3).item(), 3);
    EXPECT_THROW(Tensor32::zeros({2}).item(), UsageError);
}

TEST(Ops, MatmulSmall) {
    Tensor64 a({2, 2}, {1, 2, 3, 4});
    Tensor64 b({2, 1}, {5, 6});
    auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_DOUBLE_EQ(c[0], 17);
    EXPECT_DOUBLE_EQ(c[1], 39);
}

TEST(Ops, MatmulShapeMismatchThrows) {
    EXPECT_THROW(matmul(Tensor64::zeros({2, 3}), Tensor64::zeros({2, 3})), DimensionError);
}

TEST(Ops, MatmulGradMatchesFiniteDifference) {
    auto a = random64({3, 4}, 1), b = random64({4, 2}, 2);
    const double err = check_gradients([&] { return sum(matmul(a, b)); }, {a, b}, 1e-5);
    EXPECT_LT(err, 1e-4);
}

TEST(Ops, TransposeAndReshape) {
    Tensor64 a({2, 3}, {1, 2, 3, 4, 5, 6});
    auto t = transpose(a);
    ASSERT_EQ(t.shape(), (Shape{3, 2}));
    EXPECT_EQ(t[1], 4);
    EXPECT_THROW(reshape(a, {4, 2}), DimensionError);
    EXPECT_EQ(reshape(a, {3, 2})[5], 6);
}

TEST(Ops, ConcatSplitRoundTrip) {
    auto a = random64({2, 3}, 3, false), b = random64({4, 3}, 4, false);
    auto [x, y] = split_rows(concat_rows(a, b), 2);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(x[i], a[i]);
    for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(y[i], b[i]);
}

TEST(Ops, GeluGoldenValues) {
    Tensor64 x({3}, {1.0, -1.0, 0.0});
    auto y = gelu(x);
    EXPECT_NEAR(y[0], 0.841345, 1e-6);
    EXPECT_NEAR(y[1], -0.158655, 1e-6);
    EXPECT_EQ(y[2], 0.0);
    for (double v : {-2.5, -0.3, 0.7, 1.9}) {
        EXPECT_NEAR(gelu(Tensor64({1}, {v}))[0], v * phi_series(v), 1e-12);
    }
}

TEST(Ops, LayerNormTwoElementRow) {
    Tensor64 x({1, 2}, {1.0, 3.0});
    auto y = layer_norm(x, Tensor64::full({2}, 1.0), Tensor64::zeros({2}), 1e-12);
    EXPECT_NEAR(y[0], -1.0, 1e-6);
    EXPECT_NEAR(y[1], 1.0, 1e-6);
}

TEST(Ops, LayerNormRejectsBadEps) {
    EXPECT_THROW(layer_norm(Tensor64::zeros({1, 2}), Tensor64::full({2}, 1.0), Tensor64::zeros({2}), 0.0),
                 ParameterError);
}

TEST(Ops, SoftmaxGoldenAndNormalized) {
    auto y = softmax_rows(Tensor64({1, 2}, {0.0, std::log(3.0)}));
    EXPECT_NEAR(y[0], 0.25, 1e-12);
    EXPECT_NEAR(y[1], 0.75, 1e-12);
    Tensor64 big({2, 3}, {1000, 1001, 1002, -5, 0, 5});
    auto s = softmax_rows(big);
    for (std::size_t r = 0; r < 2; ++r) {
        double acc = 0;
        for (std::size_t c = 0; c < 3; ++c) acc += s[r * 3 + c];
        EXPECT_NEAR(acc, 1.0, 1e-12);
    }
}

TEST(Ops, Conv1x1IsChannelMix) {
    Tensor64 x({2, 1, 2}, {1, 2, 3, 4});
    Tensor64 k({1, 2, 1, 1}, {2, -1});
    auto y = conv2d(x, k, Tensor64({1}, {0.5}));
    ASSERT_EQ(y.shape(), (Shape{1, 1, 2}));
    EXPECT_DOUBLE_EQ(y[0], 2 * 1 - 3 + 0.5);
    EXPECT_DOUBLE_EQ(y[1], 2 * 2 - 4 + 0.5);
}

TEST(Ops, Conv3x3BoxFilterOnDelta) {
    auto x = Tensor64::zeros({1, 5, 5});
    x.mutable_data()[12] = 1.0;  // centre
    auto y = conv2d(x, Tensor64::full({1, 1, 3, 3}, 1.0), Tensor64());
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            const bool inside = i >= 1 && i <= 3 && j >= 1 && j <= 3;
            EXPECT_EQ(y[i * 5 + j], inside ? 1.0 : 0.0);
        }
    }
}

TEST(Ops, Conv3x3ZeroPaddingAtCorner) {
    auto y = conv2d(Tensor64::full({1, 4, 4}, 1.0), Tensor64::full({1, 1, 3, 3}, 1.0), Tensor64());
    EXPECT_EQ(y[0], 4.0);
    EXPECT_EQ(y[1], 6.0);
    EXPECT_EQ(y[5], 9.0);
}

TEST(Ops, ConvStrideTwoHalves) {
    auto y = conv2d(random64({2, 8, 6}, 5, false), random64({3, 2, 3, 3}, 6, false), Tensor64(), 2);
    EXPECT_EQ(y.shape(), (Shape{3, 4, 3}));
}

TEST(Ops, ConvKernelGradMatchesFiniteDifference) {
    auto x = random64({2, 5, 5}, 7), k = random64({3, 2, 3, 3}, 8), b = random64({3}, 9);
    auto w = random64({3, 5, 5}, 10, false);
    const double err = check_gradients([&] { return sum(mul(conv2d(x, k, b), w)); }, {x, k, b}, 1e-5);
    EXPECT_LT(err, 1e-4);
}

TEST(Ops, UpsampleNearest) {
    auto y = upsample_nearest2x(Tensor64({1, 1, 2}, {1, 2}));
    ASSERT_EQ(y.shape(), (Shape{1, 2, 4}));
    EXPECT_EQ(y[0], 1);
    EXPECT_EQ(y[1], 1);
    EXPECT_EQ(y[2], 2);
    EXPECT_EQ(y[7], 2);
}

TEST(Ops, L1SubgradientConvention) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor64 x({4}, {0.5, -2.0, 0.0, 1e-9}, true);
    auto loss = l1_loss(x, Tensor64::zeros({4}));
    EXPECT_NEAR(loss.item(), (0.5 + 2.0 + 1e-9) / 4, 1e-15);
    backward(loss);
    EXPECT_EQ(x.grad()[0], 0.25);
    EXPECT_EQ(x.grad()[1], -0.25);
    EXPECT_EQ(x.grad()[2], 0.0);
    EXPECT_EQ(x.grad()[3], 0.25);
}

TEST(Ops, NoTapeMeansNoRecording) {
    Tape<double> tape;
    auto a = random64({2, 2}, 11);
    {
        NoGradScope<double> off;
        (void)matmul(a, a);
    }
    EXPECT_EQ(tape.size(), 0u);
    TapeScope<double> scope(tape);
    (void)matmul(a, a);
    EXPECT_EQ(tape.size(), 1u);
}

TEST(Ops, LeafGradsAccumulateAcrossBackward) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor64 x({1}, {3.0}, true);
    backward(sum(scale(x, 2.0)));
    tape.clear();
    backward(sum(scale(x, 2.0)));
    EXPECT_EQ(x.grad()[0], 4.0);
}

TEST(Ops, BackwardNeedsScalar) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto y = scale(random64({2}, 12), 2.0);
    EXPECT_THROW(backward(y), UsageError);
}

TEST(GradCheck, RelativeErrorFloor) {
    EXPECT_NEAR(grad_relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
    EXPECT_DOUBLE_EQ(grad_relative_error(0.0, 1e-6), 1e-3);
}

TEST(GradCheck, EveryOpPassesWithFewSeeds) {
    GradCheckOptions o;
    o.seeds = 2;
    o.max_graph_entries = 150;
    for (const auto& r : run_gradcheck(o)) EXPECT_TRUE(r.passed()) << r.op << " " << r.max_rel_error;
}

TEST(GradCheck, InjectedFaultIsCaught) {
    GradCheckOptions o;
    o.seeds = 2;
    o.only = "fault_fixture";
    o.inject_fault = true;
    const auto results = run_gradcheck(o);
    ASSERT_EQ(results.size(), 1u);
    EXPECT_FALSE(results[0].passed());
}
