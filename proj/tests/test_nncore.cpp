#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "fsn/nncore.hpp"
#include "fsn/random.hpp"
#include "oracles.hpp"

using namespace fsn;
using namespace fsn::nn;

namespace {

SeqTensor column(std::vector<double> v) {
    const std::size_t n = v.size();
    return SeqTensor(n, 1, std::move(v));
}

ConvLayer1D identity_layer(std::size_t channels, std::size_t dilation) {
    ConvLayer1D layer(channels, channels, 3, dilation);
    for (std::size_t c = 0; c < channels; ++c) layer.weight(c, c, 1) = 1.0;
    return layer;
}

}  // namespace

TEST(SeqTensor, RejectsBadShapes) {
    EXPECT_THROW(SeqTensor(0, 3), std::invalid_argument);
    EXPECT_THROW(SeqTensor(2, 0), std::invalid_argument);
    EXPECT_THROW(SeqTensor(2, 2, std::vector<double>(3)), std::invalid_argument);
}

TEST(DilatedConv, IdentityKernelCopiesInput) {
    Rng rng(1);
    const SeqTensor x = oracle::random_seq(rng, 9, 3);
    for (std::size_t d : {1u, 2u, 4u}) EXPECT_EQ(dilated_conv1d_forward(x, identity_layer(3, d)), x);
}

TEST(DilatedConv, OnesKernelDilationTwo) {
    ConvLayer1D layer(1, 1, 3, 2);
    layer.weights = {1.0, 1.0, 1.0};
    const SeqTensor y = dilated_conv1d_forward(column({1, 2, 3, 4, 5}), layer);
    // out[t] = x[t-2] + x[t] + x[t+2] with zeros outside.
    EXPECT_EQ(y, column({4, 6, 9, 6, 8}));
    EXPECT_EQ(oracle::naive_conv(column({1, 2, 3, 4, 5}), layer), y);
}

TEST(DilatedConv, MatchesNaiveLoop) {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t t = 1 + rng.index(12), ci = 1 + rng.index(4), co = 1 + rng.index(4);
        const std::size_t d = std::size_t{1} << rng.index(3);
        ConvLayer1D layer(co, ci, 3, d);
        for (double& w : layer.weights) w = rng.normal();
        for (double& b : layer.bias) b = rng.normal();
        const SeqTensor x = oracle::random_seq(rng, t, ci);
        const SeqTensor got = dilated_conv1d_forward(x, layer);
        const SeqTensor want = oracle::naive_conv(x, layer);
        ASSERT_EQ(got.time_len(), t);
        for (std::size_t n = 0; n < got.size(); ++n) ASSERT_NEAR(got.values()[n], want.values()[n], 1e-12);
    }
}

TEST(DilatedConv, Errors) {
    ConvLayer1D layer(2, 3, 3, 1);
    EXPECT_THROW(dilated_conv1d_forward(SeqTensor(4, 2), layer), std::invalid_argument);
    EXPECT_THROW(ConvLayer1D(1, 1, 3, 0), std::invalid_argument);
    EXPECT_THROW(ConvLayer1D(1, 1, 2, 1), std::invalid_argument);
    EXPECT_THROW(dilated_conv1d_backward(SeqTensor(4, 1), SeqTensor(4, 3), layer), std::invalid_argument);
}

TEST(DilatedConv, BackwardZeroAndIdentity) {
    Rng rng(3);
    const SeqTensor x = oracle::random_seq(rng, 6, 2);
    ConvLayer1D layer(2, 2, 3, 2);
    for (double& w : layer.weights) w = rng.normal();
    const auto zero = dilated_conv1d_backward(SeqTensor(6, 2), x, layer);
    for (double v : zero.grad_x.values()) EXPECT_EQ(v, 0.0);
    for (double v : zero.grads.weights) EXPECT_EQ(v, 0.0);
    for (double v : zero.grads.bias) EXPECT_EQ(v, 0.0);

    const SeqTensor g = oracle::random_seq(rng, 6, 2);
    EXPECT_EQ(dilated_conv1d_backward(g, x, identity_layer(2, 4)).grad_x, g);
}

TEST(DilatedConv, ParamCount) {
    EXPECT_EQ(ConvLayer1D(4, 3, 3, 1).param_count(), 4u * (3u * 3u + 1u));
}

TEST(Relu, ForwardAndMask) {
    EXPECT_EQ(relu(column({-1, 0, 2})), column({0, 0, 2}));
    EXPECT_EQ(relu_backward(column({5, 5, 5}), column({-1, 0, 2})), column({0, 0, 5}));
    const SeqTensor pos = column({0.5, 1.0, 3.0});
    EXPECT_EQ(relu(pos), pos);
}

TEST(Upsample, HandExampleAndIdentity) {
    const SeqTensor y = bilinear_upsample_1d(column({0, 1}), 5);
    const std::vector<double> want{0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(y(t, 0), want[t]);
    Rng rng(4);
    const SeqTensor x = oracle::random_seq(rng, 7, 3);
    EXPECT_EQ(bilinear_upsample_1d(x, 7), x);
    EXPECT_EQ(bilinear_upsample_1d(column({2.5}), 4), column({2.5, 2.5, 2.5, 2.5}));
    EXPECT_THROW(bilinear_upsample_1d(x, 6), std::invalid_argument);
}

TEST(Upsample, ExactOnAffineSequences) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.index(8), t = n + rng.index(40);
        const double a = rng.normal(), b = rng.normal();
        SeqTensor x(n, 1);
        for (std::size_t i = 0; i < n; ++i) x(i, 0) = a + b * static_cast<double>(i);
        const SeqTensor y = bilinear_upsample_1d(x, t);
        for (std::size_t i = 0; i < t; ++i) {
            const double s = static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(t - 1);
            EXPECT_NEAR(y(i, 0), a + b * s, 1e-12);
        }
    }
}

TEST(Upsample, BackwardIsTranspose) {
    Rng rng(6);
    const SeqTensor x = oracle::random_seq(rng, 5, 2);
    const SeqTensor g = oracle::random_seq(rng, 17, 2);
    const SeqTensor y = bilinear_upsample_1d(x, 17);
    const SeqTensor gx = bilinear_upsample_1d_backward(g, 5);
    double lhs = 0, rhs = 0;
    for (std::size_t n = 0; n < y.size(); ++n) lhs += y.values()[n] * g.values()[n];
    for (std::size_t n = 0; n < x.size(); ++n) rhs += x.values()[n] * gx.values()[n];
    EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Softmax, Examples) {
    const SeqTensor u = framewise_softmax(SeqTensor(1, 3));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(u(0, c), 1.0 / 3.0);
    const SeqTensor p = framewise_softmax(SeqTensor(1, 2, {1.0, 2.0}));
    EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + std::exp(1.0)), 1e-15);
    EXPECT_NEAR(p(0, 1), std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-15);

    const auto v = softmax_vec(std::vector<double>{0.0, std::log(3.0)});
    EXPECT_NEAR(v[0], 0.25, 1e-15);
    EXPECT_NEAR(v[1], 0.75, 1e-15);
    for (double q : softmax_vec(std::vector<double>(4, 0.0))) EXPECT_DOUBLE_EQ(q, 0.25);
}

TEST(Softmax, RowsShiftInvariantAndNormalized) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        SeqTensor x = oracle::random_seq(rng, 5, 4);
        for (double& v : x.values()) v *= 30.0;
        const SeqTensor p = framewise_softmax(x);
        SeqTensor shifted = x;
        for (std::size_t t = 0; t < 5; ++t) {
            const double c = 100.0 * rng.normal();
            for (std::size_t k = 0; k < 4; ++k) shifted(t, k) += c;
        }
        const SeqTensor q = framewise_softmax(shifted);
        for (std::size_t t = 0; t < 5; ++t) {
            double sum = 0;
            for (std::size_t k = 0; k < 4; ++k) {
                sum += p(t, k);
                EXPECT_GE(p(t, k), 0.0);
                EXPECT_LE(p(t, k), 1.0);
                EXPECT_NEAR(p(t, k), q(t, k), 1e-9);
            }
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
    const std::vector<double> big{1000.0, 999.0, -5.0};
    const auto s = softmax_vec(big);
    EXPECT_EQ(std::max_element(s.begin(), s.end()) - s.begin(), 0);
}

TEST(CrossEntropy, Examples) {
    const std::vector<int> ids{1};
    LossInput in{{SeqTensor(1, 3)}, {one_hot(ids, 3)}};
    EXPECT_NEAR(framewise_cross_entropy(in).loss, std::log(3.0), 1e-15);
    in.logits[0](0, 1) = 50.0;
    EXPECT_LT(framewise_cross_entropy(in).loss, 1e-20);
}

TEST(CrossEntropy, SumsOverTimeAveragesOverBatch) {
    const std::vector<int> ids{0, 2, 1, 1};
    LossInput in;
    for (int b = 0; b < 3; ++b) {
        in.logits.emplace_back(4, 3);
        in.labels.push_back(one_hot(ids, 3));
    }
    EXPECT_NEAR(framewise_cross_entropy(in).loss, 4.0 * std::log(3.0), 1e-12);
}

TEST(CrossEntropy, RejectsMalformedLabels) {
    LossInput in{{SeqTensor(1, 3)}, {SeqTensor(1, 3, {0.5, 0.5, 0.0})}};
    EXPECT_THROW(framewise_cross_entropy(in), std::invalid_argument);
    in.labels[0] = SeqTensor(1, 3, {1.0, 1.0, 0.0});
    EXPECT_THROW(framewise_cross_entropy(in), std::invalid_argument);
    in.labels[0] = SeqTensor(2, 3);
    EXPECT_THROW(framewise_cross_entropy(in), std::invalid_argument);
    EXPECT_THROW(framewise_cross_entropy(LossInput{}), std::invalid_argument);
}

TEST(Pool, Examples) {
    const SeqTensor x = column({1, 5, 3});
    EXPECT_DOUBLE_EQ(temporal_pool(x, PoolMode::Average)[0], 3.0);
    EXPECT_DOUBLE_EQ(temporal_pool(x, PoolMode::Max)[0], 5.0);
    const SeqTensor c(4, 2, {2, -1, 2, -1, 2, -1, 2, -1});
    EXPECT_EQ(temporal_pool(c, PoolMode::Average), temporal_pool(c, PoolMode::Max));
}

TEST(Pool, MaxTieRoutesToEarliest) {
    const std::vector<double> g{1.0};
    const SeqTensor grad = temporal_pool_backward(g, column({5, 5}), PoolMode::Max);
    EXPECT_EQ(grad, column({1, 0}));
    // Nudging either tied entry upward moves the pooled value; nudging index 0
    // down leaves it unchanged, so only a one-sided derivative exists there.
    const double h = 1e-6;
    EXPECT_NEAR((temporal_pool(column({5 + h, 5}), PoolMode::Max)[0] - 5.0) / h, 1.0, 1e-9);
}

TEST(Pool, MaxDominatesAverage) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const SeqTensor x = oracle::random_seq(rng, 1 + rng.index(8), 3);
        const auto avg = temporal_pool(x, PoolMode::Average);
        const auto mx = temporal_pool(x, PoolMode::Max);
        for (std::size_t c = 0; c < 3; ++c) {
            if (x.time_len() == 1) {
                EXPECT_DOUBLE_EQ(mx[c], avg[c]);
            } else {
                EXPECT_GT(mx[c], avg[c]);
            }
        }
    }
}

TEST(Pool, ParseMode) {
    EXPECT_EQ(parse_pool_mode("gmp"), PoolMode::Max);
    EXPECT_EQ(parse_pool_mode("gap"), PoolMode::Average);
    EXPECT_EQ(parse_pool_mode("avg"), PoolMode::Average);
    EXPECT_THROW(parse_pool_mode("median"), std::invalid_argument);
}

TEST(Sgd, PlainStepAndZeroGradient) {
    std::vector<double> p{1.0, -2.0};
    const std::vector<double> g{0.5, 1.0};
    OptimizerState state(0.1, 0.0, 0.0);
    const std::vector<ParamSlot> slots{{p, g, true}};
    sgd_update(slots, state);
    EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.05);
    EXPECT_DOUBLE_EQ(p[1], -2.0 - 0.1);

    std::vector<double> q{3.0};
    const std::vector<double> zero{0.0};
    OptimizerState s2(0.1, 0.9, 0.0);
    const std::vector<ParamSlot> s2slots{{q, zero, true}};
    sgd_update(s2slots, s2);
    EXPECT_EQ(q[0], 3.0);
}

TEST(Sgd, MomentumHandIteration) {
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    OptimizerState state(0.1, 0.9, 0.0);
    const std::vector<ParamSlot> slots{{p, g, true}};
    sgd_update(slots, state);
    EXPECT_NEAR(p[0], -0.1, 1e-15);
    sgd_update(slots, state);
    EXPECT_NEAR(p[0], -0.29, 1e-15);
}

TEST(Sgd, DecaySkipsBiases) {
    std::vector<double> w{2.0}, b{2.0};
    const std::vector<double> g{0.0};
    OptimizerState state(0.1, 0.0, 0.5);
    const std::vector<ParamSlot> slots{{w, g, true}, {b, g, false}};
    sgd_update(slots, state);
    EXPECT_DOUBLE_EQ(w[0], 2.0 - 0.1 * 0.5 * 2.0);
    EXPECT_EQ(b[0], 2.0);
    ASSERT_EQ(state.velocity().size(), 2u);
}

TEST(Sgd, QuadraticLossDecreasesMonotonically) {
    // f(p) = 0.5 * a * p^2, curvature a; plain SGD is stable for lr < 2/a.
    const double a = 4.0;
    std::vector<double> p{3.0}, g{0.0};
    OptimizerState state(0.3, 0.0, 0.0);
    const std::vector<ParamSlot> slots{{p, g, true}};
    double prev = 0.5 * a * p[0] * p[0];
    for (int step = 0; step < 30; ++step) {
        g[0] = a * p[0];
        sgd_update(slots, state);
        const double f = 0.5 * a * p[0] * p[0];
        EXPECT_LT(f, prev);
        prev = f;
    }
}

TEST(Sgd, ValidatesState) {
    EXPECT_THROW(OptimizerState(-1.0, 0.9, 0.0), std::invalid_argument);
    EXPECT_THROW(OptimizerState(0.1, 1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(OptimizerState(0.1, 0.5, -1.0), std::invalid_argument);
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{1.0};
    OptimizerState state(0.1, 0.0, 0.0);
    const std::vector<ParamSlot> slots{{p, g, true}};
    EXPECT_THROW(sgd_update(slots, state), std::invalid_argument);
}

TEST(GradientCheck, LinearFunctionIsExact) {
    const std::vector<double> c{1.5, -2.0, 0.25};
    auto f = [&](std::span<const double> p) { return std::inner_product(p.begin(), p.end(), c.begin(), 0.0); };
    const std::vector<double> p{0.3, 0.1, -4.0};
    const auto report = gradient_check(f, p, c, 1e-5);
    EXPECT_LT(report.max_rel_error, 1e-10);
    EXPECT_TRUE(report.passed());
    EXPECT_EQ(report.checked, 3u);
}

TEST(GradientCheck, FlagsWrongGradientAndNonFiniteLoss) {
    auto f = [](std::span<const double> p) { return p[0] * p[0]; };
    const std::vector<double> p{2.0};
    EXPECT_FALSE(gradient_check(f, p, std::vector<double>{4.1}, 1e-5).passed());
    auto bad = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
    EXPECT_THROW(gradient_check(bad, p, std::vector<double>{0.0}, 1e-5), std::runtime_error);
}
