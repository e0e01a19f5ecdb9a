// Copyright 2026 The a2dtwp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "a2dtwp/nn.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace a2dtwp::nn;

namespace {

struct Batch
{
    std::vector<double> x;
    std::vector<int> y;
};

Batch random_batch(std::size_t n, std::size_t features, std::size_t classes, std::mt19937_64& rng)
{
    Batch b;
    std::normal_distribution<double> d(0.0, 1.0);
    b.x.resize(n * features);
    for (auto& v : b.x)
        v = d(rng);
    for (std::size_t s = 0; s < n; ++s)
        b.y.push_back(static_cast<int>(rng() % classes));
    return b;
}

SgdConfig plain_sgd(double lr)
{
    SgdConfig c;
    c.learning_rate = lr;
    c.momentum = 0.0;
    c.weight_decay = 0.0;
    return c;
}

Network scalar_net(float w)
{
    Network net({1, 1});
    net.layers()[0].weights[0] = w;
    return net;
}

GradientSet scalar_grad(float g, std::size_t samples)
{
    GradientSet s;
    s.weights = {{g}};
    s.biases = {{0.0f}};
    s.sample_count = samples;
    return s;
}

} // namespace

TEST(Network, ShapesAndValidation)
{
    Network net({4, 3, 2});
    EXPECT_EQ(net.layer_count(), 2u);
    EXPECT_EQ(net.parameter_count(), 4u * 3 + 3 + 3 * 2 + 2);
    EXPECT_EQ(net.widths(), (std::vector<std::size_t>{4, 3, 2}));
    EXPECT_THROW(Network({4}), ShapeMismatch);
    EXPECT_THROW(Network({4, 0, 2}), ShapeMismatch);
}

TEST(Forward, IdentityNetGivesSoftmaxOfInput)
{
    BasicNetwork<double> net({3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        net.layers()[0].weight(i, i) = 1.0;
    const std::vector<double> x{0.0, 1.0, 0.0};
    const std::vector<int> y{1};
    const auto acts = forward<double>(net, x, y);
    const double e = std::exp(1.0);
    const double z = 2.0 + e;
    EXPECT_NEAR(acts.probabilities()[0], 1.0 / z, 1e-12);
    EXPECT_NEAR(acts.probabilities()[1], e / z, 1e-12);
    EXPECT_NEAR(acts.loss, -std::log(e / z), 1e-12);
}

TEST(Forward, RejectsBadInput)
{
    Network net({3, 2});
    EXPECT_THROW(forward<float>(net, std::vector<float>{}, std::vector<int>{}), ShapeMismatch);
    EXPECT_THROW(forward<float>(net, std::vector<float>(5), std::vector<int>{0, 1}), ShapeMismatch);
    EXPECT_THROW(forward<float>(net, std::vector<float>(3), std::vector<int>{2}), ShapeMismatch);
    EXPECT_THROW(forward<float>(net, std::vector<float>(3), std::vector<int>{-1}), ShapeMismatch);
}

TEST(Forward, LossMatchesOracleAndSoftmaxRowsSumToOne)
{
    std::mt19937_64 rng(3);
    BasicNetwork<double> net({6, 5, 3});
    init_normal(net, rng, 0.5);
    const auto b = random_batch(4, 6, 3, rng);
    const auto acts = forward<double>(net, b.x, b.y);
    EXPECT_NEAR(acts.loss, static_cast<double>(oracle::mlp_loss(net, b.x, b.y)), 1e-6);
    EXPECT_GE(acts.loss, 0.0);

    Network fnet = net.cast<float>();
    std::vector<float> fx(b.x.begin(), b.x.end());
    const auto fa = forward<float>(fnet, fx, b.y);
    for (std::size_t s = 0; s < 4; ++s)
    {
        double sum = 0;
        for (std::size_t j = 0; j < 3; ++j)
            sum += fa.probabilities()[s * 3 + j];
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Backward, MatchesCentralDifferences)
{
    std::mt19937_64 rng(11);
    BasicNetwork<double> net({12, 16, 10, 4});
    init_normal(net, rng, 0.3);
    for (auto& layer : net.layers())
        for (auto& b : layer.biases)
            b = std::normal_distribution<double>(0.0, 0.1)(rng);
    const auto batch = random_batch(8, 12, 4, rng);
    const auto acts = forward<double>(net, batch.x, batch.y);
    const auto grad = backward(net, acts);

    const double h = 1e-3;
    std::vector<bool> base_pattern;
    oracle::mlp_loss(net, batch.x, batch.y, &base_pattern);

    auto probe = [&](double& param, double analytic, int& checked, double& worst) {
        const double saved = param;
        std::vector<bool> p_plus, p_minus;
        param = saved + h;
        const long double lp = oracle::mlp_loss(net, batch.x, batch.y, &p_plus);
        param = saved - h;
        const long double lm = oracle::mlp_loss(net, batch.x, batch.y, &p_minus);
        param = saved;
        if (p_plus != base_pattern || p_minus != base_pattern)
            return; // finite difference straddles a ReLU kink
        const double fd = static_cast<double>((lp - lm) / (2.0L * h));
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(analytic - fd) / denom);
        ++checked;
    };

    for (std::size_t l = 0; l < net.layer_count(); ++l)
    {
        auto& layer = net.layers()[l];
        const double n = static_cast<double>(acts.batch_size);
        int checked = 0;
        double worst = 0.0;
        for (int t = 0; t < 150; ++t)
        {
            const std::size_t k = rng() % layer.weights.size();
            probe(layer.weights[k], grad.weights[l][k] / n, checked, worst);
        }
        for (std::size_t k = 0; k < layer.biases.size(); ++k)
            probe(layer.biases[k], grad.biases[l][k] / n, checked, worst);
        EXPECT_GE(checked, 100) << "layer " << l;
        EXPECT_LE(worst, 1e-4) << "layer " << l;
    }
}

TEST(Backward, ZeroInputZeroWeightsBiasGradient)
{
    BasicNetwork<double> net({3, 4});
    const std::vector<double> x(2 * 3, 0.0);
    const std::vector<int> y{1, 3};
    const auto g = backward(net, forward<double>(net, x, y));
    // softmax(0) = 1/4 everywhere; mean of (p - onehot).
    const std::vector<double> expected{0.25, 0.25 - 0.5, 0.25, 0.25 - 0.5};
    for (std::size_t j = 0; j < 4; ++j)
        EXPECT_NEAR(g.biases[0][j] / 2.0, expected[j], 1e-15);
    for (double w : g.weights[0])
        EXPECT_EQ(w, 0.0);
}

TEST(Backward, DeadUnitHasZeroIncomingGradient)
{
    std::mt19937_64 rng(5);
    BasicNetwork<double> net({4, 3, 2});
    init_normal(net, rng, 0.5);
    // Unit 1 of the hidden layer never activates.
    for (std::size_t i = 0; i < 4; ++i)
        net.layers()[0].weight(i, 1) = 0.0;
    net.layers()[0].biases[1] = -1.0;
    const auto b = random_batch(6, 4, 2, rng);
    const auto g = backward(net, forward<double>(net, b.x, b.y));
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(g.weights[0][i * 3 + 1], 0.0);
    EXPECT_EQ(g.biases[0][1], 0.0);
}

TEST(Backward, SumOfSplitsEqualsWholeBatchBitExactly)
{
    std::mt19937_64 rng(8);
    Network net({10, 8, 3});
    init_normal(net, rng, 0.1);
    const auto b = random_batch(16, 10, 3, rng);
    const std::vector<float> x(b.x.begin(), b.x.end());
    const auto whole = backward(net, forward<float>(net, x, b.y));
    for (std::size_t parts : {2u, 4u, 8u})
    {
        std::vector<GradientSet> pieces;
        const std::size_t per = 16 / parts;
        for (std::size_t p = 0; p < parts; ++p)
        {
            const std::span<const float> xs(x.data() + p * per * 10, per * 10);
            const std::span<const int> ys(b.y.data() + p * per, per);
            pieces.push_back(backward(net, forward<float>(net, xs, ys)));
        }
        const auto sum = reduce_pairwise<float>(pieces);
        EXPECT_EQ(sum.weights, whole.weights) << parts;
        EXPECT_EQ(sum.biases, whole.biases) << parts;
        EXPECT_EQ(sum.sample_count, 16u);
    }
}

TEST(Update, AveragesContributions)
{
    Network net = scalar_net(1.0f);
    SgdState state = SgdState::for_network(net);
    const std::vector<GradientSet> parts{scalar_grad(0.2f, 1), scalar_grad(0.4f, 1)};
    gather_and_update<float>(net, parts, plain_sgd(0.1), state);
    EXPECT_NEAR(net.layers()[0].weights[0], 0.97f, 1e-7);
}

TEST(Update, ZeroLearningRateLeavesNetworkUnchanged)
{
    std::mt19937_64 rng(1);
    Network net({5, 4, 2});
    init_normal(net, rng);
    const Network before = net;
    SgdState state = SgdState::for_network(net);
    auto g = GradientSet::zeros_like(net);
    g.sample_count = 3;
    for (auto& w : g.weights)
        for (auto& v : w)
            v = 0.5f;
    SgdConfig cfg;
    cfg.learning_rate = 0.0;
    gather_and_update<float>(net, std::vector<GradientSet>{g}, cfg, state);
    EXPECT_EQ(net, before);
}

TEST(Update, MomentumTwoStepTrace)
{
    // v1 = g1 = 1.0, w1 = 1 - 0.1 * 1.0 = 0.9
    // v2 = 0.9 * 1.0 + 0.5 = 1.4, w2 = 0.9 - 0.1 * 1.4 = 0.76
    Network net = scalar_net(1.0f);
    SgdState state = SgdState::for_network(net);
    auto cfg = plain_sgd(0.1);
    cfg.momentum = 0.9;
    gather_and_update<float>(net, std::vector<GradientSet>{scalar_grad(1.0f, 1)}, cfg, state);
    EXPECT_NEAR(state.weight_velocity[0][0], 1.0f, 1e-7);
    EXPECT_NEAR(net.layers()[0].weights[0], 0.9f, 1e-7);
    gather_and_update<float>(net, std::vector<GradientSet>{scalar_grad(0.5f, 1)}, cfg, state);
    EXPECT_NEAR(state.weight_velocity[0][0], 1.4f, 1e-6);
    EXPECT_NEAR(net.layers()[0].weights[0], 0.76f, 1e-6);
}

TEST(Update, WeightDecayAppliesToWeightsOnly)
{
    Network net = scalar_net(2.0f);
    net.layers()[0].biases[0] = 2.0f;
    SgdState state = SgdState::for_network(net);
    auto cfg = plain_sgd(0.5);
    cfg.weight_decay = 0.1;
    gather_and_update<float>(net, std::vector<GradientSet>{scalar_grad(0.0f, 1)}, cfg, state);
    EXPECT_NEAR(net.layers()[0].weights[0], 2.0f - 0.5f * 0.2f, 1e-6);
    EXPECT_EQ(net.layers()[0].biases[0], 2.0f);
}

TEST(Update, StepDecaySchedule)
{
    SgdConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.lr_decay_every = 30;
    EXPECT_EQ(cfg.learning_rate_at(29), 1.0);
    EXPECT_NEAR(cfg.learning_rate_at(30), 0.16, 1e-15);
    EXPECT_NEAR(cfg.learning_rate_at(65), 0.16 * 0.16, 1e-15);
}

TEST(Update, RejectsMismatchedShapesAndNonFinite)
{
    Network net({2, 2});
    SgdState state = SgdState::for_network(net);
    EXPECT_THROW(gather_and_update<float>(net, std::vector<GradientSet>{scalar_grad(1.0f, 1)}, plain_sgd(0.1), state),
                 ShapeMismatch);
    Network one = scalar_net(1.0f);
    SgdState s1 = SgdState::for_network(one);
    EXPECT_THROW(gather_and_update<float>(one, std::vector<GradientSet>{scalar_grad(INFINITY, 1)}, plain_sgd(0.1), s1),
                 std::runtime_error);
}

TEST(Config, Validation)
{
    SgdConfig c;
    EXPECT_NO_THROW(c.validate());
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
