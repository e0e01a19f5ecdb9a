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

#include "a2dtwp/awp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace a2dtwp::awp;

namespace {

AwpConfig small_config()
{
    AwpConfig c;
    c.threshold = -1e-3;
    c.interval = 3;
    c.step_bits = 8;
    c.initial_bits = 8;
    return c;
}

// Feeds a norm stream producing the given change rates after an initial 1.0.
std::vector<int> run_deltas(AwpController& ctl, const std::vector<double>& deltas)
{
    std::vector<int> bits;
    double norm = 1.0;
    ctl.observe_batch(0, norm);
    for (double d : deltas)
    {
        norm *= 1.0 + d;
        bits.push_back(ctl.observe_batch(0, norm));
    }
    return bits;
}

} // namespace

TEST(L2Norm, Examples)
{
    EXPECT_DOUBLE_EQ(l2_norm(std::vector<float>{3.0f, 4.0f}), 5.0);
    EXPECT_EQ(l2_norm(std::vector<float>{}), 0.0);
    const std::vector<float> tenths(1000, 0.1f);
    // Reference: sqrt(1000) * 0.1 using the float value of 0.1.
    const long double ref = std::sqrt(1000.0L) * static_cast<long double>(0.1f);
    EXPECT_NEAR(l2_norm(tenths), static_cast<double>(ref), 1e-9);
    EXPECT_NEAR(l2_norm(tenths), 3.16227766, 1e-6);
}

TEST(ChangeRate, Examples)
{
    EXPECT_NEAR(change_rate(0.99, 1.0), -0.01, 1e-15);
    EXPECT_EQ(change_rate(1.0, 1.0), 0.0);
    EXPECT_EQ(change_rate(5.0, 0.0), std::numeric_limits<double>::infinity());
    EXPECT_EQ(change_rate(0.0, 0.0), 0.0);
}

TEST(Controller, EscalatesAfterIntervalBelowThreshold)
{
    AwpController ctl(1, small_config());
    const auto bits = run_deltas(ctl, {-2e-3, -2e-3, -2e-3});
    EXPECT_EQ(bits, (std::vector<int>{8, 8, 16}));
    EXPECT_EQ(ctl.state(0).interval_counter, 0);
}

TEST(Controller, CounterIsCumulativeByDefault)
{
    AwpController ctl(1, small_config());
    const auto bits = run_deltas(ctl, {-2e-3, 0.5, -2e-3, -2e-3, -2e-3});
    EXPECT_EQ(bits, (std::vector<int>{8, 8, 8, 16, 16}));
}

TEST(Controller, ConsecutiveVariantClearsOnAboveThreshold)
{
    auto cfg = small_config();
    cfg.consecutive = true;
    AwpController ctl(1, cfg);
    const auto bits = run_deltas(ctl, {-2e-3, 0.5, -2e-3, -2e-3, -2e-3});
    EXPECT_EQ(bits, (std::vector<int>{8, 8, 8, 8, 16}));
}

TEST(Controller, FirstObservationSkipsTest)
{
    auto cfg = small_config();
    cfg.interval = 1;
    AwpController ctl(1, cfg);
    const auto first = ctl.observe(0, 0.0);
    EXPECT_FALSE(first.delta.has_value());
    EXPECT_EQ(first.bits, 8);
    EXPECT_EQ(first.counter, 0);
}

TEST(Controller, ClampsAtThirtyTwoAndKeepsResetting)
{
    auto cfg = small_config();
    cfg.initial_bits = 32;
    AwpController ctl(1, cfg);
    const auto bits = run_deltas(ctl, {-2e-3, -2e-3, -2e-3, -2e-3});
    EXPECT_EQ(bits, (std::vector<int>{32, 32, 32, 32}));
    EXPECT_EQ(ctl.state(0).interval_counter, 1);

    cfg.initial_bits = 30;
    AwpController odd(1, cfg);
    EXPECT_EQ(run_deltas(odd, {-2e-3, -2e-3, -2e-3}).back(), 32);
}

TEST(Controller, RoundToFollowsBits)
{
    auto cfg = small_config();
    cfg.initial_bits = 14;
    AwpController ctl(1, cfg);
    EXPECT_EQ(ctl.current_round_to(0).bytes(), 2);
    cfg.initial_bits = 8;
    EXPECT_EQ(AwpController(1, cfg).current_round_to(0).bytes(), 1);
    cfg.initial_bits = 32;
    EXPECT_EQ(AwpController(1, cfg).current_round_to(0).bytes(), 4);
}

TEST(Controller, UnknownLayerThrows)
{
    AwpController ctl(2, small_config());
    EXPECT_THROW(ctl.observe(2, 1.0), UnknownLayer);
    EXPECT_THROW(ctl.current_round_to(5), UnknownLayer);
    EXPECT_THROW(ctl.bits(2), UnknownLayer);
}

TEST(Controller, ZeroPreviousNormNeverCounts)
{
    auto cfg = small_config();
    cfg.interval = 1;
    cfg.threshold = 1e9;
    AwpController ctl(1, cfg);
    ctl.observe(0, 0.0);
    // +inf is not below any finite threshold.
    EXPECT_EQ(ctl.observe(0, 5.0).counter, 0);
}

TEST(Controller, LayersAreIndependent)
{
    AwpController ctl(3, small_config());
    for (int b = 0; b < 10; ++b)
        ctl.observe(1, std::pow(0.9, b));
    EXPECT_EQ(ctl.bits(0), 8);
    EXPECT_EQ(ctl.bits(2), 8);
    EXPECT_FALSE(ctl.state(0).prev_norm.has_value());
    EXPECT_GT(ctl.bits(1), 8);
}

TEST(Controller, MonotoneAndCadenceProperty)
{
    std::mt19937_64 rng(42);
    std::normal_distribution<double> step(-1e-3, 2e-3);
    for (int trial = 0; trial < 20; ++trial)
    {
        auto cfg = small_config();
        cfg.interval = 1 + static_cast<int>(rng() % 6);
        AwpController ctl(4, cfg);
        std::vector<double> norms(4, 1.0);
        std::vector<int> prev_bits(4, cfg.initial_bits);
        std::vector<int> below_since(4, 0);
        for (int b = 0; b < 300; ++b)
        {
            for (auto& n : norms)
                n = std::max(0.0, n * (1.0 + step(rng)));
            const auto obs = ctl.observe_all(norms);
            for (std::size_t l = 0; l < 4; ++l)
            {
                if (obs[l].delta && *obs[l].delta < cfg.threshold)
                    ++below_since[l];
                ASSERT_GE(obs[l].bits, prev_bits[l]);
                ASSERT_LE(obs[l].bits, kMaxBits);
                ASSERT_LT(obs[l].counter, cfg.interval);
                if (obs[l].bits != prev_bits[l])
                {
                    ASSERT_GE(below_since[l], cfg.interval);
                    below_since[l] = 0;
                }
                prev_bits[l] = obs[l].bits;
            }
        }
    }
}

TEST(Controller, GroupsShareOneState)
{
    auto cfg = small_config();
    AwpController ctl(4, cfg, {0, 0, 1, 1});
    EXPECT_EQ(ctl.group_count(), 2u);
    std::vector<double> norms{3.0, 4.0, 1.0, 1.0};
    const auto first = ctl.observe_all(norms);
    EXPECT_DOUBLE_EQ(first[0].norm, 5.0);
    EXPECT_DOUBLE_EQ(first[1].norm, 5.0);
    for (int b = 0; b < 3; ++b)
    {
        for (std::size_t l = 0; l < 2; ++l)
            norms[l] *= 0.99;
        ctl.observe_all(norms);
    }
    EXPECT_EQ(ctl.bits(0), 16);
    EXPECT_EQ(ctl.bits(1), 16);
    EXPECT_EQ(ctl.bits(2), 8);
    EXPECT_THROW(AwpController(3, cfg, {0, 2, 2}), std::invalid_argument);
    EXPECT_THROW(AwpController(3, cfg, {0, 1}), std::invalid_argument);
}

TEST(Config, Validation)
{
    AwpConfig c;
    EXPECT_NO_THROW(c.validate());
    c.interval = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.initial_bits = 33;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.threshold = std::nan("");
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trace, CsvFormat)
{
    std::vector<TraceRow> rows{{0, 1, 2.5, std::nullopt, 0, 8}, {1, 1, 2.0, -0.2, 1, 8}};
    std::ostringstream os;
    write_trace_csv(os, rows);
    EXPECT_EQ(os.str(), "batch,layer,norm,delta,counter,bits\n0,1,2.5,,0,8\n1,1,2,-0.2,1,8\n");
}

#include "oracles.hpp"

TEST(Controller, MatchesStepByStepReference)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        std::mt19937_64 rng(seed);
        AwpConfig cfg;
        cfg.threshold = -std::uniform_real_distribution<double>(1e-4, 5e-3)(rng);
        cfg.interval = 1 + static_cast<int>(rng() % 20);
        cfg.step_bits = 8;
        cfg.initial_bits = 8;
        const std::size_t layers = 5;
        AwpController ctl(layers, cfg);
        oracle::AwpOracle ref(layers, cfg.threshold, cfg.interval, cfg.step_bits, cfg.initial_bits);
        std::normal_distribution<double> rate(-1e-3, 3e-3);
        std::vector<double> norms(layers);
        for (auto& n : norms)
            n = std::uniform_real_distribution<double>(0.5, 5.0)(rng);
        for (int b = 0; b < 200; ++b)
        {
            for (std::size_t l = 0; l < layers; ++l)
            {
                norms[l] = rng() % 97 == 0 ? 0.0 : std::max(0.0, norms[l] * (1.0 + rate(rng)));
                const auto got = ctl.observe(l, norms[l]);
                const auto want = ref.step(l, norms[l]);
                ASSERT_EQ(got.delta.has_value(), want.has_delta);
                if (want.has_delta)
                {
                    ASSERT_EQ(*got.delta, want.delta);
                }
                ASSERT_EQ(got.counter, want.counter) << "seed " << seed << " batch " << b << " layer " << l;
                ASSERT_EQ(got.bits, want.bits);
            }
        }
    }
}
