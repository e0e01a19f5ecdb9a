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

#include "a2dtwp/config.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace a2dtwp;

namespace {

RunConfig parse(const std::string& text)
{
    std::istringstream is(text);
    return parse_run_config(is, "t.ini");
}

std::string error_of(const std::string& text)
{
    try
    {
        parse(text);
    }
    catch (const ConfigError& e)
    {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, DefaultsRoundTripThroughPrintedForm)
{
    RunConfig defaults;
    defaults.seed = 5;
    const RunConfig back = parse(format_run_config(defaults));
    EXPECT_EQ(format_run_config(back), format_run_config(defaults));
    EXPECT_EQ(back.mode, Mode::a2dtwp);
    EXPECT_EQ(back.hidden, (std::vector<std::size_t>{128, 64}));
    EXPECT_EQ(back.awp.threshold, -2e-3);
    EXPECT_EQ(back.awp.interval, 50);
    EXPECT_EQ(back.awp.initial_bits, 8);
    EXPECT_EQ(back.sgd.momentum, 0.9);
    EXPECT_EQ(back.sgd.weight_decay, 5e-4);
    EXPECT_EQ(back.blobs.samples, 10000u);
    EXPECT_EQ(back.blobs.classes, 4u);
}

TEST(Config, ParsesEverySection)
{
    const auto c = parse(R"(
# comment
[run]
mode = oracle_fixed_bits
fixed_bits = 14
seed = 9
epochs = 3
workers = 4
pack_path = parallel
pack_threads = 2
[data]
samples = 100   ; trailing comment
classes = 3
features = 7
[net]
hidden = 5,4
[sgd]
learning_rate = 0.05
momentum = 0
batch_size = 16
[awp]
threshold = -1e-3
interval = 3
consecutive = true
groups = 0,0,1
[link]
bandwidth = 1e9
latency = 1e-6
[output]
dir = out/x
measured_times = yes
)");
    EXPECT_EQ(c.mode, Mode::oracle_fixed_bits);
    EXPECT_EQ(c.fixed_bits, 14);
    EXPECT_EQ(c.seed, std::optional<std::uint64_t>(9));
    EXPECT_EQ(c.workers, 4u);
    EXPECT_EQ(c.pack_path, PackPath::parallel);
    EXPECT_EQ(c.blobs.samples, 100u);
    EXPECT_EQ(c.blobs.features, 7u);
    EXPECT_EQ(c.hidden, (std::vector<std::size_t>{5, 4}));
    EXPECT_EQ(c.sgd.batch_size, 16u);
    EXPECT_TRUE(c.awp.consecutive);
    EXPECT_EQ(c.awp_groups, (std::vector<std::size_t>{0, 0, 1}));
    EXPECT_EQ(c.link.bandwidth, 1e9);
    EXPECT_EQ(c.output_dir, "out/x");
    EXPECT_TRUE(c.measured_times);
}

TEST(Config, DiagnosticsNameFileLineAndField)
{
    const auto e = error_of("[run]\nmode = fast\n");
    EXPECT_NE(e.find("t.ini:2"), std::string::npos) << e;
    EXPECT_NE(e.find("run.mode"), std::string::npos) << e;

    EXPECT_NE(error_of("[run]\nepochs = -1\n").find("run.epochs"), std::string::npos);
    EXPECT_NE(error_of("[sgd]\nmomentum = 1.5\n").find("sgd.momentum"), std::string::npos);
    EXPECT_NE(error_of("[run]\nbogus = 1\n").find("bogus"), std::string::npos);
    EXPECT_NE(error_of("[nowhere]\n").find("t.ini:1"), std::string::npos);
    EXPECT_NE(error_of("mode = a2dtwp\n").find("section"), std::string::npos);
    EXPECT_NE(error_of("[run]\nseed = 1\nseed = 2\n").find("already set"), std::string::npos);
    EXPECT_NE(error_of("[run]\nfixed_bits = 40\n").find("run.fixed_bits"), std::string::npos);
    EXPECT_NE(error_of("[link]\nbandwidth = 0\n").find("link.bandwidth"), std::string::npos);
    EXPECT_NE(error_of("[run]\nworkers\n").find("key = value"), std::string::npos);
}
