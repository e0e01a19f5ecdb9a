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

#include "a2dtwp/run.hpp"
#include "a2dtwp/trainer.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace a2dtwp;

namespace {

Dataset small_blobs(std::size_t samples, std::uint64_t seed)
{
    BlobSpec spec;
    spec.samples = samples;
    spec.classes = 3;
    spec.features = 20;
    spec.center_scale = 0.5;
    spec.noise = 0.8;
    return make_gaussian_blobs(spec, seed);
}

nn::Network small_net(std::uint64_t seed)
{
    nn::Network net({20, 16, 8, 3});
    std::mt19937_64 rng(seed);
    nn::init_normal(net, rng, 0.05);
    return net;
}

TrainerOptions options(Mode mode, std::size_t workers = 1)
{
    TrainerOptions o;
    o.mode = mode;
    o.workers = workers;
    o.sgd.batch_size = 32;
    o.sgd.learning_rate = 0.05;
    return o;
}

// Training with no transfer boundary and no codec.
nn::Network plain_loop(nn::Network net, const Dataset& train, const nn::SgdConfig& cfg, int epochs)
{
    auto state = nn::SgdState::for_network(net);
    for (int e = 0; e < epochs; ++e)
        for (std::size_t b = 0; b < train.size(); b += cfg.batch_size)
        {
            const std::size_t n = std::min(cfg.batch_size, train.size() - b);
            const auto acts = nn::forward<float>(net, train.rows(b, n), train.label_rows(b, n));
            const std::vector<nn::GradientSet> g{nn::backward(net, acts)};
            nn::gather_and_update<float>(net, g, cfg, state);
        }
    return net;
}

} // namespace

TEST(Trainer, FullWidthPipelineEqualsPlainLoop)
{
    const auto data = small_blobs(512, 1);
    const auto init = small_net(2);
    auto opt = options(Mode::oracle_fixed_bits);
    opt.fixed_bits = 32;
    Trainer trainer(init, opt);
    for (int e = 0; e < 3; ++e)
        trainer.train_epoch(data, data);
    EXPECT_EQ(trainer.master(), plain_loop(init, data, opt.sgd, 3));
}

TEST(Trainer, WorkerCountInvarianceWithLosslessCodec)
{
    const auto data = small_blobs(512, 3);
    const auto init = small_net(4);
    auto opt = options(Mode::oracle_fixed_bits);
    Trainer one(init, opt);
    one.train_epoch(data, data);
    for (std::size_t d : {2u, 4u})
    {
        opt.workers = d;
        Trainer many(init, opt);
        many.train_epoch(data, data);
        EXPECT_EQ(many.master(), one.master()) << "D=" << d;
    }
}

TEST(Trainer, WorkerCountInvarianceHoldsForTruncatedReplicasToo)
{
    const auto data = small_blobs(256, 5);
    const auto init = small_net(6);
    auto opt = options(Mode::oracle_fixed_bits);
    opt.fixed_bits = 16;
    Trainer one(init, opt);
    one.train_epoch(data, data);
    opt.workers = 4;
    Trainer four(init, opt);
    four.train_epoch(data, data);
    EXPECT_EQ(four.master(), one.master());
}

TEST(Trainer, BaselineEqualsFixedThirtyTwoBits)
{
    const auto data = small_blobs(256, 7);
    const auto init = small_net(8);
    Trainer base(init, options(Mode::baseline));
    auto opt = options(Mode::oracle_fixed_bits);
    opt.fixed_bits = 32;
    Trainer fixed(init, opt);
    for (int e = 0; e < 2; ++e)
    {
        const auto a = base.train_epoch(data, data);
        const auto b = fixed.train_epoch(data, data);
        EXPECT_EQ(a.batch_losses, b.batch_losses);
        EXPECT_EQ(a.val_top1, b.val_top1);
    }
    EXPECT_EQ(base.master(), fixed.master());
}

TEST(Trainer, ReplicasSeeTruncatedWeightsMasterStaysFull)
{
    const auto data = small_blobs(64, 9);
    auto opt = options(Mode::oracle_fixed_bits);
    opt.fixed_bits = 8;
    opt.workers = 2;
    Trainer t(small_net(10), opt);
    t.train_batch(data, 0, 32);
    // Replicas hold the weights delivered at the start of the batch.
    const auto init = small_net(10);
    for (std::size_t w = 0; w < 2; ++w)
        for (std::size_t l = 0; l < init.layer_count(); ++l)
        {
            const auto& src = init.layers()[l].weights;
            const auto& got = t.replica(w).layers()[l].weights;
            for (std::size_t k = 0; k < src.size(); ++k)
                ASSERT_EQ(std::bit_cast<std::uint32_t>(got[k]), std::bit_cast<std::uint32_t>(src[k]) & 0xFF000000u);
        }
    // The master took a full-precision update, so it is not byte-truncated.
    bool any_low_bits = false;
    for (float w : t.master().layers()[0].weights)
        any_low_bits |= (std::bit_cast<std::uint32_t>(w) & 0x00FFFFFFu) != 0;
    EXPECT_TRUE(any_low_bits);
}

TEST(Trainer, LedgerAccountsEveryTransfer)
{
    const auto data = small_blobs(128, 11);
    auto opt = options(Mode::a2dtwp, 2);
    opt.awp.interval = 2;
    opt.awp.threshold = 10.0; // every batch counts as below threshold
    Trainer t(small_net(12), opt);
    t.train_epoch(data, data);

    const auto records = t.ledger().snapshot();
    const std::size_t batches = 128 / 32;
    const std::size_t layers = 3;
    // Per batch and worker: one record per layer, one for biases, one for gradients.
    EXPECT_EQ(records.size(), batches * 2 * (layers + 2));
    for (const auto& r : records)
    {
        if (!r.is_weight_transfer())
            continue;
        const auto& trace = t.trace();
        // Bits in force for batch b were set by the observation of batch b-1.
        int bits = opt.awp.initial_bits;
        for (const auto& row : trace)
            if (row.layer == *r.layer && row.batch + 1 == r.batch)
                bits = row.bits;
        const std::size_t n = r.raw_bytes / 4;
        EXPECT_EQ(r.wire_bytes, codec::kContainerHeaderSize + n * static_cast<std::size_t>(codec::bits_to_round_to(bits).bytes()));
    }

    std::ostringstream os;
    transfer::write_ledger_csv(os, records);
    EXPECT_EQ(oracle::replay_ledger_csv(os.str()).all_wire, t.ledger().total_wire_bytes());

    // Controller escalated: interval 2 over 4 batches (first one has no delta).
    for (std::size_t l = 0; l < layers; ++l)
        EXPECT_EQ(t.controller()->bits(l), 16);
}

TEST(Trainer, TraceBitsNonDecreasingPerLayer)
{
    const auto data = small_blobs(512, 13);
    auto opt = options(Mode::a2dtwp);
    opt.awp.interval = 3;
    opt.awp.threshold = -1e-4;
    Trainer t(small_net(14), opt);
    for (int e = 0; e < 2; ++e)
        t.train_epoch(data, data);
    std::vector<int> last(3, 0);
    for (const auto& row : t.trace())
    {
        EXPECT_GE(row.bits, last[row.layer]);
        last[row.layer] = row.bits;
    }
}

TEST(Trainer, PhasesPresentByMode)
{
    const auto data = small_blobs(64, 15);
    Trainer base(small_net(1), options(Mode::baseline));
    base.train_epoch(data, data);
    EXPECT_FALSE(base.phases().get(Phase::adt_pack));
    EXPECT_FALSE(base.phases().get(Phase::awp_norm));
    Trainer adaptive(small_net(1), options(Mode::a2dtwp));
    adaptive.train_epoch(data, data);
    for (std::size_t p = 0; p < kPhaseCount; ++p)
        EXPECT_TRUE(adaptive.phases().seconds[p]) << kPhaseKeys[p];
    EXPECT_EQ(adaptive.phases().batches, 2u);
}

TEST(Trainer, RejectsBadOptions)
{
    auto opt = options(Mode::oracle_fixed_bits);
    opt.fixed_bits = 0;
    EXPECT_THROW(Trainer(small_net(1), opt), std::invalid_argument);
    opt = options(Mode::a2dtwp, 0);
    EXPECT_THROW(Trainer(small_net(1), opt), std::invalid_argument);
    Trainer ok(small_net(1), options(Mode::a2dtwp));
    BlobSpec wrong;
    wrong.samples = 10;
    wrong.features = 5;
    EXPECT_THROW(ok.train_epoch(make_gaussian_blobs(wrong, 1), make_gaussian_blobs(wrong, 1)), nn::ShapeMismatch);
}

TEST(Dataset, BlobsAreSeededAndBinaryRoundTrips)
{
    const auto a = small_blobs(50, 1);
    const auto b = small_blobs(50, 1);
    const auto c = small_blobs(50, 2);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.features, c.features);
    const auto path = std::filesystem::temp_directory_path() / "a2dtwp_ds_test.bin";
    save_dataset_binary(a, path.string());
    const auto back = load_dataset(path.string());
    EXPECT_EQ(back.features, a.features);
    EXPECT_EQ(back.labels, a.labels);
    EXPECT_EQ(back.class_count, a.class_count);
    std::filesystem::remove(path);
}
