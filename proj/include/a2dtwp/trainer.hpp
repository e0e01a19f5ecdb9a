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

#pragma once

// Data-parallel training loop with simulated workers.
//
// Per batch:
//   1. every layer's master weights are packed at the layer's current RoundTo,
//      sent across the boundary to each worker and unpacked into that worker's
//      replica; biases travel uncompressed;
//   2. the batch is split into contiguous equal slices, one per worker, and
//      each worker computes gradients on its (truncated) replica;
//   3. gradients return to the host uncompressed and are gathered into the
//      full-precision master weights;
//   4. the precision controller observes each layer's master-weight norm.
// Master weights are never truncated; only replicas see the codec.

#include "a2dtwp/awp.hpp"
#include "a2dtwp/codec.hpp"
#include "a2dtwp/dataset.hpp"
#include "a2dtwp/nn.hpp"
#include "a2dtwp/profile.hpp"
#include "a2dtwp/transfer.hpp"

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {

enum class Mode
{
    baseline,          // uncompressed 32-bit transfers, no codec
    oracle_fixed_bits, // every layer pinned to one width through the codec
    a2dtwp,            // widths chosen per layer by the controller
};

enum class PackPath
{
    scalar,
    vectorized,
    parallel,
};

struct TrainerOptions
{
    Mode mode = Mode::a2dtwp;
    int fixed_bits = 32;
    std::size_t workers = 1;
    PackPath pack_path = PackPath::vectorized;
    int pack_threads = 1;
    nn::SgdConfig sgd;
    awp::AwpConfig awp;
    std::vector<std::size_t> awp_groups;
    transfer::LinkModel link;

    void validate() const
    {
        if (workers < 1)
            throw std::invalid_argument("workers must be >= 1");
        if (pack_threads < 1)
            throw std::invalid_argument("pack_threads must be >= 1");
        if (mode == Mode::oracle_fixed_bits && (fixed_bits < 1 || fixed_bits > 32))
            throw std::invalid_argument("fixed_bits must be in 1..32");
        sgd.validate();
        awp.validate();
        link.validate();
    }
};

struct EpochStats
{
    std::size_t epoch = 0;
    std::size_t batches_done = 0; // cumulative over the run
    std::vector<double> batch_losses;
    double mean_loss = 0.0;
    double val_top1 = 0.0;
    std::uint64_t bytes_sent = 0; // wire bytes this epoch, both directions
    double codec_seconds = 0.0;   // measured pack + unpack this epoch
};

/// Fraction of `data` whose arg-max prediction matches the label.
inline double evaluate_top1(const nn::Network& net, const Dataset& data, std::size_t chunk = 256)
{
    if (data.size() == 0)
        return 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += chunk)
    {
        const std::size_t n = std::min(chunk, data.size() - begin);
        const auto predicted = nn::predict(net, data.rows(begin, n), n);
        for (std::size_t s = 0; s < n; ++s)
            correct += predicted[s] == data.labels[begin + s] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

class Trainer
{
    using clock = std::chrono::steady_clock;

    static double since(clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); }

  public:
    Trainer(nn::Network initial, TrainerOptions options) : options_(std::move(options)), master_(std::move(initial))
    {
        options_.validate();
        if (master_.layer_count() == 0)
            throw nn::ShapeMismatch("network has no layers");
        replicas_.assign(options_.workers, master_);
        sgd_state_ = nn::SgdState::for_network(master_);
        if (options_.mode == Mode::a2dtwp)
        {
            awp_.emplace(master_.layer_count(), options_.awp, options_.awp_groups);
            phases_.enable(Phase::awp_norm);
        }
        if (options_.mode != Mode::baseline)
        {
            phases_.enable(Phase::adt_pack);
            phases_.enable(Phase::adt_unpack);
        }
        for (Phase p : {Phase::transfer_to_worker, Phase::transfer_to_host, Phase::forward, Phase::backward,
                        Phase::update})
            phases_.enable(p);
    }

    const TrainerOptions& options() const noexcept { return options_; }
    const nn::Network& master() const noexcept { return master_; }
    const nn::Network& replica(std::size_t worker) const { return replicas_.at(worker); }
    const transfer::TransferLedger& ledger() const noexcept { return ledger_; }
    const std::vector<awp::TraceRow>& trace() const noexcept { return trace_; }
    const PhaseTimes& phases() const noexcept { return phases_; }
    const std::optional<awp::AwpController>& controller() const noexcept { return awp_; }
    std::size_t batches_done() const noexcept { return batch_; }

    codec::RoundTo round_to_for(std::size_t layer) const
    {
        switch (options_.mode)
        {
        case Mode::baseline:
            return codec::RoundTo(4);
        case Mode::oracle_fixed_bits:
            return codec::bits_to_round_to(options_.fixed_bits);
        case Mode::a2dtwp:
            break;
        }
        return awp_->current_round_to(layer);
    }

    /// One pass over `train` in order, batch_size samples at a time.
    EpochStats train_epoch(const Dataset& train, const Dataset& validation)
    {
        if (train.feature_count != master_.input_width())
            throw nn::ShapeMismatch("dataset has " + std::to_string(train.feature_count) +
                                    " features, network expects " + std::to_string(master_.input_width()));
        EpochStats stats;
        stats.epoch = epoch_++;
        const std::size_t bs = options_.sgd.batch_size;
        const std::uint64_t wire_before = ledger_.total_wire_bytes();
        const double codec_before = codec_seconds();

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < train.size(); begin += bs)
        {
            const std::size_t n = std::min(bs, train.size() - begin);
            const double loss = train_batch(train, begin, n);
            stats.batch_losses.push_back(loss);
            loss_sum += loss;
        }
        stats.batches_done = batch_;
        stats.mean_loss = stats.batch_losses.empty() ? 0.0 : loss_sum / static_cast<double>(stats.batch_losses.size());
        stats.val_top1 = evaluate_top1(master_, validation);
        stats.bytes_sent = ledger_.total_wire_bytes() - wire_before;
        stats.codec_seconds = codec_seconds() - codec_before;
        return stats;
    }

    /// Runs one batch of `count` samples starting at `begin`; returns its mean loss.
    double train_batch(const Dataset& data, std::size_t begin, std::size_t count)
    {
        const auto batch_start = clock::now();
        deliver_parameters();

        // Worker slices: contiguous, equal, in worker order.
        const std::size_t workers = options_.workers;
        std::vector<nn::GradientSet> contributions;
        contributions.reserve(workers);
        double loss_sum = 0.0;
        for (std::size_t w = 0; w < workers; ++w)
        {
            const std::size_t lo = begin + count * w / workers;
            const std::size_t hi = begin + count * (w + 1) / workers;
            if (hi == lo)
                continue;
            auto t0 = clock::now();
            const auto acts = nn::forward<float>(replicas_[w], data.rows(lo, hi - lo), data.label_rows(lo, hi - lo));
            phases_.add(Phase::forward, since(t0));
            loss_sum += acts.loss * static_cast<double>(hi - lo);

            t0 = clock::now();
            contributions.push_back(nn::backward(replicas_[w], acts));
            phases_.add(Phase::backward, since(t0));

            t0 = clock::now();
            const auto rec = transfer::send_raw(contributions.back().byte_size(), transfer::Direction::to_host,
                                                std::nullopt, options_.link, ledger_, batch_);
            phases_.add(Phase::transfer_to_host, since(t0) + rec.link_seconds);
            phases_.modeled_link += rec.link_seconds;
        }

        auto t0 = clock::now();
        nn::gather_and_update<float>(master_, contributions, options_.sgd, sgd_state_);
        phases_.add(Phase::update, since(t0));

        if (awp_)
        {
            t0 = clock::now();
            std::vector<double> norms(master_.layer_count());
            for (std::size_t l = 0; l < norms.size(); ++l)
                norms[l] = awp::l2_norm(master_.layers()[l].weights);
            const auto observations = awp_->observe_all(norms);
            for (std::size_t l = 0; l < observations.size(); ++l)
            {
                const auto& o = observations[l];
                trace_.push_back({batch_, l, o.norm, o.delta, o.counter, o.bits});
            }
            phases_.add(Phase::awp_norm, since(t0));
        }

        ++batch_;
        ++phases_.batches;
        phases_.batch_loop_wall += since(batch_start);
        return loss_sum / static_cast<double>(count);
    }

  private:
    double codec_seconds() const
    {
        return phases_.get(Phase::adt_pack).value_or(0.0) + phases_.get(Phase::adt_unpack).value_or(0.0);
    }

    codec::PackedBlock pack_layer(std::span<const float> weights, codec::RoundTo r) const
    {
        switch (options_.pack_path)
        {
        case PackPath::scalar:
            return codec::pack(weights, r);
        case PackPath::vectorized:
            return codec::pack_vectorized(weights, r);
        case PackPath::parallel:
            break;
        }
        return codec::pack_parallel(weights, r, options_.pack_threads);
    }

    // The only path from master weights to worker replicas.
    void deliver_parameters()
    {
        for (std::size_t l = 0; l < master_.layer_count(); ++l)
        {
            const auto& src = master_.layers()[l].weights;
            if (options_.mode == Mode::baseline)
            {
                for (auto& replica : replicas_)
                {
                    const auto t0 = clock::now();
                    replica.layers()[l].weights = src;
                    const auto rec = transfer::send_raw(src.size() * sizeof(float), transfer::Direction::to_worker,
                                                        l, options_.link, ledger_, batch_);
                    phases_.add(Phase::transfer_to_worker, since(t0) + rec.link_seconds);
                    phases_.modeled_link += rec.link_seconds;
                }
                continue;
            }

            const codec::RoundTo r = round_to_for(l);
            auto t0 = clock::now();
            const codec::PackedBlock block = pack_layer(src, r);
            const double pack_s = since(t0);
            phases_.add(Phase::adt_pack, pack_s);

            for (std::size_t w = 0; w < replicas_.size(); ++w)
            {
                t0 = clock::now();
                const codec::PackedBlock received = block;
                const double send_s = since(t0);

                t0 = clock::now();
                codec::unpack_into(received, replicas_[w].layers()[l].weights);
                const double unpack_s = since(t0);
                phases_.add(Phase::adt_unpack, unpack_s);

                t0 = clock::now();
                const auto record = transfer::weight_record(received, options_.link,
                                                            {batch_, l, w == 0 ? pack_s : 0.0, unpack_s});
                ledger_.append(record);
                phases_.add(Phase::transfer_to_worker, send_s + since(t0) + record.link_seconds);
                phases_.modeled_link += record.link_seconds;
            }
        }

        std::uint64_t bias_bytes = 0;
        for (const auto& layer : master_.layers())
            bias_bytes += layer.biases.size() * sizeof(float);
        for (auto& replica : replicas_)
        {
            const auto t0 = clock::now();
            for (std::size_t l = 0; l < master_.layer_count(); ++l)
                replica.layers()[l].biases = master_.layers()[l].biases;
            const auto rec = transfer::send_raw(bias_bytes, transfer::Direction::to_worker, std::nullopt,
                                                options_.link, ledger_, batch_);
            phases_.add(Phase::transfer_to_worker, since(t0) + rec.link_seconds);
            phases_.modeled_link += rec.link_seconds;
        }
    }

    TrainerOptions options_;
    nn::Network master_;
    std::vector<nn::Network> replicas_;
    nn::SgdState sgd_state_;
    std::optional<awp::AwpController> awp_;
    transfer::TransferLedger ledger_;
    std::vector<awp::TraceRow> trace_;
    PhaseTimes phases_;
    std::size_t batch_ = 0;
    std::size_t epoch_ = 0;
};

} // namespace a2dtwp
