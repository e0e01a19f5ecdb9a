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

// End-to-end experiment: build data and network from a RunConfig, train for
// the configured epochs, and write the run directory:
//
//   metrics.csv    epoch,batch,loss,val_top1,bytes_sent,codec_ms
//   awp_trace.csv  batch,layer,norm,delta,counter,bits
//   ledger.csv     batch,direction,layer,raw_bytes,wire_bytes,pack_s,unpack_s,link_s
//   phases.csv     measured per-phase seconds (wall-clock, not reproducible)
//   profile.txt / profile.json   single-run phase table
//   config.ini     the effective configuration

#include "a2dtwp/config.hpp"
#include "a2dtwp/dataset.hpp"
#include "a2dtwp/nn.hpp"
#include "a2dtwp/profile.hpp"
#include "a2dtwp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {

struct PreparedData
{
    Dataset train;
    Dataset validation;
};

inline PreparedData prepare_data(const RunConfig& cfg, std::uint64_t seed)
{
    Dataset all = cfg.dataset == "synthetic" ? make_gaussian_blobs(cfg.blobs, seed) : load_dataset(cfg.dataset);
    if (all.size() < 2)
        throw ConfigError("dataset needs at least 2 samples");
    auto val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(all.size())));
    val = std::clamp<std::size_t>(val, 1, all.size() - 1);
    PreparedData out;
    out.train = all.slice(0, all.size() - val);
    out.validation = all.slice(all.size() - val, val);
    return out;
}

inline nn::Network initial_network(const RunConfig& cfg, std::size_t features, std::size_t classes,
                                   std::uint64_t seed)
{
    std::vector<std::size_t> widths{features};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(classes);
    nn::Network net(widths);
    std::seed_seq seq{seed, std::uint64_t{0x1f2e3d4c}};
    std::mt19937_64 rng(seq);
    nn::init_normal(net, rng, cfg.init_variance);
    return net;
}

inline TrainerOptions trainer_options(const RunConfig& cfg)
{
    TrainerOptions o;
    o.mode = cfg.mode;
    o.fixed_bits = cfg.fixed_bits;
    o.workers = cfg.workers;
    o.pack_path = cfg.pack_path;
    o.pack_threads = cfg.pack_threads;
    o.sgd = cfg.sgd;
    o.awp = cfg.awp;
    o.awp_groups = cfg.awp_groups;
    o.link = cfg.link;
    return o;
}

struct RunResult
{
    std::vector<EpochStats> epochs;
    std::vector<transfer::TransferRecord> records;
    std::vector<awp::TraceRow> trace;
    PhaseTimes phases;
    nn::Network final_network;
    std::vector<int> final_bits; // per layer; 32 outside adaptive mode unless pinned

    double final_val_top1() const { return epochs.empty() ? 0.0 : epochs.back().val_top1; }
};

inline RunResult run_training(const RunConfig& cfg)
{
    if (!cfg.seed)
        throw ConfigError("a seed is required (set run.seed or pass --seed)");
    const std::uint64_t seed = *cfg.seed;
    const PreparedData data = prepare_data(cfg, seed);
    Trainer trainer(initial_network(cfg, data.train.feature_count, data.train.class_count, seed),
                    trainer_options(cfg));
    RunResult result;
    for (std::size_t e = 0; e < cfg.epochs; ++e)
        result.epochs.push_back(trainer.train_epoch(data.train, data.validation));
    result.records = trainer.ledger().snapshot();
    result.trace = trainer.trace();
    result.phases = trainer.phases();
    result.final_network = trainer.master();
    for (std::size_t l = 0; l < trainer.master().layer_count(); ++l)
        result.final_bits.push_back(trainer.round_to_for(l).bits());
    if (trainer.controller())
        for (std::size_t l = 0; l < result.final_bits.size(); ++l)
            result.final_bits[l] = trainer.controller()->bits(l);
    return result;
}

inline constexpr const char* kMetricsHeader = "epoch,batch,loss,val_top1,bytes_sent,codec_ms";

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochStats>& epochs, bool measured_times)
{
    os << kMetricsHeader << '\n';
    for (const auto& e : epochs)
        os << e.epoch << ',' << e.batches_done << ',' << detail::format_double(e.mean_loss) << ','
           << detail::format_double(e.val_top1) << ',' << e.bytes_sent << ','
           << detail::format_double(measured_times ? e.codec_seconds * 1e3 : 0.0) << '\n';
}

namespace detail {

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    fn(out);
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

} // namespace detail

inline void write_run_outputs(const RunConfig& cfg, const RunResult& result, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "metrics.csv",
                       [&](std::ostream& os) { write_metrics_csv(os, result.epochs, cfg.measured_times); });
    detail::write_file(dir / "awp_trace.csv", [&](std::ostream& os) { awp::write_trace_csv(os, result.trace); });
    detail::write_file(dir / "ledger.csv",
                       [&](std::ostream& os) { transfer::write_ledger_csv(os, result.records, cfg.measured_times); });
    detail::write_file(dir / "phases.csv", [&](std::ostream& os) { write_phases_csv(os, result.phases); });
    detail::write_file(dir / "config.ini", [&](std::ostream& os) { os << format_run_config(cfg); });

    RunProfile profile{to_string(cfg.mode), result.records, result.phases, std::nullopt, {}};
    if (!result.epochs.empty())
        profile.final_val_top1 = result.final_val_top1();
    if (cfg.mode == Mode::a2dtwp)
        profile.final_bits = result.final_bits;
    const auto report = profile_report(profile);
    detail::write_file(dir / "profile.txt", [&](std::ostream& os) { os << format_report(report); });
    detail::write_file(dir / "profile.json", [&](std::ostream& os) { os << report_to_json(report).dump(2) << '\n'; });
}

namespace detail {

// Last val_top1 in metrics.csv, if the file exists and has rows.
inline std::optional<double> read_final_top1(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    std::string line;
    std::optional<double> last;
    std::getline(in, line);
    while (std::getline(in, line))
    {
        const auto cells = split(trim(line), ',');
        if (cells.size() == 6)
            last = std::stod(std::string(cells[3]));
    }
    return last;
}

// Bits column of the final batch in awp_trace.csv, one entry per layer.
inline std::vector<int> read_final_bits(const std::filesystem::path& path)
{
    std::ifstream in(path);
    std::vector<int> bits;
    if (!in)
        return bits;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
    {
        const auto cells = split(trim(line), ',');
        if (cells.size() != 6)
            continue;
        const auto layer = static_cast<std::size_t>(std::stoull(std::string(cells[1])));
        if (layer >= bits.size())
            bits.resize(layer + 1, 0);
        bits[layer] = std::stoi(std::string(cells[5]));
    }
    return bits;
}

} // namespace detail

/// Loads ledger.csv and phases.csv back from a run directory, plus the final
/// accuracy and widths when metrics.csv / awp_trace.csv are present.
inline RunProfile load_run_profile(const std::filesystem::path& dir, std::string label)
{
    std::ifstream ledger(dir / "ledger.csv");
    if (!ledger)
        throw std::runtime_error("missing " + (dir / "ledger.csv").string());
    std::ifstream phases(dir / "phases.csv");
    if (!phases)
        throw std::runtime_error("missing " + (dir / "phases.csv").string());
    RunProfile p;
    p.label = std::move(label);
    p.records = transfer::read_ledger_csv(ledger);
    p.times = read_phases_csv(phases);
    p.final_val_top1 = detail::read_final_top1(dir / "metrics.csv");
    p.final_bits = detail::read_final_bits(dir / "awp_trace.csv");
    return p;
}

} // namespace a2dtwp
