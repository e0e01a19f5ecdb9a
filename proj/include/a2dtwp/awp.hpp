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

// Adaptive per-layer weight precision.
//
// After every batch the controller compares each layer's weight l2-norm with
// the value seen on the previous batch. Each time the relative change falls
// below the threshold the layer's counter ticks; when the counter reaches the
// configured interval the layer gains `step_bits` bits (clamped at 32) and the
// counter restarts. Precision never decreases.

#include "a2dtwp/codec.hpp"
#include "a2dtwp/detail/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {
namespace awp {

inline constexpr int kMaxBits = 32;

struct AwpConfig
{
    double threshold = -2e-3; // relative change rate; negative means "norm shrinking"
    int interval = 50;        // below-threshold batches per escalation
    int step_bits = 8;
    int initial_bits = 8;
    bool consecutive = false; // when set, an above-threshold batch clears the counter

    void validate() const
    {
        if (!std::isfinite(threshold))
            throw std::invalid_argument("awp threshold must be finite");
        if (interval < 1)
            throw std::invalid_argument("awp interval must be >= 1");
        if (step_bits < 1)
            throw std::invalid_argument("awp step must be >= 1 bit");
        if (initial_bits < 1 || initial_bits > kMaxBits)
            throw std::invalid_argument("awp initial_bits must be in 1..32");
    }
};

struct LayerPrecisionState
{
    int bits = 8;
    int interval_counter = 0;
    std::optional<double> prev_norm;
};

class UnknownLayer : public std::out_of_range
{
  public:
    UnknownLayer(std::size_t layer, std::size_t count)
        : std::out_of_range("layer " + std::to_string(layer) + " out of range (controller has " +
                            std::to_string(count) + ")")
    {
    }
};

/// sqrt(sum w^2), accumulated in double.
inline double l2_norm(std::span<const float> weights) noexcept
{
    double sum = 0.0;
    for (float w : weights)
        sum += static_cast<double>(w) * static_cast<double>(w);
    return std::sqrt(sum);
}

/// (curr - prev) / prev. A zero previous norm yields 0 when nothing changed
/// and +inf otherwise, so it never counts as below a finite threshold.
inline double change_rate(double curr_norm, double prev_norm) noexcept
{
    if (prev_norm > 0.0)
        return (curr_norm - prev_norm) / prev_norm;
    return curr_norm == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

struct Observation
{
    double norm = 0.0;
    std::optional<double> delta; // empty on a state's first observation
    int counter = 0;
    int bits = 0;
    bool escalated = false;
};

class AwpController
{
  public:
    /// `group_of[layer]` maps layers onto shared precision states (e.g. one
    /// state per residual block). Empty means one state per layer.
    AwpController(std::size_t layer_count, AwpConfig config, std::vector<std::size_t> group_of = {})
        : config_(config), group_of_(std::move(group_of))
    {
        config_.validate();
        if (group_of_.empty())
        {
            group_of_.resize(layer_count);
            std::iota(group_of_.begin(), group_of_.end(), std::size_t{0});
        }
        if (group_of_.size() != layer_count)
            throw std::invalid_argument("group map has " + std::to_string(group_of_.size()) + " entries for " +
                                        std::to_string(layer_count) + " layers");
        std::size_t groups = 0;
        for (std::size_t g : group_of_)
            groups = std::max(groups, g + 1);
        for (std::size_t g = 0; g < groups; ++g)
            if (std::find(group_of_.begin(), group_of_.end(), g) == group_of_.end())
                throw std::invalid_argument("group " + std::to_string(g) + " has no layers");
        states_.assign(groups, LayerPrecisionState{config_.initial_bits, 0, std::nullopt});
    }

    const AwpConfig& config() const noexcept { return config_; }
    std::size_t layer_count() const noexcept { return group_of_.size(); }
    std::size_t group_count() const noexcept { return states_.size(); }

    std::size_t group_of(std::size_t layer) const
    {
        if (layer >= group_of_.size())
            throw UnknownLayer(layer, group_of_.size());
        return group_of_[layer];
    }

    const LayerPrecisionState& state(std::size_t layer) const { return states_[group_of(layer)]; }

    int bits(std::size_t layer) const { return state(layer).bits; }

    codec::RoundTo current_round_to(std::size_t layer) const { return codec::bits_to_round_to(bits(layer)); }

    /// Feeds one batch's norm for the state owning `layer`. With grouping,
    /// call once per group per batch (see observe_all).
    Observation observe(std::size_t layer, double curr_norm)
    {
        LayerPrecisionState& s = states_[group_of(layer)];
        Observation obs;
        obs.norm = curr_norm;
        if (s.prev_norm)
        {
            const double delta = change_rate(curr_norm, *s.prev_norm);
            obs.delta = delta;
            if (delta < config_.threshold)
                ++s.interval_counter;
            else if (config_.consecutive)
                s.interval_counter = 0;
            if (s.interval_counter >= config_.interval)
            {
                s.bits = std::min(kMaxBits, s.bits + config_.step_bits);
                s.interval_counter = 0;
                obs.escalated = true;
            }
        }
        s.prev_norm = curr_norm;
        obs.counter = s.interval_counter;
        obs.bits = s.bits;
        return obs;
    }

    int observe_batch(std::size_t layer, double curr_norm) { return observe(layer, curr_norm).bits; }

    /// One batch worth of per-layer norms. Layers sharing a group are combined
    /// as sqrt(sum of squared norms) and the group is observed once. Returns
    /// one observation per layer (members of a group share theirs).
    std::vector<Observation> observe_all(std::span<const double> layer_norms)
    {
        if (layer_norms.size() != group_of_.size())
            throw std::invalid_argument("expected " + std::to_string(group_of_.size()) + " layer norms, got " +
                                        std::to_string(layer_norms.size()));
        std::vector<double> group_sq(states_.size(), 0.0);
        for (std::size_t l = 0; l < layer_norms.size(); ++l)
            group_sq[group_of_[l]] += layer_norms[l] * layer_norms[l];

        std::vector<Observation> per_group(states_.size());
        std::vector<bool> seen(states_.size(), false);
        std::vector<Observation> out(layer_norms.size());
        for (std::size_t l = 0; l < layer_norms.size(); ++l)
        {
            const std::size_t g = group_of_[l];
            if (!seen[g])
            {
                // A single-layer group uses the layer norm directly so the
                // ungrouped case matches observe() bit for bit.
                const bool alone = std::count(group_of_.begin(), group_of_.end(), g) == 1;
                per_group[g] = observe(l, alone ? layer_norms[l] : std::sqrt(group_sq[g]));
                seen[g] = true;
            }
            out[l] = per_group[g];
        }
        return out;
    }

  private:
    AwpConfig config_;
    std::vector<std::size_t> group_of_;
    std::vector<LayerPrecisionState> states_;
};

// ---------------------------------------------------------------------------
// Trace log: one row per (batch, layer).

struct TraceRow
{
    std::size_t batch = 0;
    std::size_t layer = 0;
    double norm = 0.0;
    std::optional<double> delta;
    int counter = 0;
    int bits = 0;
};

inline constexpr const char* kTraceHeader = "batch,layer,norm,delta,counter,bits";

inline void write_trace_row(std::ostream& os, const TraceRow& row)
{
    os << row.batch << ',' << row.layer << ',' << detail::format_double(row.norm) << ','
       << (row.delta ? detail::format_double(*row.delta) : std::string{}) << ',' << row.counter << ','
       << row.bits << '\n';
}

inline void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows)
{
    os << kTraceHeader << '\n';
    for (const auto& row : rows)
        write_trace_row(os, row);
}

} // namespace awp
} // namespace a2dtwp
