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

// Per-phase time accounting for a training run and the side-by-side
// baseline / adaptive report built from it.

#include "a2dtwp/detail/text.hpp"
#include "a2dtwp/transfer.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {

enum class Phase : std::size_t
{
    transfer_to_worker,
    transfer_to_host,
    forward,
    backward,
    update,
    awp_norm,
    adt_pack,
    adt_unpack,
};

inline constexpr std::size_t kPhaseCount = 8;

inline constexpr std::array<const char*, kPhaseCount> kPhaseKeys = {
    "transfer_to_worker", "transfer_to_host", "forward", "backward", "update", "awp_norm", "adt_pack", "adt_unpack",
};

inline constexpr std::array<const char*, kPhaseCount> kPhaseLabels = {
    "Data transfer host->worker", "Data transfer worker->host", "Forward", "Backward", "Gradient update",
    "AWP (l2-norm)", "ADT (pack)", "ADT (unpack)",
};

/// Seconds spent per phase. A phase a run never executes (the codec in the
/// baseline, the controller outside adaptive mode) stays empty.
struct PhaseTimes
{
    std::array<std::optional<double>, kPhaseCount> seconds{};
    double batch_loop_wall = 0.0; // measured wall time of all batch bodies
    double modeled_link = 0.0;    // modeled link time, not part of wall time
    std::size_t batches = 0;

    void add(Phase p, double s)
    {
        auto& slot = seconds[static_cast<std::size_t>(p)];
        slot = slot.value_or(0.0) + s;
    }

    void enable(Phase p)
    {
        auto& slot = seconds[static_cast<std::size_t>(p)];
        if (!slot)
            slot = 0.0;
    }

    std::optional<double> get(Phase p) const { return seconds[static_cast<std::size_t>(p)]; }

    /// Wall time of the batch loop plus the modeled link time it stands in for.
    double accounted() const noexcept { return batch_loop_wall + modeled_link; }

    double phase_sum() const noexcept
    {
        double sum = 0.0;
        for (const auto& s : seconds)
            sum += s.value_or(0.0);
        return sum;
    }
};

class EmptyLedger : public std::runtime_error
{
  public:
    explicit EmptyLedger(const std::string& label) : std::runtime_error("run '" + label + "' has an empty ledger") {}
};

inline void write_phases_csv(std::ostream& os, const PhaseTimes& t)
{
    os << "phase,seconds\n";
    for (std::size_t p = 0; p < kPhaseCount; ++p)
        os << kPhaseKeys[p] << ',' << (t.seconds[p] ? detail::format_double(*t.seconds[p]) : std::string("na"))
           << '\n';
    os << "batch_loop_wall," << detail::format_double(t.batch_loop_wall) << '\n';
    os << "modeled_link," << detail::format_double(t.modeled_link) << '\n';
    os << "batches," << t.batches << '\n';
}

inline PhaseTimes read_phases_csv(std::istream& is)
{
    PhaseTimes t;
    std::string line;
    std::getline(is, line);
    if (detail::trim(line) != "phase,seconds")
        throw std::runtime_error("phases: unexpected header '" + line + "'");
    while (std::getline(is, line))
    {
        const auto text = detail::trim(line);
        if (text.empty())
            continue;
        const auto cells = detail::split(text, ',');
        if (cells.size() != 2)
            throw std::runtime_error("phases: malformed line '" + std::string(text) + "'");
        const std::string key(cells[0]);
        const std::string value(cells[1]);
        bool known = false;
        for (std::size_t p = 0; p < kPhaseCount; ++p)
            if (key == kPhaseKeys[p])
            {
                if (value != "na")
                    t.seconds[p] = std::stod(value);
                known = true;
            }
        if (key == "batch_loop_wall")
            t.batch_loop_wall = std::stod(value);
        else if (key == "modeled_link")
            t.modeled_link = std::stod(value);
        else if (key == "batches")
            t.batches = static_cast<std::size_t>(std::stoull(value));
        else if (!known)
            throw std::runtime_error("phases: unknown key '" + key + "'");
    }
    return t;
}

struct RunProfile
{
    std::string label;
    std::vector<transfer::TransferRecord> records;
    PhaseTimes times;
    std::optional<double> final_val_top1;
    std::vector<int> final_bits; // last traced width per layer; empty without a controller
};

struct ProfileColumn
{
    std::string label;
    std::array<std::optional<double>, kPhaseCount> total_seconds{};
    std::size_t batches = 0;
    transfer::ByteTotals weight_bytes;
    std::uint64_t total_wire_bytes = 0;
    double accounted_seconds = 0.0;
    double phase_sum_seconds = 0.0;
    std::optional<double> final_val_top1;
    std::vector<int> final_bits;

    double weight_ratio() const noexcept { return weight_bytes.ratio(); }
    double coverage() const noexcept { return accounted_seconds > 0 ? phase_sum_seconds / accounted_seconds : 0.0; }
};

struct ProfileReport
{
    std::vector<ProfileColumn> columns; // baseline first
    /// Baseline weight wire bytes over the adaptive run's (when both present).
    std::optional<double> weight_stream_reduction;
    /// Adaptive minus baseline final validation top-1, in percentage points.
    std::optional<double> accuracy_delta_pp;
};

inline ProfileColumn make_column(const RunProfile& run)
{
    if (run.records.empty())
        throw EmptyLedger(run.label);
    ProfileColumn c;
    c.label = run.label;
    c.total_seconds = run.times.seconds;
    c.batches = run.times.batches;
    c.weight_bytes = transfer::weight_bytes(run.records);
    c.total_wire_bytes = transfer::total_wire_bytes(run.records);
    c.accounted_seconds = run.times.accounted();
    c.phase_sum_seconds = run.times.phase_sum();
    c.final_val_top1 = run.final_val_top1;
    c.final_bits = run.final_bits;
    return c;
}

inline ProfileReport profile_report(const RunProfile& baseline, const RunProfile* adaptive = nullptr)
{
    ProfileReport report;
    report.columns.push_back(make_column(baseline));
    if (adaptive)
    {
        report.columns.push_back(make_column(*adaptive));
        const auto& a = report.columns[1].weight_bytes;
        if (a.wire > 0)
            report.weight_stream_reduction =
                static_cast<double>(report.columns[0].weight_bytes.wire) / static_cast<double>(a.wire);
        const auto& b0 = report.columns[0].final_val_top1;
        const auto& b1 = report.columns[1].final_val_top1;
        if (b0 && b1)
            report.accuracy_delta_pp = 100.0 * (*b1 - *b0);
    }
    return report;
}

namespace detail {

inline std::string ms_cell(const std::optional<double>& total, std::size_t batches)
{
    if (!total)
        return "N/A";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", batches ? *total * 1e3 / static_cast<double>(batches) : *total * 1e3);
    return buf;
}

inline std::string fixed(double v, int digits)
{
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

} // namespace detail

/// Aligned table in milliseconds per batch, one column per run.
inline std::string format_report(const ProfileReport& report)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"phase (ms/batch)"};
    for (const auto& c : report.columns)
        head.push_back(c.label);
    rows.push_back(head);
    for (std::size_t p = 0; p < kPhaseCount; ++p)
    {
        std::vector<std::string> row{kPhaseLabels[p]};
        for (const auto& c : report.columns)
            row.push_back(detail::ms_cell(c.total_seconds[p], c.batches));
        rows.push_back(row);
    }
    auto add_row = [&](const std::string& name, auto&& cell) {
        std::vector<std::string> row{name};
        for (const auto& c : report.columns)
            row.push_back(cell(c));
        rows.push_back(row);
    };
    add_row("Sum of phases", [](const ProfileColumn& c) { return detail::ms_cell(c.phase_sum_seconds, c.batches); });
    add_row("Accounted time", [](const ProfileColumn& c) { return detail::ms_cell(c.accounted_seconds, c.batches); });
    add_row("Coverage", [](const ProfileColumn& c) { return detail::fixed(100.0 * c.coverage(), 2) + "%"; });
    add_row("Batches", [](const ProfileColumn& c) { return std::to_string(c.batches); });
    add_row("Weight raw bytes", [](const ProfileColumn& c) { return std::to_string(c.weight_bytes.raw); });
    add_row("Weight wire bytes", [](const ProfileColumn& c) { return std::to_string(c.weight_bytes.wire); });
    add_row("Weight size ratio", [](const ProfileColumn& c) { return detail::fixed(c.weight_ratio(), 4); });
    add_row("Final val top-1", [](const ProfileColumn& c) {
        return c.final_val_top1 ? detail::fixed(*c.final_val_top1, 4) : std::string("N/A");
    });
    add_row("Final bits per layer", [](const ProfileColumn& c) {
        if (c.final_bits.empty())
            return std::string("N/A");
        std::string s;
        for (std::size_t i = 0; i < c.final_bits.size(); ++i)
            s += (i ? "/" : "") + std::to_string(c.final_bits[i]);
        return s;
    });

    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            width[i] = std::max(width[i], row[i].size());

    std::ostringstream os;
    for (std::size_t r = 0; r < rows.size(); ++r)
    {
        for (std::size_t i = 0; i < rows[r].size(); ++i)
        {
            const auto& cell = rows[r][i];
            if (i == 0)
                os << cell << std::string(width[i] - cell.size(), ' ');
            else
                os << "  " << std::string(width[i] - cell.size(), ' ') << cell;
        }
        os << '\n';
        if (r == 0)
        {
            std::size_t total = width[0];
            for (std::size_t i = 1; i < width.size(); ++i)
                total += width[i] + 2;
            os << std::string(total, '-') << '\n';
        }
    }
    if (report.weight_stream_reduction)
        os << "Weight stream reduction (baseline wire / adaptive wire): "
           << detail::fixed(*report.weight_stream_reduction, 4) << "x\n";
    if (report.accuracy_delta_pp)
        os << "Accuracy delta (adaptive - baseline): " << detail::fixed(*report.accuracy_delta_pp, 2) << " pp\n";
    return os.str();
}

inline nlohmann::json report_to_json(const ProfileReport& report)
{
    nlohmann::json j;
    j["runs"] = nlohmann::json::array();
    for (const auto& c : report.columns)
    {
        nlohmann::json run;
        run["label"] = c.label;
        run["batches"] = c.batches;
        nlohmann::json phases = nlohmann::json::object();
        for (std::size_t p = 0; p < kPhaseCount; ++p)
            phases[kPhaseKeys[p]] = c.total_seconds[p] ? nlohmann::json(*c.total_seconds[p]) : nlohmann::json(nullptr);
        run["phase_total_seconds"] = phases;
        run["phase_sum_seconds"] = c.phase_sum_seconds;
        run["accounted_seconds"] = c.accounted_seconds;
        run["weight_raw_bytes"] = c.weight_bytes.raw;
        run["weight_wire_bytes"] = c.weight_bytes.wire;
        run["weight_size_ratio"] = c.weight_ratio();
        run["total_wire_bytes"] = c.total_wire_bytes;
        run["final_val_top1"] = c.final_val_top1 ? nlohmann::json(*c.final_val_top1) : nlohmann::json(nullptr);
        run["final_bits"] = c.final_bits;
        j["runs"].push_back(run);
    }
    if (report.weight_stream_reduction)
        j["weight_stream_reduction"] = *report.weight_stream_reduction;
    if (report.accuracy_delta_pp)
        j["accuracy_delta_pp"] = *report.accuracy_delta_pp;
    return j;
}

} // namespace a2dtwp
