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

// Simulated host <-> worker boundary. Every byte that crosses it is recorded
// in a TransferLedger together with measured codec time and a modeled link
// time (latency + bytes / bandwidth).

#include "a2dtwp/codec.hpp"
#include "a2dtwp/detail/text.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {
namespace transfer {

struct LinkModel
{
    double bandwidth = 16e9; // bytes per second
    double latency = 0.0;    // seconds per message

    void validate() const
    {
        if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
            throw std::invalid_argument("link bandwidth must be > 0");
        if (!(latency >= 0.0) || !std::isfinite(latency))
            throw std::invalid_argument("link latency must be >= 0");
    }

    double seconds_for(std::uint64_t bytes) const noexcept
    {
        return latency + static_cast<double>(bytes) / bandwidth;
    }
};

enum class Direction
{
    to_worker,
    to_host
};

inline const char* to_string(Direction d) noexcept
{
    return d == Direction::to_worker ? "to_worker" : "to_host";
}

struct TransferRecord
{
    std::uint64_t batch = 0;
    Direction direction = Direction::to_worker;
    std::optional<std::size_t> layer; // empty = all layers (biases, gradients)
    std::uint64_t raw_bytes = 0;
    std::uint64_t wire_bytes = 0;
    double pack_seconds = 0.0;
    double unpack_seconds = 0.0;
    double link_seconds = 0.0;

    /// Weight payloads are the only per-layer to-worker records.
    bool is_weight_transfer() const noexcept { return direction == Direction::to_worker && layer.has_value(); }

    friend bool operator==(const TransferRecord&, const TransferRecord&) = default;
};

struct ByteTotals
{
    std::uint64_t raw = 0;
    std::uint64_t wire = 0;

    double ratio() const noexcept { return wire == 0 ? 1.0 : static_cast<double>(raw) / static_cast<double>(wire); }
};

/// Append-only; appends may come from several threads.
class TransferLedger
{
  public:
    TransferLedger() = default;
    TransferLedger(const TransferLedger& other) : records_(other.snapshot()) {}
    TransferLedger& operator=(const TransferLedger& other)
    {
        if (this != &other)
        {
            auto copy = other.snapshot();
            std::lock_guard lock(mutex_);
            records_ = std::move(copy);
        }
        return *this;
    }

    void append(const TransferRecord& record)
    {
        std::lock_guard lock(mutex_);
        records_.push_back(record);
    }

    std::vector<TransferRecord> snapshot() const
    {
        std::lock_guard lock(mutex_);
        return records_;
    }

    std::size_t size() const
    {
        std::lock_guard lock(mutex_);
        return records_.size();
    }

    bool empty() const { return size() == 0; }

    /// Not synchronized; call once appends for the batch have finished.
    const std::vector<TransferRecord>& records() const noexcept { return records_; }

    std::uint64_t total_wire_bytes() const;
    ByteTotals weight_bytes() const;
    std::uint64_t batch_wire_bytes(std::uint64_t batch) const;

  private:
    mutable std::mutex mutex_;
    std::vector<TransferRecord> records_;
};

inline std::uint64_t total_wire_bytes(std::span<const TransferRecord> records) noexcept
{
    std::uint64_t total = 0;
    for (const auto& r : records)
        total += r.wire_bytes;
    return total;
}

inline ByteTotals weight_bytes(std::span<const TransferRecord> records) noexcept
{
    ByteTotals t;
    for (const auto& r : records)
        if (r.is_weight_transfer())
        {
            t.raw += r.raw_bytes;
            t.wire += r.wire_bytes;
        }
    return t;
}

inline std::uint64_t TransferLedger::total_wire_bytes() const
{
    std::lock_guard lock(mutex_);
    return transfer::total_wire_bytes(records_);
}

inline ByteTotals TransferLedger::weight_bytes() const
{
    std::lock_guard lock(mutex_);
    return transfer::weight_bytes(records_);
}

inline std::uint64_t TransferLedger::batch_wire_bytes(std::uint64_t batch) const
{
    std::lock_guard lock(mutex_);
    std::uint64_t total = 0;
    for (const auto& r : records_)
        if (r.batch == batch)
            total += r.wire_bytes;
    return total;
}

/// Wire bytes of a framed block: ADT1 header plus payload.
inline std::uint64_t framed_size(const codec::PackedBlock& block) noexcept
{
    return codec::kContainerHeaderSize + block.payload.size();
}

struct SendContext
{
    std::uint64_t batch = 0;
    std::size_t layer = 0;
    double pack_seconds = 0.0;
    double unpack_seconds = 0.0;
};

struct Delivery
{
    codec::PackedBlock received;
    TransferRecord record;
};

/// Ledger entry for one packed weight block crossing to a worker.
inline TransferRecord weight_record(const codec::PackedBlock& block, const LinkModel& link, const SendContext& ctx)
{
    if (!block.well_formed())
        throw codec::MalformedBlock("cannot send inconsistent block", block.payload.size());
    TransferRecord record;
    record.batch = ctx.batch;
    record.direction = Direction::to_worker;
    record.layer = ctx.layer;
    record.raw_bytes = block.weight_count * sizeof(float);
    record.wire_bytes = framed_size(block);
    record.pack_seconds = ctx.pack_seconds;
    record.unpack_seconds = ctx.unpack_seconds;
    record.link_seconds = link.seconds_for(record.wire_bytes);
    return record;
}

/// Sends one packed weight block to a worker. The block arrives unchanged;
/// the ledger gains one record with wire_bytes = header + payload.
inline Delivery send_weights(const codec::PackedBlock& block, const LinkModel& link, TransferLedger& ledger,
                             const SendContext& ctx = {})
{
    TransferRecord record = weight_record(block, link, ctx);
    ledger.append(record);
    return {block, record};
}

/// Uncompressed transfer (biases to a worker, gradients back to the host,
/// or weights in the codec-free baseline).
inline TransferRecord send_raw(std::uint64_t bytes, Direction direction, std::optional<std::size_t> layer,
                               const LinkModel& link, TransferLedger& ledger, std::uint64_t batch)
{
    TransferRecord record;
    record.batch = batch;
    record.direction = direction;
    record.layer = layer;
    record.raw_bytes = bytes;
    record.wire_bytes = bytes;
    record.link_seconds = link.seconds_for(bytes);
    ledger.append(record);
    return record;
}

// ---------------------------------------------------------------------------
// Ledger CSV

inline constexpr const char* kLedgerHeader = "batch,direction,layer,raw_bytes,wire_bytes,pack_s,unpack_s,link_s";

/// With `measured_times` off the pack_s/unpack_s columns are written as 0 so
/// the file depends only on the run configuration.
inline void write_ledger_csv(std::ostream& os, const std::vector<TransferRecord>& records, bool measured_times = true)
{
    os << kLedgerHeader << '\n';
    for (const auto& r : records)
    {
        os << r.batch << ',' << to_string(r.direction) << ','
           << (r.layer ? std::to_string(*r.layer) : std::string("all")) << ',' << r.raw_bytes << ','
           << r.wire_bytes << ',' << detail::format_double(measured_times ? r.pack_seconds : 0.0) << ','
           << detail::format_double(measured_times ? r.unpack_seconds : 0.0) << ','
           << detail::format_double(r.link_seconds) << '\n';
    }
}

inline std::vector<TransferRecord> read_ledger_csv(std::istream& is)
{
    std::vector<TransferRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line))
    {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty())
            continue;
        if (line_no == 1)
        {
            if (text != kLedgerHeader)
                throw std::runtime_error("ledger: unexpected header '" + std::string(text) + "'");
            continue;
        }
        const auto cells = detail::split(text, ',');
        if (cells.size() != 8)
            throw std::runtime_error("ledger line " + std::to_string(line_no) + ": expected 8 columns");
        try
        {
            TransferRecord r;
            r.batch = std::stoull(std::string(cells[0]));
            if (cells[1] == "to_worker")
                r.direction = Direction::to_worker;
            else if (cells[1] == "to_host")
                r.direction = Direction::to_host;
            else
                throw std::invalid_argument("direction");
            if (cells[2] != "all")
                r.layer = static_cast<std::size_t>(std::stoull(std::string(cells[2])));
            r.raw_bytes = std::stoull(std::string(cells[3]));
            r.wire_bytes = std::stoull(std::string(cells[4]));
            r.pack_seconds = std::stod(std::string(cells[5]));
            r.unpack_seconds = std::stod(std::string(cells[6]));
            r.link_seconds = std::stod(std::string(cells[7]));
            out.push_back(r);
        }
        catch (const std::exception&)
        {
            throw std::runtime_error("ledger line " + std::to_string(line_no) + ": malformed record");
        }
    }
    return out;
}

} // namespace transfer
} // namespace a2dtwp
