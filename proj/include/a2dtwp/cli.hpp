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

// Implementations behind the a2dtwp command-line subcommands. Each returns a
// process exit status:
//   0  success
//   1  I/O failure or malformed input data
//   2  usage or configuration error
//   3  malformed ADT1 container

#include "a2dtwp/codec.hpp"
#include "a2dtwp/config.hpp"
#include "a2dtwp/profile.hpp"
#include "a2dtwp/run.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace a2dtwp {
namespace cli {

enum ExitCode : int
{
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kMalformed = 3,
};

class InputError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

inline std::vector<std::uint8_t> read_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw InputError("write failed for " + path);
}

inline std::vector<float> decode_f32le(std::span<const std::uint8_t> bytes, const std::string& path)
{
    if (bytes.size() % 4 != 0)
        throw InputError(path + ": size " + std::to_string(bytes.size()) + " is not a multiple of 4");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        std::uint32_t w = 0;
        for (int b = 0; b < 4; ++b)
            w |= std::uint32_t{bytes[4 * i + static_cast<std::size_t>(b)]} << (8 * b);
        out[i] = std::bit_cast<float>(w);
    }
    return out;
}

inline std::vector<std::uint8_t> encode_f32le(std::span<const float> values)
{
    std::vector<std::uint8_t> out(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i)
    {
        const auto w = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b)
            out[4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(w >> (8 * b));
    }
    return out;
}

/// Floats separated by commas and/or whitespace.
inline std::vector<float> parse_float_csv(const std::string& text, const std::string& path)
{
    std::vector<float> out;
    std::size_t pos = 0;
    std::size_t line = 1;
    while (pos < text.size())
    {
        const char c = text[pos];
        if (c == '\n')
            ++line;
        if (c == ',' || std::isspace(static_cast<unsigned char>(c)))
        {
            ++pos;
            continue;
        }
        const std::size_t end = text.find_first_of(", \t\r\n", pos);
        const std::string token = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        char* stop = nullptr;
        const float v = std::strtof(token.c_str(), &stop);
        if (stop != token.c_str() + token.size())
            throw InputError(path + ":" + std::to_string(line) + ": not a number: '" + token + "'");
        out.push_back(v);
        pos = end == std::string::npos ? text.size() : end;
    }
    return out;
}

inline std::vector<float> read_weights(const std::string& path)
{
    const auto bytes = read_bytes(path);
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        return parse_float_csv(std::string(bytes.begin(), bytes.end()), path);
    return decode_f32le(bytes, path);
}

inline int cmd_pack(const std::string& input, int round_to_bytes, const std::string& output, std::ostream& out,
                    std::ostream& err, PackPath path = PackPath::vectorized, int threads = 1)
{
    if (round_to_bytes < 1 || round_to_bytes > 4)
    {
        err << "error: --round-to must be in 1..4, got " << round_to_bytes << '\n';
        return kUsage;
    }
    try
    {
        const auto weights = read_weights(input);
        const codec::RoundTo r(round_to_bytes);
        codec::PackedBlock block;
        switch (path)
        {
        case PackPath::scalar:
            block = codec::pack(weights, r);
            break;
        case PackPath::vectorized:
            block = codec::pack_vectorized(weights, r);
            break;
        case PackPath::parallel:
            block = codec::pack_parallel(weights, r, threads);
            break;
        }
        const auto bytes = codec::serialize(block);
        write_bytes(output, bytes);

        const double raw = static_cast<double>(weights.size() * 4);
        out << "weights=" << weights.size() << '\n'
            << "round_to=" << round_to_bytes << '\n'
            << "raw_bytes=" << weights.size() * 4 << '\n'
            << "payload_bytes=" << block.payload.size() << '\n'
            << "file_bytes=" << bytes.size() << '\n'
            << "compression_ratio=" << detail::fixed(raw > 0 ? block.payload.size() / raw : round_to_bytes / 4.0, 6)
            << '\n'
            << "file_ratio=" << detail::fixed(raw > 0 ? bytes.size() / raw : 0.0, 6) << '\n';
        return kOk;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

inline int cmd_unpack(const std::string& input, const std::string& output, std::ostream& out, std::ostream& err)
{
    std::vector<std::uint8_t> bytes;
    try
    {
        bytes = read_bytes(input);
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    try
    {
        const auto block = codec::deserialize(bytes);
        const auto weights = codec::unpack(block);
        write_bytes(output, encode_f32le(weights));
        out << "weights=" << weights.size() << '\n' << "round_to=" << block.round_to.bytes() << '\n';
        return kOk;
    }
    catch (const codec::MalformedBlock& e)
    {
        err << "error: malformed container " << input << ": " << e.what() << '\n';
        return kMalformed;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

struct BenchOptions
{
    std::vector<std::size_t> sizes = {1 << 20};
    std::vector<int> round_tos = {1, 2, 3, 4};
    std::vector<int> workers = {1, 2, 8};
    int repeats = 5;
    std::uint64_t seed = 1;
    std::size_t precheck_size = 1000000;
};

/// Random 32-bit patterns, including non-finite and subnormal encodings.
inline std::vector<float> random_bit_patterns(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<float> out(n);
    for (auto& v : out)
        v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    return out;
}

/// Checks every pack path against the scalar reference; returns a description of the first mismatch.
inline std::optional<std::string> check_pack_equivalence(std::span<const float> data, std::span<const int> round_tos,
                                                         std::span<const int> workers)
{
    for (int rb : round_tos)
    {
        const codec::RoundTo r(rb);
        const auto reference = codec::pack(data, r);
        if (codec::pack_vectorized(data, r) != reference)
            return "vectorized pack differs from scalar at round_to=" + std::to_string(rb);
        for (int w : workers)
        {
            if (codec::pack_parallel(data, r, w) != reference)
                return "parallel pack (" + std::to_string(w) + " workers) differs at round_to=" + std::to_string(rb);
            if (codec::pack_parallel(data, r, w, codec::PackKernel::scalar) != reference)
                return "parallel scalar pack (" + std::to_string(w) + " workers) differs at round_to=" +
                       std::to_string(rb);
        }
        const auto mask = codec::truncation_mask(r);
        for (auto kernel : {codec::PackKernel::scalar, codec::PackKernel::vectorized})
        {
            const auto restored = codec::unpack(reference, kernel);
            for (std::size_t i = 0; i < data.size(); ++i)
                if (std::bit_cast<std::uint32_t>(restored[i]) != (std::bit_cast<std::uint32_t>(data[i]) & mask))
                    return std::string(kernel == codec::PackKernel::scalar ? "scalar" : "vectorized") +
                           " unpack violates the truncation mask at index " + std::to_string(i);
        }
    }
    return std::nullopt;
}

inline int cmd_bench_codec(const BenchOptions& opt, std::ostream& csv, std::ostream& err)
{
    using clock = std::chrono::steady_clock;
    for (int r : opt.round_tos)
        if (r < 1 || r > 4)
        {
            err << "error: round_to values must be in 1..4\n";
            return kUsage;
        }
    for (int w : opt.workers)
        if (w < 1)
        {
            err << "error: worker counts must be >= 1\n";
            return kUsage;
        }
    if (opt.repeats < 1)
    {
        err << "error: --repeats must be >= 1\n";
        return kUsage;
    }

    const auto probe = random_bit_patterns(opt.precheck_size, opt.seed);
    const std::vector<int> all_r = {1, 2, 3, 4};
    if (auto problem = check_pack_equivalence(probe, all_r, opt.workers))
    {
        err << "error: equivalence precheck failed: " << *problem << '\n';
        return kFailure;
    }
    err << "precheck: " << opt.precheck_size << " patterns, all pack and unpack paths agree for round_to 1..4\n";

    csv << "kernel,weights,round_to,workers,best_seconds,input_gb_per_s\n";
    auto best_of = [&](auto&& fn) {
        double best = 1e300;
        for (int i = 0; i < opt.repeats; ++i)
        {
            const auto t0 = clock::now();
            fn();
            best = std::min(best, std::chrono::duration<double>(clock::now() - t0).count());
        }
        return best;
    };
    auto row = [&](const char* kernel, std::size_t n, int r, int w, double s) {
        csv << kernel << ',' << n << ',' << r << ',' << w << ',' << detail::format_double(s) << ','
            << detail::fixed(s > 0 ? static_cast<double>(n) * 4.0 / s / 1e9 : 0.0, 3) << '\n';
    };

    for (std::size_t n : opt.sizes)
    {
        const auto data = random_bit_patterns(n, opt.seed + n);
        if (auto problem = check_pack_equivalence(data, opt.round_tos, opt.workers))
        {
            err << "error: equivalence check failed at size " << n << ": " << *problem << '\n';
            return kFailure;
        }
        std::vector<float> copy(n);
        row("memcpy", n, 4, 1, best_of([&] { std::memcpy(copy.data(), data.data(), n * sizeof(float)); }));
        for (int rb : opt.round_tos)
        {
            const codec::RoundTo r(rb);
            volatile std::size_t sink = 0;
            const double scalar = best_of([&] { sink = sink + codec::pack(data, r).payload.size(); });
            const double vec = best_of([&] { sink = sink + codec::pack_vectorized(data, r).payload.size(); });
            row("pack_scalar", n, rb, 1, scalar);
            row("pack_vectorized", n, rb, 1, vec);
            for (int w : opt.workers)
                row("pack_parallel", n, rb, w,
                    best_of([&] { sink = sink + codec::pack_parallel(data, r, w).payload.size(); }));
            const auto block = codec::pack(data, r);
            std::vector<float> restored(n);
            row("unpack_scalar", n, rb, 1,
                best_of([&] { codec::unpack_into(block, restored, codec::PackKernel::scalar); }));
            row("unpack_vectorized", n, rb, 1, best_of([&] { codec::unpack_into(block, restored); }));

            if (n * 4 >= (4u << 20) && codec::vector_kernel_available() && vec > scalar)
                err << "warning: vectorized pack slower than scalar at " << n << " weights, round_to=" << rb
                    << " (" << vec << " s vs " << scalar << " s)\n";
        }
    }
    return kOk;
}

struct TrainArgs
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    bool print_defaults = false;
};

inline int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err)
{
    if (args.print_defaults)
    {
        out << format_run_config(RunConfig{});
        return kOk;
    }
    RunConfig cfg;
    try
    {
        if (args.config_path.empty())
            throw ConfigError("--config is required");
        cfg = load_run_config(args.config_path);
        if (!args.seed)
            throw ConfigError("--seed is required for train");
        if (cfg.seed && *cfg.seed != *args.seed)
            err << "note: --seed " << *args.seed << " overrides run.seed " << *cfg.seed << '\n';
        cfg.seed = args.seed;
        if (args.output_dir)
            cfg.output_dir = *args.output_dir;
        trainer_options(cfg).validate();
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try
    {
        const RunResult result = run_training(cfg);
        write_run_outputs(cfg, result, cfg.output_dir);
        out << "mode=" << to_string(cfg.mode) << '\n'
            << "epochs=" << result.epochs.size() << '\n'
            << "final_val_top1=" << detail::fixed(result.final_val_top1(), 4) << '\n'
            << "weight_wire_bytes=" << transfer::weight_bytes(result.records).wire << '\n'
            << "weight_size_ratio=" << detail::fixed(transfer::weight_bytes(result.records).ratio(), 4) << '\n'
            << "final_bits=" << [&] {
                   std::string s;
                   for (std::size_t i = 0; i < result.final_bits.size(); ++i)
                       s += (i ? "," : "") + std::to_string(result.final_bits[i]);
                   return s;
               }() << '\n'
            << "output_dir=" << cfg.output_dir << '\n';
        return kOk;
    }
    catch (const ConfigError& e)
    {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

struct ReportArgs
{
    std::string baseline_dir;
    std::optional<std::string> adaptive_dir;
    std::optional<std::string> json_path;
};

inline int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err)
{
    try
    {
        const RunProfile base = load_run_profile(args.baseline_dir, "32-bit baseline");
        std::optional<RunProfile> adaptive;
        if (args.adaptive_dir)
            adaptive = load_run_profile(*args.adaptive_dir, "A2DTWP");
        const auto report = profile_report(base, adaptive ? &*adaptive : nullptr);
        out << format_report(report);
        if (args.json_path)
        {
            std::ofstream js(*args.json_path);
            if (!js)
                throw InputError("cannot write " + *args.json_path);
            js << report_to_json(report).dump(2) << '\n';
        }
        return kOk;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

} // namespace cli
} // namespace a2dtwp
