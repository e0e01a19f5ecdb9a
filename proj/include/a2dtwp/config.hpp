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

// Experiment configuration: a flat key = value file with [section] headers.
// '#' and ';' start comments. Unknown sections or keys are errors so typos
// cannot silently fall back to defaults.

#include "a2dtwp/dataset.hpp"
#include "a2dtwp/detail/text.hpp"
#include "a2dtwp/trainer.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {

class ConfigError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct RunConfig
{
    Mode mode = Mode::a2dtwp;
    int fixed_bits = 32;
    std::optional<std::uint64_t> seed;
    std::size_t epochs = 10;
    std::size_t workers = 1;
    PackPath pack_path = PackPath::vectorized;
    int pack_threads = 1;

    std::string dataset = "synthetic"; // or a .csv / ADS1 binary path
    BlobSpec blobs;
    double validation_fraction = 0.2;

    std::vector<std::size_t> hidden = {128, 64};
    double init_variance = 1e-2;

    nn::SgdConfig sgd;
    awp::AwpConfig awp;
    std::vector<std::size_t> awp_groups;
    transfer::LinkModel link;

    std::string output_dir = "run";
    bool measured_times = false;
};

inline const char* to_string(Mode m)
{
    switch (m)
    {
    case Mode::baseline:
        return "baseline";
    case Mode::oracle_fixed_bits:
        return "oracle_fixed_bits";
    case Mode::a2dtwp:
        return "a2dtwp";
    }
    return "?";
}

inline const char* to_string(PackPath p)
{
    switch (p)
    {
    case PackPath::scalar:
        return "scalar";
    case PackPath::vectorized:
        return "vectorized";
    case PackPath::parallel:
        return "parallel";
    }
    return "?";
}

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

struct ConfigField
{
    std::string where; // "file:line"
    std::string key;   // "section.key"
    std::string value;

    [[noreturn]] void fail(const std::string& why) const
    {
        throw ConfigError(where + ": " + key + " = '" + value + "': " + why);
    }

    double as_double() const
    {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || end != value.c_str() + value.size())
            fail("expected a number");
        return v;
    }

    std::uint64_t as_uint() const
    {
        if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
            fail("expected a non-negative integer");
        try
        {
            return std::stoull(value);
        }
        catch (const std::exception&)
        {
            fail("integer out of range");
        }
    }

    int as_int() const
    {
        const bool negative = !value.empty() && value[0] == '-';
        ConfigField magnitude = *this;
        if (negative)
            magnitude.value = value.substr(1);
        const auto v = magnitude.as_uint();
        if (v > 1000000000ull)
            fail("integer out of range");
        return negative ? -static_cast<int>(v) : static_cast<int>(v);
    }

    bool as_bool() const
    {
        if (value == "true" || value == "1" || value == "yes")
            return true;
        if (value == "false" || value == "0" || value == "no")
            return false;
        fail("expected true or false");
    }

    std::vector<std::size_t> as_size_list() const
    {
        std::vector<std::size_t> out;
        if (detail::trim(value).empty())
            return out;
        for (auto part : detail::split(value, ','))
        {
            ConfigField item = *this;
            item.value = std::string(detail::trim(part));
            out.push_back(static_cast<std::size_t>(item.as_uint()));
        }
        return out;
    }
};

} // namespace detail

/// Parses config text; `source` names the file in diagnostics.
inline RunConfig parse_run_config(std::istream& in, const std::string& source = "config")
{
    RunConfig cfg;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::string> seen;

    while (std::getline(in, line))
    {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        std::string_view text = line;
        if (const auto hash = text.find_first_of("#;"); hash != std::string_view::npos)
            text = text.substr(0, hash);
        text = detail::trim(text);
        if (text.empty())
            continue;
        if (text.front() == '[')
        {
            if (text.back() != ']')
                throw ConfigError(where + ": malformed section header");
            section = std::string(detail::trim(text.substr(1, text.size() - 2)));
            static const char* known[] = {"run", "data", "net", "sgd", "awp", "link", "output"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(where + ": expected 'key = value'");
        if (section.empty())
            throw ConfigError(where + ": key outside of any [section]");

        detail::ConfigField f{where, section + "." + std::string(detail::trim(text.substr(0, eq))),
                              std::string(detail::trim(text.substr(eq + 1)))};
        if (auto [it, fresh] = seen.emplace(f.key, where); !fresh)
            throw ConfigError(where + ": " + f.key + " already set at " + it->second);

        const std::string& k = f.key;
        if (k == "run.mode")
        {
            if (f.value == "baseline")
                cfg.mode = Mode::baseline;
            else if (f.value == "oracle_fixed_bits")
                cfg.mode = Mode::oracle_fixed_bits;
            else if (f.value == "a2dtwp")
                cfg.mode = Mode::a2dtwp;
            else
                f.fail("expected baseline, oracle_fixed_bits or a2dtwp");
        }
        else if (k == "run.fixed_bits")
        {
            cfg.fixed_bits = f.as_int();
            if (cfg.fixed_bits < 1 || cfg.fixed_bits > 32)
                f.fail("must be in 1..32");
        }
        else if (k == "run.seed")
            cfg.seed = f.as_uint();
        else if (k == "run.epochs")
            cfg.epochs = f.as_uint();
        else if (k == "run.workers")
        {
            cfg.workers = f.as_uint();
            if (cfg.workers < 1)
                f.fail("must be >= 1");
        }
        else if (k == "run.pack_path")
        {
            if (f.value == "scalar")
                cfg.pack_path = PackPath::scalar;
            else if (f.value == "vectorized")
                cfg.pack_path = PackPath::vectorized;
            else if (f.value == "parallel")
                cfg.pack_path = PackPath::parallel;
            else
                f.fail("expected scalar, vectorized or parallel");
        }
        else if (k == "run.pack_threads")
        {
            cfg.pack_threads = f.as_int();
            if (cfg.pack_threads < 1)
                f.fail("must be >= 1");
        }
        else if (k == "data.source")
            cfg.dataset = f.value;
        else if (k == "data.samples")
            cfg.blobs.samples = f.as_uint();
        else if (k == "data.classes")
            cfg.blobs.classes = f.as_uint();
        else if (k == "data.features")
            cfg.blobs.features = f.as_uint();
        else if (k == "data.center_scale")
            cfg.blobs.center_scale = f.as_double();
        else if (k == "data.noise")
            cfg.blobs.noise = f.as_double();
        else if (k == "data.validation_fraction")
        {
            cfg.validation_fraction = f.as_double();
            if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
                f.fail("must be in (0, 1)");
        }
        else if (k == "net.hidden")
            cfg.hidden = f.as_size_list();
        else if (k == "net.init_variance")
        {
            cfg.init_variance = f.as_double();
            if (!(cfg.init_variance > 0.0))
                f.fail("must be > 0");
        }
        else if (k == "sgd.learning_rate")
            cfg.sgd.learning_rate = f.as_double();
        else if (k == "sgd.momentum")
            cfg.sgd.momentum = f.as_double();
        else if (k == "sgd.weight_decay")
            cfg.sgd.weight_decay = f.as_double();
        else if (k == "sgd.batch_size")
            cfg.sgd.batch_size = f.as_uint();
        else if (k == "sgd.lr_decay_every")
            cfg.sgd.lr_decay_every = f.as_uint();
        else if (k == "sgd.lr_decay_factor")
            cfg.sgd.lr_decay_factor = f.as_double();
        else if (k == "awp.threshold")
            cfg.awp.threshold = f.as_double();
        else if (k == "awp.interval")
            cfg.awp.interval = f.as_int();
        else if (k == "awp.step")
            cfg.awp.step_bits = f.as_int();
        else if (k == "awp.initial_bits")
            cfg.awp.initial_bits = f.as_int();
        else if (k == "awp.consecutive")
            cfg.awp.consecutive = f.as_bool();
        else if (k == "awp.groups")
            cfg.awp_groups = f.as_size_list();
        else if (k == "link.bandwidth")
            cfg.link.bandwidth = f.as_double();
        else if (k == "link.latency")
            cfg.link.latency = f.as_double();
        else if (k == "output.dir")
            cfg.output_dir = f.value;
        else if (k == "output.measured_times")
            cfg.measured_times = f.as_bool();
        else
            throw ConfigError(where + ": unknown key '" + k + "'");

        // Field-level semantic checks reuse the component validators.
        try
        {
            if (section == "sgd")
                cfg.sgd.validate();
            else if (section == "awp")
                cfg.awp.validate();
            else if (section == "link")
                cfg.link.validate();
        }
        catch (const std::invalid_argument& e)
        {
            f.fail(e.what());
        }
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    return parse_run_config(in, path);
}

/// Every key with its current value, in the accepted file format.
inline std::string format_run_config(const RunConfig& c)
{
    std::ostringstream os;
    auto d = detail::format_double;
    os << "[run]\n"
       << "mode = " << to_string(c.mode) << "            # baseline | oracle_fixed_bits | a2dtwp\n"
       << "fixed_bits = " << c.fixed_bits << "             # used by oracle_fixed_bits\n";
    if (c.seed)
        os << "seed = " << *c.seed << '\n';
    else
        os << "# seed = <required, or pass --seed>\n";
    os << "epochs = " << c.epochs << '\n'
       << "workers = " << c.workers << '\n'
       << "pack_path = " << to_string(c.pack_path) << "     # scalar | vectorized | parallel\n"
       << "pack_threads = " << c.pack_threads << "\n\n"
       << "[data]\n"
       << "source = " << c.dataset << "        # synthetic, or a .csv / ADS1 file\n"
       << "samples = " << c.blobs.samples << '\n'
       << "classes = " << c.blobs.classes << '\n'
       << "features = " << c.blobs.features << '\n'
       << "center_scale = " << d(c.blobs.center_scale) << '\n'
       << "noise = " << d(c.blobs.noise) << '\n'
       << "validation_fraction = " << d(c.validation_fraction) << "\n\n"
       << "[net]\n"
       << "hidden = " << detail::join_sizes(c.hidden) << '\n'
       << "init_variance = " << d(c.init_variance) << "\n\n"
       << "[sgd]\n"
       << "learning_rate = " << d(c.sgd.learning_rate) << '\n'
       << "momentum = " << d(c.sgd.momentum) << '\n'
       << "weight_decay = " << d(c.sgd.weight_decay) << '\n'
       << "batch_size = " << c.sgd.batch_size << '\n'
       << "lr_decay_every = " << c.sgd.lr_decay_every << "        # 0 = constant rate\n"
       << "lr_decay_factor = " << d(c.sgd.lr_decay_factor) << "\n\n"
       << "[awp]\n"
       << "threshold = " << d(c.awp.threshold) << '\n'
       << "interval = " << c.awp.interval << '\n'
       << "step = " << c.awp.step_bits << '\n'
       << "initial_bits = " << c.awp.initial_bits << '\n'
       << "consecutive = " << (c.awp.consecutive ? "true" : "false") << '\n'
       << "groups = " << detail::join_sizes(c.awp_groups) << "                # empty = one state per layer\n\n"
       << "[link]\n"
       << "bandwidth = " << d(c.link.bandwidth) << "        # bytes/s\n"
       << "latency = " << d(c.link.latency) << "              # s per message\n\n"
       << "[output]\n"
       << "dir = " << c.output_dir << '\n'
       << "measured_times = " << (c.measured_times ? "true" : "false")
       << "   # write wall-clock codec times into ledger/metrics CSVs\n";
    return os.str();
}

} // namespace a2dtwp
