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

#include "a2dtwp/cli.hpp"
#include "a2dtwp/dataset.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

a2dtwp::PackPath parse_pack_path(const std::string& s)
{
    if (s == "scalar")
        return a2dtwp::PackPath::scalar;
    if (s == "parallel")
        return a2dtwp::PackPath::parallel;
    return a2dtwp::PackPath::vectorized;
}

} // namespace

int main(int argc, char** argv)
{
    using namespace a2dtwp;

    CLI::App app{"Adaptive weight precision and truncation codec toolkit"};
    app.require_subcommand(1);

    // pack
    std::string pack_in, pack_out, pack_kernel = "vectorized";
    int round_to = 0;
    int pack_threads = 1;
    auto* pack = app.add_subcommand("pack", "Pack float32 weights (raw LE or .csv) into an ADT1 container");
    pack->add_option("--input", pack_in, "Raw little-endian float32 file or .csv")->required();
    pack->add_option("--round-to", round_to, "Most-significant bytes kept per weight (1..4)")->required();
    pack->add_option("--output", pack_out, "ADT1 container to write")->required();
    pack->add_option("--kernel", pack_kernel, "scalar | vectorized | parallel")
        ->check(CLI::IsMember({"scalar", "vectorized", "parallel"}));
    pack->add_option("--threads", pack_threads, "Threads for the parallel kernel")->check(CLI::PositiveNumber);

    // unpack
    std::string unpack_in, unpack_out;
    auto* unpack = app.add_subcommand("unpack", "Restore float32 weights from an ADT1 container");
    unpack->add_option("--input", unpack_in, "ADT1 container")->required();
    unpack->add_option("--output", unpack_out, "Raw little-endian float32 output")->required();

    // bench-codec
    cli::BenchOptions bench_opt;
    std::string bench_out;
    auto* bench = app.add_subcommand("bench-codec", "Time scalar, vectorized and parallel pack plus unpack");
    bench->add_option("--sizes", bench_opt.sizes, "Weight counts")->delimiter(',');
    bench->add_option("--round-tos", bench_opt.round_tos, "RoundTo values")->delimiter(',');
    bench->add_option("--workers", bench_opt.workers, "Worker counts for the parallel path")->delimiter(',');
    bench->add_option("--repeats", bench_opt.repeats, "Timed repetitions (best is reported)");
    bench->add_option("--seed", bench_opt.seed, "Seed for the random inputs");
    bench->add_option("--output", bench_out, "CSV file (default: stdout)");

    // train
    cli::TrainArgs train_args;
    std::uint64_t seed = 0;
    std::string train_out;
    auto* train = app.add_subcommand("train", "Run a training experiment from a config file");
    train->add_option("--config", train_args.config_path, "Sectioned key = value config file");
    auto* seed_opt = train->add_option("--seed", seed, "Seed for data, initialization and splits");
    auto* out_opt = train->add_option("--output-dir", train_out, "Overrides output.dir");
    train->add_flag("--print-defaults", train_args.print_defaults, "Print every config key with its default");

    // report
    cli::ReportArgs report_args;
    std::string report_adaptive, report_json;
    auto* report = app.add_subcommand("report", "Phase breakdown for a baseline run and optionally an adaptive run");
    report->add_option("--baseline", report_args.baseline_dir, "Run directory of the 32-bit baseline")->required();
    auto* adaptive_opt = report->add_option("--a2dtwp", report_adaptive, "Run directory of the adaptive run");
    auto* json_opt = report->add_option("--json", report_json, "Also write the report as JSON");

    // gen-data
    BlobSpec blobs;
    std::uint64_t data_seed = 0;
    std::string data_out;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic Gaussian-blob dataset (.csv or ADS1 binary)");
    gen->add_option("--samples", blobs.samples, "Number of samples");
    gen->add_option("--classes", blobs.classes, "Number of classes");
    gen->add_option("--features", blobs.features, "Features per sample");
    gen->add_option("--center-scale", blobs.center_scale, "Std-dev of the class centers");
    gen->add_option("--noise", blobs.noise, "Std-dev of samples around their center");
    gen->add_option("--seed", data_seed, "Seed for centers and samples")->required();
    gen->add_option("--output", data_out, "Output path (.csv, otherwise ADS1 binary)")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? cli::kOk : cli::kUsage;
    }

    if (pack->parsed())
        return cli::cmd_pack(pack_in, round_to, pack_out, std::cout, std::cerr, parse_pack_path(pack_kernel),
                             pack_threads);
    if (unpack->parsed())
        return cli::cmd_unpack(unpack_in, unpack_out, std::cout, std::cerr);
    if (bench->parsed())
    {
        if (bench_out.empty())
            return cli::cmd_bench_codec(bench_opt, std::cout, std::cerr);
        std::ofstream csv(bench_out);
        if (!csv)
        {
            std::cerr << "error: cannot write " << bench_out << '\n';
            return cli::kFailure;
        }
        return cli::cmd_bench_codec(bench_opt, csv, std::cerr);
    }
    if (train->parsed())
    {
        if (*seed_opt)
            train_args.seed = seed;
        if (*out_opt)
            train_args.output_dir = train_out;
        return cli::cmd_train(train_args, std::cout, std::cerr);
    }
    if (report->parsed())
    {
        if (*adaptive_opt)
            report_args.adaptive_dir = report_adaptive;
        if (*json_opt)
            report_args.json_path = report_json;
        return cli::cmd_report(report_args, std::cout, std::cerr);
    }
    if (gen->parsed())
    {
        try
        {
            const Dataset ds = make_gaussian_blobs(blobs, data_seed);
            if (data_out.size() >= 4 && data_out.compare(data_out.size() - 4, 4, ".csv") == 0)
            {
                std::ofstream csv(data_out);
                if (!csv)
                    throw std::runtime_error("cannot write " + data_out);
                for (std::size_t s = 0; s < ds.size(); ++s)
                {
                    for (std::size_t f = 0; f < ds.feature_count; ++f)
                        csv << detail::format_double(ds.features[s * ds.feature_count + f]) << ',';
                    csv << ds.labels[s] << '\n';
                }
            }
            else
            {
                save_dataset_binary(ds, data_out);
            }
            std::cout << "samples=" << ds.size() << "\nfeatures=" << ds.feature_count
                      << "\nclasses=" << ds.class_count << '\n';
            return cli::kOk;
        }
        catch (const std::exception& e)
        {
            std::cerr << "error: " << e.what() << '\n';
            return e.what() == std::string() ? cli::kFailure : cli::kUsage;
        }
    }
    return cli::kUsage;
}
