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

#include "a2dtwp/detail/text.hpp"

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {

/// Row-major feature matrix with one integer class label per row.
struct Dataset
{
    std::size_t feature_count = 0;
    std::size_t class_count = 0;
    std::vector<float> features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }

    std::span<const float> rows(std::size_t begin, std::size_t count) const
    {
        return std::span<const float>(features).subspan(begin * feature_count, count * feature_count);
    }
    std::span<const int> label_rows(std::size_t begin, std::size_t count) const
    {
        return std::span<const int>(labels).subspan(begin, count);
    }

    Dataset slice(std::size_t begin, std::size_t count) const
    {
        Dataset out;
        out.feature_count = feature_count;
        out.class_count = class_count;
        auto f = rows(begin, count);
        auto l = label_rows(begin, count);
        out.features.assign(f.begin(), f.end());
        out.labels.assign(l.begin(), l.end());
        return out;
    }
};

struct BlobSpec
{
    std::size_t samples = 10000;
    std::size_t classes = 4;
    std::size_t features = 784;
    double center_scale = 0.1; // stddev of each class-center coordinate
    double noise = 0.7;       // stddev of per-sample noise around the center
};

/// Isotropic Gaussian clusters, one per class, with labels interleaved at
/// random. Fully determined by `seed`.
inline Dataset make_gaussian_blobs(const BlobSpec& blob, std::uint64_t seed)
{
    if (blob.classes < 2 || blob.features == 0)
        throw std::invalid_argument("blobs need >= 2 classes and >= 1 feature");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> center_dist(0.0, blob.center_scale);
    std::normal_distribution<double> noise_dist(0.0, blob.noise);
    std::uniform_int_distribution<int> class_dist(0, static_cast<int>(blob.classes) - 1);

    std::vector<double> centers(blob.classes * blob.features);
    for (double& c : centers)
        c = center_dist(rng);

    Dataset ds;
    ds.feature_count = blob.features;
    ds.class_count = blob.classes;
    ds.features.resize(blob.samples * blob.features);
    ds.labels.resize(blob.samples);
    for (std::size_t s = 0; s < blob.samples; ++s)
    {
        const int y = class_dist(rng);
        ds.labels[s] = y;
        const double* center = centers.data() + static_cast<std::size_t>(y) * blob.features;
        for (std::size_t f = 0; f < blob.features; ++f)
            ds.features[s * blob.features + f] = static_cast<float>(center[f] + noise_dist(rng));
    }
    return ds;
}

/// CSV rows of `features..., label`. Blank lines and a non-numeric header row are skipped.
inline Dataset load_dataset_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open dataset " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;
    while (std::getline(in, line))
    {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty())
            continue;
        const auto cells = detail::split(text, ',');
        if (cells.size() < 2)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": need features and a label");
        std::vector<float> row;
        bool numeric = true;
        for (std::size_t c = 0; c + 1 < cells.size() && numeric; ++c)
        {
            const std::string cell(detail::trim(cells[c]));
            char* end = nullptr;
            const float v = std::strtof(cell.c_str(), &end);
            numeric = !cell.empty() && end == cell.c_str() + cell.size();
            row.push_back(v);
        }
        const std::string label_cell(detail::trim(cells.back()));
        char* end = nullptr;
        const long label = std::strtol(label_cell.c_str(), &end, 10);
        numeric = numeric && !label_cell.empty() && end == label_cell.c_str() + label_cell.size();
        if (!numeric)
        {
            if (ds.labels.empty() && ds.feature_count == 0)
                continue; // header
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-numeric value");
        }
        if (label < 0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": negative label");
        if (ds.feature_count == 0)
            ds.feature_count = row.size();
        else if (row.size() != ds.feature_count)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(ds.feature_count) + " features, got " +
                                     std::to_string(row.size()));
        ds.features.insert(ds.features.end(), row.begin(), row.end());
        ds.labels.push_back(static_cast<int>(label));
        max_label = std::max(max_label, static_cast<int>(label));
    }
    ds.class_count = static_cast<std::size_t>(max_label + 1);
    return ds;
}

// Flat binary: "ADS1" | u32 LE features | u32 LE classes | u64 LE rows |
// rows x (features f32 LE, i32 LE label).
inline void save_dataset_binary(const Dataset& ds, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    auto put = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i)
            out.put(static_cast<char>(v >> (8 * i)));
    };
    out.write("ADS1", 4);
    put(ds.feature_count, 4);
    put(ds.class_count, 4);
    put(ds.size(), 8);
    for (std::size_t s = 0; s < ds.size(); ++s)
    {
        for (std::size_t f = 0; f < ds.feature_count; ++f)
            put(std::bit_cast<std::uint32_t>(ds.features[s * ds.feature_count + f]), 4);
        put(static_cast<std::uint32_t>(ds.labels[s]), 4);
    }
    if (!out)
        throw std::runtime_error("write failed for " + path);
}

inline Dataset load_dataset_binary(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open dataset " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto get = [&](int n) {
        if (pos + static_cast<std::size_t>(n) > bytes.size())
            throw std::runtime_error(path + ": truncated at byte " + std::to_string(pos));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= std::uint64_t{bytes[pos + static_cast<std::size_t>(i)]} << (8 * i);
        pos += static_cast<std::size_t>(n);
        return v;
    };
    if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "ADS1")
        throw std::runtime_error(path + ": not an ADS1 dataset");
    pos = 4;
    Dataset ds;
    ds.feature_count = get(4);
    ds.class_count = get(4);
    const std::uint64_t rows = get(8);
    const std::size_t row_bytes = (ds.feature_count + 1) * 4;
    if (row_bytes == 0 || (bytes.size() - pos) / row_bytes < rows)
        throw std::runtime_error(path + ": truncated at byte " + std::to_string(bytes.size()));
    ds.features.reserve(rows * ds.feature_count);
    ds.labels.reserve(rows);
    for (std::uint64_t s = 0; s < rows; ++s)
    {
        for (std::size_t f = 0; f < ds.feature_count; ++f)
            ds.features.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(get(4))));
        const auto label = static_cast<std::int32_t>(get(4));
        if (label < 0 || static_cast<std::size_t>(label) >= ds.class_count)
            throw std::runtime_error(path + ": label out of range in row " + std::to_string(s));
        ds.labels.push_back(label);
    }
    return ds;
}

inline Dataset load_dataset(const std::string& path)
{
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
        return load_dataset_csv(path);
    return load_dataset_binary(path);
}

} // namespace a2dtwp
