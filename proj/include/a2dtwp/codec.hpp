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

// Byte-granularity truncation codec for 32-bit float weight arrays.
//
// pack() keeps the RoundTo most-significant bytes of every IEEE-754 word and
// writes them most-significant-first into a dense payload. unpack() restores
// 32-bit words by zero-filling the dropped low bytes. The codec is purely
// bit-level: NaN, Inf, subnormals and -0.0 are not special-cased, so
// truncating a NaN can produce an Inf.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#include <immintrin.h>
#define A2DTWP_HAVE_AVX2_KERNEL 1
#else
#define A2DTWP_HAVE_AVX2_KERNEL 0
#endif

namespace a2dtwp {
namespace codec {

/// Number of most-significant bytes retained per weight, 1..4.
class RoundTo
{
  public:
    constexpr explicit RoundTo(int bytes_kept) : bytes_(bytes_kept)
    {
        if (bytes_kept < 1 || bytes_kept > 4)
            throw std::invalid_argument("RoundTo must be in 1..4, got " + std::to_string(bytes_kept));
    }

    constexpr int bytes() const noexcept { return bytes_; }
    constexpr int bits() const noexcept { return bytes_ * 8; }

    friend constexpr bool operator==(RoundTo, RoundTo) = default;
    friend constexpr auto operator<=>(RoundTo, RoundTo) = default;

  private:
    int bytes_;
};

/// Smallest byte count that holds `bits` bits; 14 bits round up to 2 bytes.
constexpr RoundTo bits_to_round_to(int bits)
{
    if (bits < 1 || bits > 32)
        throw std::invalid_argument("bit width must be in 1..32, got " + std::to_string(bits));
    return RoundTo((bits + 7) / 8);
}

/// High mask with 8*r one-bits: r=1 -> 0xFF000000, r=4 -> 0xFFFFFFFF.
constexpr std::uint32_t truncation_mask(RoundTo round_to) noexcept
{
    const int dropped_bits = 32 - round_to.bits();
    return dropped_bits == 0 ? 0xFFFFFFFFu : ~((std::uint32_t{1} << dropped_bits) - 1u);
}

class MalformedBlock : public std::runtime_error
{
  public:
    MalformedBlock(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset)
    {
    }

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

/// Compressed weights of one layer plus the framing needed to restore them.
struct PackedBlock
{
    RoundTo round_to{4};
    std::uint64_t weight_count = 0;
    std::vector<std::uint8_t> payload;

    std::size_t expected_payload_size() const noexcept
    {
        return static_cast<std::size_t>(weight_count) * static_cast<std::size_t>(round_to.bytes());
    }

    bool well_formed() const noexcept { return payload.size() == expected_payload_size(); }

    friend bool operator==(const PackedBlock&, const PackedBlock&) = default;
};

namespace detail {

inline void pack_range_scalar(const float* src, std::size_t count, int r, std::uint8_t* dst) noexcept
{
    for (std::size_t i = 0; i < count; ++i)
    {
        const auto word = std::bit_cast<std::uint32_t>(src[i]);
        for (int j = 0; j < r; ++j)
            dst[j] = static_cast<std::uint8_t>(word >> (24 - 8 * j));
        dst += r;
    }
}

inline void unpack_range_scalar(const std::uint8_t* src, std::size_t count, int r, float* dst) noexcept
{
    for (std::size_t i = 0; i < count; ++i)
    {
        std::uint32_t word = 0;
        for (int j = 0; j < r; ++j)
            word |= std::uint32_t{src[j]} << (24 - 8 * j);
        dst[i] = std::bit_cast<float>(word);
        src += r;
    }
}

inline constexpr std::size_t kVectorGroup = 8;

#if A2DTWP_HAVE_AVX2_KERNEL

// Per-lane shuffle: bring the top r bytes of each of the lane's four words to
// the front of the lane, most significant byte first; 0x80 zeroes the rest.
inline constexpr std::array<std::array<std::int8_t, 16>, 5> kLaneShuffle = [] {
    std::array<std::array<std::int8_t, 16>, 5> table{};
    for (int r = 1; r <= 4; ++r)
    {
        auto& lane = table[static_cast<std::size_t>(r)];
        lane.fill(static_cast<std::int8_t>(0x80));
        for (int k = 0; k < 4; ++k)
            for (int j = 0; j < r; ++j)
                lane[static_cast<std::size_t>(k * r + j)] = static_cast<std::int8_t>(4 * k + 3 - j);
    }
    return table;
}();

__attribute__((target("avx2"))) inline void pack_range_avx2(const float* src, std::size_t count, int r,
                                                             std::uint8_t* dst) noexcept
{
    const auto& lane = kLaneShuffle[static_cast<std::size_t>(r)];
    __m128i lane_shuffle;
    std::memcpy(&lane_shuffle, lane.data(), sizeof(lane_shuffle));
    const __m256i shuffle = _mm256_broadcastsi128_si256(lane_shuffle);

    // Lane 0 holds r packed dwords at 0..r-1, lane 1 at 4..4+r-1.
    alignas(32) std::int32_t cross[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    alignas(32) std::int32_t store[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int j = 0; j < r; ++j)
    {
        cross[j] = j;
        cross[r + j] = 4 + j;
    }
    for (int j = 0; j < 2 * r; ++j)
        store[j] = -1;
    const __m256i permute = _mm256_load_si256(reinterpret_cast<const __m256i*>(cross));
    const __m256i store_mask = _mm256_load_si256(reinterpret_cast<const __m256i*>(store));

    const std::size_t groups = count / kVectorGroup;
    const std::size_t group_bytes = kVectorGroup * static_cast<std::size_t>(r);
    for (std::size_t g = 0; g < groups; ++g)
    {
        __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + g * kVectorGroup));
        v = _mm256_shuffle_epi8(v, shuffle);
        v = _mm256_permutevar8x32_epi32(v, permute);
        _mm256_maskstore_epi32(reinterpret_cast<int*>(dst + g * group_bytes), store_mask, v);
    }
    const std::size_t done = groups * kVectorGroup;
    pack_range_scalar(src + done, count - done, r, dst + groups * group_bytes);
}

// Inverse of kLaneShuffle: spread 4r packed bytes back into four words.
inline constexpr std::array<std::array<std::int8_t, 16>, 5> kLaneUnshuffle = [] {
    std::array<std::array<std::int8_t, 16>, 5> table{};
    for (int r = 1; r <= 4; ++r)
    {
        auto& lane = table[static_cast<std::size_t>(r)];
        lane.fill(static_cast<std::int8_t>(0x80));
        for (int k = 0; k < 4; ++k)
            for (int j = 0; j < r; ++j)
                lane[static_cast<std::size_t>(4 * k + 3 - j)] = static_cast<std::int8_t>(k * r + j);
    }
    return table;
}();

__attribute__((target("avx2"))) inline void unpack_range_avx2(const std::uint8_t* src, std::size_t count, int r,
                                                               float* dst) noexcept
{
    const auto& lane = kLaneUnshuffle[static_cast<std::size_t>(r)];
    __m128i lane_shuffle;
    std::memcpy(&lane_shuffle, lane.data(), sizeof(lane_shuffle));
    const __m256i shuffle = _mm256_broadcastsi128_si256(lane_shuffle);

    alignas(32) std::int32_t spread[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    alignas(32) std::int32_t load[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int j = 0; j < r; ++j)
    {
        spread[j] = j;
        spread[4 + j] = r + j;
    }
    for (int j = 0; j < 2 * r; ++j)
        load[j] = -1;
    const __m256i permute = _mm256_load_si256(reinterpret_cast<const __m256i*>(spread));
    const __m256i load_mask = _mm256_load_si256(reinterpret_cast<const __m256i*>(load));

    const std::size_t groups = count / kVectorGroup;
    const std::size_t group_bytes = kVectorGroup * static_cast<std::size_t>(r);
    for (std::size_t g = 0; g < groups; ++g)
    {
        __m256i v = _mm256_maskload_epi32(reinterpret_cast<const int*>(src + g * group_bytes), load_mask);
        v = _mm256_permutevar8x32_epi32(v, permute);
        v = _mm256_shuffle_epi8(v, shuffle);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + g * kVectorGroup), v);
    }
    const std::size_t done = groups * kVectorGroup;
    unpack_range_scalar(src + groups * group_bytes, count - done, r, dst + done);
}

inline bool avx2_supported() noexcept
{
    static const bool supported = __builtin_cpu_supports("avx2");
    return supported;
}

#endif

inline void pack_range_vectorized(const float* src, std::size_t count, int r, std::uint8_t* dst) noexcept
{
#if A2DTWP_HAVE_AVX2_KERNEL
    if (avx2_supported())
    {
        pack_range_avx2(src, count, r, dst);
        return;
    }
#endif
    pack_range_scalar(src, count, r, dst);
}

inline void unpack_range_vectorized(const std::uint8_t* src, std::size_t count, int r, float* dst) noexcept
{
#if A2DTWP_HAVE_AVX2_KERNEL
    if (avx2_supported())
    {
        unpack_range_avx2(src, count, r, dst);
        return;
    }
#endif
    unpack_range_scalar(src, count, r, dst);
}

} // namespace detail

/// True when pack_vectorized() runs the SIMD kernel rather than the scalar fallback.
inline bool vector_kernel_available() noexcept
{
#if A2DTWP_HAVE_AVX2_KERNEL
    return detail::avx2_supported();
#else
    return false;
#endif
}

enum class PackKernel
{
    scalar,
    vectorized
};

inline PackedBlock make_block(std::size_t count, RoundTo round_to)
{
    PackedBlock block;
    block.round_to = round_to;
    block.weight_count = count;
    block.payload.resize(count * static_cast<std::size_t>(round_to.bytes()));
    return block;
}

/// Reference path: one weight at a time.
inline PackedBlock pack(std::span<const float> weights, RoundTo round_to)
{
    PackedBlock block = make_block(weights.size(), round_to);
    detail::pack_range_scalar(weights.data(), weights.size(), round_to.bytes(), block.payload.data());
    return block;
}

/// Groups of eight weights are rearranged in registers; the remainder goes
/// through the scalar path. Byte-identical to pack().
inline PackedBlock pack_vectorized(std::span<const float> weights, RoundTo round_to)
{
    PackedBlock block = make_block(weights.size(), round_to);
    detail::pack_range_vectorized(weights.data(), weights.size(), round_to.bytes(), block.payload.data());
    return block;
}

/// Splits the weights into `worker_count` contiguous chunks, each written by
/// its own thread into a disjoint span of the payload. Byte-identical to pack().
inline PackedBlock pack_parallel(std::span<const float> weights, RoundTo round_to, int worker_count,
                                 PackKernel kernel = PackKernel::vectorized)
{
    if (worker_count < 1)
        throw std::invalid_argument("worker_count must be >= 1");

    PackedBlock block = make_block(weights.size(), round_to);
    const std::size_t n = weights.size();
    const auto r = round_to.bytes();
    const std::size_t workers = static_cast<std::size_t>(worker_count);
    const std::size_t chunk = (n + workers - 1) / workers;

    auto run_chunk = [&](std::size_t k) {
        const std::size_t begin = std::min(n, k * chunk);
        const std::size_t end = std::min(n, begin + chunk);
        std::uint8_t* dst = block.payload.data() + begin * static_cast<std::size_t>(r);
        if (kernel == PackKernel::vectorized)
            detail::pack_range_vectorized(weights.data() + begin, end - begin, r, dst);
        else
            detail::pack_range_scalar(weights.data() + begin, end - begin, r, dst);
    };

    if (workers == 1 || n == 0)
    {
        run_chunk(0);
        return block;
    }

    std::vector<std::jthread> threads;
    threads.reserve(workers - 1);
    for (std::size_t k = 1; k < workers; ++k)
        threads.emplace_back(run_chunk, k);
    run_chunk(0);
    return block;
}

/// Restores 32-bit words into `out`, which must hold exactly weight_count floats.
inline void unpack_into(const PackedBlock& block, std::span<float> out, PackKernel kernel = PackKernel::vectorized)
{
    if (!block.well_formed())
        throw MalformedBlock("payload holds " + std::to_string(block.payload.size()) + " bytes, expected " +
                                 std::to_string(block.expected_payload_size()),
                             block.payload.size());
    if (out.size() != block.weight_count)
        throw std::invalid_argument("unpack destination has " + std::to_string(out.size()) +
                                    " slots for " + std::to_string(block.weight_count) + " weights");
    if (kernel == PackKernel::vectorized)
        detail::unpack_range_vectorized(block.payload.data(), out.size(), block.round_to.bytes(), out.data());
    else
        detail::unpack_range_scalar(block.payload.data(), out.size(), block.round_to.bytes(), out.data());
}

inline std::vector<float> unpack(const PackedBlock& block, PackKernel kernel = PackKernel::vectorized)
{
    if (!block.well_formed())
        throw MalformedBlock("payload holds " + std::to_string(block.payload.size()) + " bytes, expected " +
                                 std::to_string(block.expected_payload_size()),
                             block.payload.size());
    std::vector<float> out(block.weight_count);
    unpack_into(block, out, kernel);
    return out;
}

// ---------------------------------------------------------------------------
// ADT1 container: "ADT1" | version 0x01 | round_to | u64 LE weight_count | payload

inline constexpr std::array<std::uint8_t, 4> kContainerMagic = {'A', 'D', 'T', '1'};
inline constexpr std::uint8_t kContainerVersion = 0x01;
inline constexpr std::size_t kContainerHeaderSize = 14;

inline std::vector<std::uint8_t> serialize(const PackedBlock& block)
{
    if (!block.well_formed())
        throw MalformedBlock("refusing to serialize inconsistent block", block.payload.size());
    std::vector<std::uint8_t> out(kContainerHeaderSize + block.payload.size());
    std::copy(kContainerMagic.begin(), kContainerMagic.end(), out.begin());
    out[4] = kContainerVersion;
    out[5] = static_cast<std::uint8_t>(block.round_to.bytes());
    for (std::size_t i = 0; i < 8; ++i)
        out[6 + i] = static_cast<std::uint8_t>(block.weight_count >> (8 * i));
    std::copy(block.payload.begin(), block.payload.end(), out.begin() + kContainerHeaderSize);
    return out;
}

inline PackedBlock deserialize(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < kContainerHeaderSize)
        throw MalformedBlock("truncated header: " + std::to_string(bytes.size()) + " of " +
                                 std::to_string(kContainerHeaderSize) + " bytes",
                             bytes.size());
    if (!std::equal(kContainerMagic.begin(), kContainerMagic.end(), bytes.begin()))
        throw MalformedBlock("bad magic, expected \"ADT1\"", 0);
    if (bytes[4] != kContainerVersion)
        throw MalformedBlock("unsupported version " + std::to_string(bytes[4]), 4);
    if (bytes[5] < 1 || bytes[5] > 4)
        throw MalformedBlock("round_to byte " + std::to_string(bytes[5]) + " outside 1..4", 5);

    PackedBlock block;
    block.round_to = RoundTo(bytes[5]);
    for (int i = 0; i < 8; ++i)
        block.weight_count |= std::uint64_t{bytes[6 + static_cast<std::size_t>(i)]} << (8 * i);

    const std::size_t available = bytes.size() - kContainerHeaderSize;
    const auto r = static_cast<std::uint64_t>(block.round_to.bytes());
    if (block.weight_count > available / r || block.weight_count * r != available)
    {
        const std::uint64_t wanted = block.weight_count > (UINT64_MAX - kContainerHeaderSize) / r
                                         ? UINT64_MAX
                                         : kContainerHeaderSize + block.weight_count * r;
        throw MalformedBlock("payload size mismatch: header declares " + std::to_string(block.weight_count) +
                                 " weights (" + std::to_string(wanted) + " bytes total) but stream has " + std::to_string(bytes.size()),
                             bytes.size());
    }
    block.payload.assign(bytes.begin() + kContainerHeaderSize, bytes.end());
    return block;
}

} // namespace codec
} // namespace a2dtwp
