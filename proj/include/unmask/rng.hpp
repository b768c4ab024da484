#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace unmask {

/**
 * Counter-based generator (Philox-4x32-10).
 *
 * A generator is identified by a 64-bit key (the seed) and a 64-bit stream
 * id; the 128-bit Philox counter is (block index, stream id). Two generators
 * with the same (key, stream) produce the same sequence on every platform, and
 * distinct streams of one key are statistically independent.
 *
 * Stream rule used throughout the library:
 *   - Monte Carlo trial t of a run seeded with s draws from CounterRng(s, t).
 *   - sample_schedule draws one 64-bit sub-key from its caller's generator and
 *     gives step k the stream CounterRng(sub_key, k).
 *
 * All derived variates (uniform reals, bounded integers, normals) are computed
 * here rather than through <random> distributions, whose algorithms are
 * implementation-defined.
 */
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0) noexcept
        : key_(key), stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return next_u64(); }

    std::uint64_t next_u64() noexcept {
        if (cached_ == 0) {
            refill();
        }
        --cached_;
        return buffer_[cached_];
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform01() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform on the open interval (0, 1).
    double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer on [0, n) for n >= 1 (Lemire's method with rejection).
    std::uint64_t bounded(std::uint64_t n) noexcept {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller (one variate per call; the pair's second half is discarded).
    double normal() noexcept {
        const double u1 = uniform_open();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Child generator on an independent stream of a freshly drawn key.
    CounterRng split(std::uint64_t stream) noexcept { return CounterRng(next_u64(), stream); }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// One Philox-4x32-10 block: 10 rounds over counter ctr with key k.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> k) noexcept {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += 0x9E3779B9u;
            k[1] += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    void refill() noexcept {
        const auto out = block({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                               {static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)});
        ++block_;
        buffer_[1] = (std::uint64_t{out[1]} << 32) | out[0];
        buffer_[0] = (std::uint64_t{out[3]} << 32) | out[2];
        cached_ = 2;
    }

    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int cached_ = 0;
};

}  // namespace unmask
