#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "unmask/rng.hpp"

using unmask::CounterRng;

// Published known-answer vectors for Philox-4x32-10.
TEST(CounterRng, PhiloxKnownAnswers) {
    using Block = std::array<std::uint32_t, 4>;
    EXPECT_EQ(CounterRng::block({0, 0, 0, 0}, {0, 0}), (Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(CounterRng::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
              (Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(CounterRng::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
              (Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterRng, FirstWordsComeFromBlockZero) {
    CounterRng rng(0, 0);
    EXPECT_EQ(rng.next_u64(), 0xe169c58d6627e8d5ull);
    EXPECT_EQ(rng.next_u64(), 0x9b00dbd8bc57ac4cull);
    const auto b1 = CounterRng::block({1, 0, 0, 0}, {0, 0});
    EXPECT_EQ(rng.next_u64(), (std::uint64_t{b1[1]} << 32) | b1[0]);
}

TEST(CounterRng, SameKeyAndStreamReproduce) {
    CounterRng a(12345, 7);
    CounterRng b(12345, 7);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(CounterRng, StreamsAndKeysDiffer) {
    CounterRng a(1, 0);
    CounterRng b(1, 1);
    CounterRng c(2, 0);
    const auto x = a.next_u64();
    EXPECT_NE(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
}

TEST(CounterRng, UniformRanges) {
    CounterRng rng(3);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double v = rng.uniform_open();
        ASSERT_GT(v, 0.0);
        ASSERT_LT(v, 1.0);
    }
}

TEST(CounterRng, BoundedIsUniform) {
    CounterRng rng(99);
    const int n = 7;
    const int draws = 70000;
    std::vector<int> counts(n, 0);
    for (int i = 0; i < draws; ++i) {
        const auto v = rng.bounded(n);
        ASSERT_LT(v, static_cast<std::uint64_t>(n));
        ++counts[v];
    }
    const double p = 1.0 / n;
    const double sd = std::sqrt(draws * p * (1 - p));
    for (int c : counts) EXPECT_LT(std::abs(c - draws * p), 4 * sd);
}

TEST(CounterRng, BoundedOneIsZero) {
    CounterRng rng(5);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(rng.bounded(1), 0u);
}

TEST(CounterRng, NormalMoments) {
    CounterRng rng(17);
    const int n = 200000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.normal();
        s += g;
        s2 += g * g;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
    EXPECT_LT(std::abs(var - 1.0), 4.0 * std::sqrt(2.0 / n));
}

TEST(CounterRng, SplitIsDeterministic) {
    CounterRng a(8);
    CounterRng b(8);
    CounterRng ca = a.split(3);
    CounterRng cb = b.split(3);
    EXPECT_EQ(ca.key(), cb.key());
    EXPECT_EQ(ca.stream(), 3u);
    EXPECT_EQ(ca.next_u64(), cb.next_u64());
}
