// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "citrus/error.hpp"
#include "citrus/numerics.hpp"
#include "support/oracles.hpp"

namespace citrus {
namespace {

TEST(Softmax, SymmetricPair) {
    const std::vector<float> x{0.0f, 0.0f};
    const auto p = softmax(x);
    EXPECT_NEAR(p[0], 0.5f, 1e-7);
    EXPECT_NEAR(p[1], 0.5f, 1e-7);
}

TEST(Softmax, LogTwoGivesTwoThirds) {
    const std::vector<float> x{std::log(2.0f), 0.0f};
    const auto p = softmax(x);
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-6);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-6);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const std::vector<float> x{1000.0f, 1000.0f, 1000.0f};
    for (float v : softmax(x)) {
        ASSERT_TRUE(std::isfinite(v));
        EXPECT_NEAR(v, 1.0 / 3.0, 1e-6);
    }
}

TEST(Softmax, EmptyInputRaises) {
    try {
        softmax(std::vector<float>{});
        FAIL() << "expected EmptyVector";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyVector);
    }
}

TEST(Softmax, NonFiniteInputRaises) {
    const std::vector<float> x{0.0f, std::numeric_limits<float>::quiet_NaN()};
    EXPECT_THROW(softmax(x), Error);
}

TEST(Softmax, InplaceMatchesCopy) {
    std::vector<float> x{0.3f, -1.2f, 2.5f, 0.0f};
    const auto p = softmax(x);
    softmax_inplace(x);
    EXPECT_EQ(p, x);
}

TEST(SoftmaxProperty, MatchesDoubleOracleAndSumsToOne) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> dist(-30.0f, 30.0f);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<float> x(1 + rng() % 40);
        for (auto& v : x) v = dist(rng);
        const auto p = softmax(x);
        const auto ref = oracle::softmax(std::vector<double>(x.begin(), x.end()));
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            ASSERT_GE(p[i], 0.0f);
            ASSERT_LE(p[i], 1.0f);
            ASSERT_NEAR(p[i], ref[i], 1e-6);
            sum += p[i];
        }
        ASSERT_NEAR(sum, 1.0, 1e-5);
    }
}

TEST(SoftmaxProperty, ShiftInvariant) {
    // Inputs sit on a 1/64 grid and shifts are integers, so x + c is exact in
    // float and any difference comes from softmax itself.
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> grid(-640, 640);
    std::uniform_int_distribution<int> shift(-100, 100);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<float> x(1 + rng() % 16);
        for (auto& v : x) v = static_cast<float>(grid(rng)) / 64.0f;
        const auto c = static_cast<float>(shift(rng));
        std::vector<float> shifted = x;
        for (auto& v : shifted) v += c;
        const auto a = softmax(x);
        const auto b = softmax(shifted);
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-6);
    }
}

TEST(StableTopK, PicksLargest) {
    const std::vector<float> s{0.1f, 0.5f, 0.3f};
    EXPECT_EQ(stable_top_k(s, 2), (RetentionSet{1, 2}));
}

TEST(StableTopK, TieGoesToLowerIndex) {
    const std::vector<float> s{0.4f, 0.4f, 0.2f};
    EXPECT_EQ(stable_top_k(s, 1), (RetentionSet{0}));
}

TEST(StableTopK, KAtLeastLengthReturnsAll) {
    const std::vector<float> s{0.9f, 0.1f, 0.5f};
    EXPECT_EQ(stable_top_k(s, 3), (RetentionSet{0, 1, 2}));
    EXPECT_EQ(stable_top_k(s, 10), (RetentionSet{0, 1, 2}));
}

TEST(StableTopK, ZeroKAndEmptyInput) {
    const std::vector<float> s{0.9f, 0.1f};
    EXPECT_TRUE(stable_top_k(s, 0).empty());
    EXPECT_TRUE(stable_top_k(std::vector<float>{}, 3).empty());
}

TEST(StableTopKProperty, MatchesSortOracleOnTernaryVectors) {
    // Every vector of length <= 7 over {0, 0.5, 1}, every k.
    const float alphabet[3] = {0.0f, 0.5f, 1.0f};
    for (std::size_t n = 1; n <= 7; ++n) {
        std::size_t total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= 3;
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<float> s(n);
            std::size_t c = code;
            for (auto& v : s) {
                v = alphabet[c % 3];
                c /= 3;
            }
            for (std::size_t k = 0; k <= n + 1; ++k) {
                ASSERT_EQ(stable_top_k(s, k), oracle::sort_top_k(s, k));
            }
        }
    }
}

TEST(StableTopKProperty, SortedDuplicateFreeAndSized) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> dist(0, 4);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<float> s(rng() % 30);
        for (auto& v : s) v = static_cast<float>(dist(rng));
        const std::size_t k = rng() % 35;
        const auto r = stable_top_k(s, k);
        ASSERT_EQ(r.size(), std::min(k, s.size()));
        ASSERT_TRUE(std::is_sorted(r.begin(), r.end()));
        ASSERT_EQ(std::set<std::size_t>(r.begin(), r.end()).size(), r.size());
        ASSERT_EQ(r, oracle::sort_top_k(s, k));
    }
}

} // namespace
} // namespace citrus
