// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "fedlr/error.hpp"
#include "fedlr/random.hpp"

using fedlr::Rng;

TEST(Rng, MatchesReferenceXoshiroStream) {
    Rng a(42);
    EXPECT_EQ(a.next_u64(), 0x15780b2e0c2ec716ULL);
    EXPECT_EQ(a.next_u64(), 0x6104d9866d113a7eULL);
    EXPECT_EQ(a.next_u64(), 0xae17533239e499a1ULL);
    Rng b(0);
    EXPECT_EQ(b.next_u64(), 0x99ec5f36cb75f2b4ULL);
    EXPECT_EQ(b.next_u64(), 0xbf6e1f784956452aULL);
}

TEST(Rng, BoxMullerPairMatchesReference) {
    Rng r(7);
    EXPECT_DOUBLE_EQ(r.normal(), -0.15157274547711355);
    EXPECT_DOUBLE_EQ(r.normal(), 0.8298970879692569);
}

TEST(Rng, DeriveSeedMatchesReference) { EXPECT_EQ(fedlr::derive_seed(1, 2), 0xf210541a6ee1f725ULL); }

TEST(Rng, DeriveSeedSeparatesStreams) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 64; ++s) seen.insert(fedlr::derive_seed(5, s));
    EXPECT_EQ(seen.size(), 64u);
    EXPECT_NE(fedlr::derive_seed(5, 1, 2), fedlr::derive_seed(5, 2, 1));
}

TEST(Rng, UniformMomentsAndRange) {
    Rng r(3);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, NormalMoments) {
    Rng r(11);
    double s1 = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s1 += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, GammaMeanMatchesShape) {
    for (double shape : {0.3, 1.0, 4.5}) {
        Rng r(19);
        double sum = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) sum += r.gamma(shape);
        EXPECT_NEAR(sum / n, shape, 0.03 * std::max(1.0, shape)) << "shape " << shape;
    }
    Rng r(1);
    EXPECT_THROW(r.gamma(0.0), fedlr::Error);
}

TEST(Rng, UniformIndexStaysInBounds) {
    Rng r(2);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.uniform_index(7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
    EXPECT_THROW(r.uniform_index(0), fedlr::Error);
}

TEST(Rng, SampleWithoutReplacementIsSortedAndDistinct) {
    Rng r(9);
    const auto pick = fedlr::sample_without_replacement(20, 8, r);
    ASSERT_EQ(pick.size(), 8u);
    for (std::size_t i = 1; i < pick.size(); ++i) EXPECT_LT(pick[i - 1], pick[i]);
    EXPECT_LT(pick.back(), 20u);
    EXPECT_THROW(fedlr::sample_without_replacement(3, 4, r), fedlr::Error);
}

TEST(Rng, GaussianMatrixFillsRowMajor) {
    Rng a(5), b(5);
    const Eigen::MatrixXd m = a.gaussian_matrix(2, 3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), b.normal());
}
