// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fedlr/adapters.hpp"
#include "fedlr/error.hpp"
#include "fedlr/linalg.hpp"
#include "fedlr/random.hpp"

namespace ad = fedlr::adapters;
using ad::Matrix;

namespace {

Matrix gaussian(std::uint64_t seed, Eigen::Index r, Eigen::Index c) {
    fedlr::Rng rng(seed);
    return rng.gaussian_matrix(r, c);
}

std::vector<ad::FactorPair> random_clients(std::size_t k, Eigen::Index d, Eigen::Index r, std::uint64_t seed) {
    std::vector<ad::FactorPair> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({gaussian(seed + 2 * i, d, r), gaussian(seed + 2 * i + 1, r, d)});
    return out;
}

}  // namespace

TEST(Lora, InitStartsAtBaseWeight) {
    const Matrix w0 = gaussian(1, 6, 5);
    const auto p = ad::LoraParams::init(w0, 2, 3);
    EXPECT_EQ(p.rank(), 2);
    EXPECT_EQ(ad::effective_weight(p), w0);
    EXPECT_THROW(ad::LoraParams::init(w0, 6, 1), fedlr::Error);
}

TEST(Lora, EffectiveWeight) {
    ad::LoraParams p{gaussian(1, 4, 3), gaussian(2, 2, 3), gaussian(3, 4, 2), 0.5};
    EXPECT_LT((ad::effective_weight(p) - (p.w0 + 0.5 * p.b * p.a)).norm(), 1e-14);
    p.scaling = 0.0;
    EXPECT_EQ(ad::effective_weight(p), p.w0);
}

TEST(FactorProduct, Examples) {
    const auto c = random_clients(1, 5, 2, 10);
    std::vector<ad::FactorPair> same(3, c[0]);
    const std::vector<double> w3{0.2, 0.3, 0.5};
    EXPECT_LT((ad::aggregate_factor_product(same, w3).delta - c[0].b * c[0].a).norm(), 1e-13);

    const auto many = random_clients(3, 5, 2, 20);
    const std::vector<double> pick{0.0, 1.0, 0.0};
    EXPECT_LT((ad::aggregate_factor_product(many, pick).delta - many[1].b * many[1].a).norm(), 1e-13);

    const auto two = random_clients(2, 5, 2, 30);
    const std::vector<double> half{0.5, 0.5};
    const Matrix expect = (0.5 * (two[0].b + two[1].b)) * (0.5 * (two[0].a + two[1].a));
    EXPECT_LT((ad::aggregate_factor_product(two, half).delta - expect).norm(), 1e-13);
    EXPECT_THROW(ad::aggregate_factor_product(two, std::vector<double>{0.5, 0.6}), fedlr::Error);
}

TEST(FrozenA, Examples) {
    const Matrix a0 = gaussian(1, 2, 6);
    const Matrix b = gaussian(2, 6, 2);
    std::vector<Matrix> same(4, b);
    const std::vector<double> w4{0.25, 0.25, 0.25, 0.25};
    EXPECT_LT((ad::aggregate_frozen_a(same, a0, w4).delta - b * a0).norm(), 1e-13);

    std::vector<Matrix> bs{gaussian(3, 6, 2), gaussian(4, 6, 2)}, scaled;
    for (const auto& x : bs) scaled.push_back(3.0 * x);
    const std::vector<double> w2{0.3, 0.7};
    EXPECT_LT((ad::aggregate_frozen_a(scaled, a0, w2).delta - 3.0 * ad::aggregate_frozen_a(bs, a0, w2).delta).norm(), 1e-12);
    EXPECT_LT(fedlr::linalg::tail_distance(ad::aggregate_frozen_a(bs, a0, w2).delta, 2), 1e-12);
}

TEST(Lifted, IdenticalClientsStayLowRank) {
    const auto c = random_clients(1, 8, 2, 40);
    std::vector<ad::FactorPair> same(3, c[0]);
    const auto d = ad::aggregate_lifted(same, std::vector<double>{0.2, 0.3, 0.5});
    EXPECT_LT((d.delta - c[0].b * c[0].a).norm(), 1e-12);
    EXPECT_LE(fedlr::linalg::numeric_rank(d.delta), 2);
}

TEST(Lifted, OrthogonalRankOneClientsAddUp) {
    const Matrix e = Matrix::Identity(5, 5);
    std::vector<ad::FactorPair> clients;
    for (int i = 0; i < 3; ++i) clients.push_back({e.col(i), e.col(i).transpose()});
    const std::vector<double> w{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto report = ad::mismatch_report(ad::aggregate_lifted(clients, w), 1);
    EXPECT_EQ(report.numeric_rank, 3);
}

TEST(Lifted, OrthogonalClientsReachKr) {
    // 4 clients of rank 2 on disjoint coordinate blocks of a 6x6 matrix: rank min(8, 6).
    std::vector<ad::FactorPair> clients;
    for (int i = 0; i < 4; ++i) {
        Matrix b = Matrix::Zero(6, 2), a = Matrix::Zero(2, 6);
        for (int j = 0; j < 2; ++j) {
            const int idx = (2 * i + j) % 6;
            b(idx, j) = 1.0 + i;
            a(j, (idx + 1) % 6) = 1.0;
        }
        clients.push_back({b, a});
    }
    const auto d = ad::aggregate_lifted(clients, std::vector<double>(4, 0.25));
    EXPECT_EQ(ad::mismatch_report(d, 2).numeric_rank, 6);
}

TEST(Lifted, MisalignedClientsLeaveTailWhileFactorProductDoesNot) {
    const auto clients = random_clients(5, 16, 2, 50);
    const std::vector<double> w(5, 0.2);
    const auto lifted = ad::aggregate_lifted(clients, w);
    const auto fp = ad::aggregate_factor_product(clients, w);
    EXPECT_GT(ad::mismatch_report(lifted, 2).tail, 0.1 * lifted.delta.norm());
    EXPECT_LT(ad::mismatch_report(fp, 2).tail, 1e-10 * fp.delta.norm());
}

TEST(Aggregation, AffineInClientInputs) {
    const auto c1 = random_clients(3, 6, 2, 60), c2 = random_clients(3, 6, 2, 70);
    const std::vector<double> w{0.1, 0.6, 0.3};
    std::vector<ad::FactorPair> mix;
    for (std::size_t i = 0; i < 3; ++i) mix.push_back({c1[i].b, 0.4 * c1[i].a + 0.6 * c2[i].a});
    std::vector<ad::FactorPair> left, right;
    for (std::size_t i = 0; i < 3; ++i) {
        left.push_back({c1[i].b, c1[i].a});
        right.push_back({c1[i].b, c2[i].a});
    }
    const Matrix lhs = ad::aggregate_lifted(mix, w).delta;
    const Matrix rhs = 0.4 * ad::aggregate_lifted(left, w).delta + 0.6 * ad::aggregate_lifted(right, w).delta;
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
    const Matrix fp_lhs = ad::aggregate_factor_product(mix, w).delta;
    const Matrix fp_rhs = 0.4 * ad::aggregate_factor_product(left, w).delta + 0.6 * ad::aggregate_factor_product(right, w).delta;
    EXPECT_LT((fp_lhs - fp_rhs).norm(), 1e-12);
}

TEST(Mismatch, ZeroDelta) {
    const auto r = ad::mismatch_report(Matrix::Zero(4, 4), 2);
    EXPECT_EQ(r.tail, 0.0);
    EXPECT_EQ(r.numeric_rank, 0);
}

TEST(Weights, ValidationAndRenormalize) {
    EXPECT_NO_THROW(ad::check_weights(std::vector<double>{0.5, 0.5}, 2));
    EXPECT_THROW(ad::check_weights(std::vector<double>{0.5, 0.5}, 3), fedlr::Error);
    EXPECT_THROW(ad::check_weights(std::vector<double>{-0.5, 1.5}, 2), fedlr::Error);
    const auto r = ad::renormalize(std::vector<double>{1.0, 3.0});
    EXPECT_DOUBLE_EQ(r[0], 0.25);
    EXPECT_DOUBLE_EQ(r[1], 0.75);
    EXPECT_STREQ(ad::to_string(ad::AggregationMode::FrozenA), "frozen_a");
}
