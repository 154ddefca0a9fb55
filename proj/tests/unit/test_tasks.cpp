// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "fedlr/error.hpp"
#include "fedlr/linalg.hpp"
#include "fedlr/tasks.hpp"

namespace tk = fedlr::tasks;
using tk::Matrix;

TEST(Dirichlet, LargeAlphaIsNearUniform) {
    const auto labels = tk::balanced_labels(2000, 10);
    const auto part = tk::dirichlet_partition(labels, 8, 1e6, 3);
    for (const auto& p : part.proportions)
        for (double x : p) EXPECT_NEAR(x, 0.1, 0.05);
}

TEST(Dirichlet, PartitionIsBijection) {
    for (double alpha : {0.05, 0.5, 5.0}) {
        const auto labels = tk::balanced_labels(503, 7);
        const auto part = tk::dirichlet_partition(labels, 11, alpha, 17);
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (const auto& a : part.assignments) {
            total += a.size();
            seen.insert(a.begin(), a.end());
        }
        EXPECT_EQ(total, labels.size());
        EXPECT_EQ(seen.size(), labels.size());
        for (const auto& p : part.proportions) {
            double s = 0.0;
            for (double x : p) {
                EXPECT_GE(x, 0.0);
                s += x;
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Dirichlet, SmallAlphaSkewsClasses) {
    const auto labels = tk::balanced_labels(5000, 10);
    EXPECT_LT(tk::mean_classes_above(tk::dirichlet_partition(labels, 50, 0.5, 4), 0.01), 8.5);
}

TEST(Dirichlet, ClassCountMatchesBetaMarginal) {
    // Each proportion is Beta(0.5, 4.5); P(x > 0.01) = 0.76987 (scipy.stats.beta).
    const auto labels = tk::balanced_labels(20000, 10);
    const auto part = tk::dirichlet_partition(labels, 2000, 0.5, 12);
    EXPECT_NEAR(tk::mean_classes_above(part, 0.01), 7.6987, 0.15);
}

TEST(Dirichlet, DeterministicAndValidated) {
    const auto labels = tk::balanced_labels(100, 4);
    EXPECT_EQ(tk::dirichlet_partition(labels, 5, 0.3, 9).assignments, tk::dirichlet_partition(labels, 5, 0.3, 9).assignments);
    EXPECT_THROW(tk::dirichlet_partition(labels, 101, 1.0, 1), fedlr::Error);
    EXPECT_THROW(tk::dirichlet_partition(labels, 5, 0.0, 1), fedlr::Error);
}

class Landscape : public ::testing::Test {
protected:
    tk::SoftminLandscape land = tk::SoftminLandscape::build(tk::LandscapeConfig{});
};

TEST_F(Landscape, GeometryInvariants) {
    EXPECT_LT(std::abs((land.e1.array() * land.e2.array()).sum()), 1e-10);
    EXPECT_NEAR(land.e1.norm(), 1.0, 1e-12);
    EXPECT_NEAR(land.e2.norm(), 1.0, 1e-12);
    // e1's row space lies in the LoRA row space; e2's is orthogonal to it.
    const Matrix q = fedlr::linalg::orthonormalize_columns(land.lora_a0.transpose());
    const Matrix e1_rows = land.e1.transpose();
    EXPECT_LT((e1_rows - q * (q.transpose() * e1_rows)).norm(), 1e-10);
    EXPECT_LT((land.e2 * q).norm(), 1e-10);
}

TEST_F(Landscape, FlatCenterIsDominantMinimum) {
    const auto lg = tk::softmin_loss(land.flat_center(), land);
    const double l2 = tk::sharp_valley(land.flat_center(), land).loss;
    EXPECT_NEAR(lg.loss, 0.0, land.tau * std::exp(-l2 / land.tau) * 1.01);
    EXPECT_LT(lg.grad.norm(), 1e-6);
}

TEST_F(Landscape, SmallTauApproachesHardMin) {
    auto cold = land;
    cold.tau = 1e-4;
    fedlr::Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Matrix w = rng.gaussian_matrix(land.dim, land.dim) * 0.3 + 1.5 * land.e2;
        const double hard = std::min(tk::flat_basin(w, cold).loss, tk::sharp_valley(w, cold).loss);
        EXPECT_LT(std::abs(tk::softmin_loss(w, cold).loss - hard), 1e-3);
    }
}

TEST_F(Landscape, GradientMatchesFiniteDifferences) {
    fedlr::Rng rng(6);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w = 0.3 * rng.gaussian_matrix(land.dim, land.dim) + rng.uniform() * 2.0 * land.e1 + rng.uniform() * 3.0 * land.e2;
        const Matrix g = tk::softmin_loss(w, land).grad;
        Matrix fd(land.dim, land.dim);
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            Matrix wp = w, wm = w;
            wp(k) += h;
            wm(k) -= h;
            fd(k) = (tk::softmin_loss(wp, land).loss - tk::softmin_loss(wm, land).loss) / (2 * h);
        }
        EXPECT_LT((fd - g).norm(), 1e-5 * std::max(1.0, g.norm())) << "trial " << trial;
    }
}

TEST_F(Landscape, StableForLargeLosses) {
    const auto lg = tk::softmin_loss(Matrix::Constant(land.dim, land.dim, 1e3), land);
    EXPECT_TRUE(std::isfinite(lg.loss));
    EXPECT_TRUE(lg.grad.allFinite());
}

TEST_F(Landscape, TrialsAreDeterministic) {
    tk::TrapOptimizer opt;
    opt.steps = 100;
    const auto a = tk::run_landscape_trials(10, tk::TrapMethod::Galore, land, opt, 3);
    const auto b = tk::run_landscape_trials(10, tk::TrapMethod::Galore, land, opt, 3);
    EXPECT_EQ(a.flat_rate, b.flat_rate);
    EXPECT_EQ(a.sharp_rate, b.sharp_rate);
    EXPECT_LE(a.flat_rate + a.sharp_rate, 1.0);
    EXPECT_NEAR(a.flat_rate + a.sharp_rate + a.unconverged_rate, 1.0, 1e-12);
}

TEST_F(Landscape, DivergentStepsCountAsUnconverged) {
    tk::TrapOptimizer opt;
    opt.lr = 30.0;
    opt.steps = 200;
    EXPECT_EQ(tk::run_landscape_trials(3, tk::TrapMethod::FullSgd, land, opt, 1).unconverged_rate, 1.0);
}

TEST(AjiveValidation, NoiselessViewsEqualTruth) {
    tk::AjiveValidationConfig cfg;
    cfg.clients = 4;
    cfg.drift = 0.0;
    cfg.sigma = 0.0;
    const auto data = tk::gen_ajive_validation(cfg, 2);
    for (const auto& v : data.views) EXPECT_EQ(v, data.v_star);
}

TEST(AjiveValidation, RankExpansionBound) {
    const auto data = tk::gen_ajive_validation(60, 40, 3, 0.3, 7);
    EXPECT_LE(fedlr::linalg::numeric_rank(data.v_star), 15);
    EXPECT_LT(fedlr::linalg::tail_distance(data.v_star, 15), 1e-8 * data.v_star.norm());
    EXPECT_EQ(fedlr::linalg::numeric_rank(data.g_star), 5);
}

TEST(AjiveValidation, Reproducible) {
    const auto a = tk::gen_ajive_validation(20, 15, 3, 0.3, 11);
    const auto b = tk::gen_ajive_validation(20, 15, 3, 0.3, 11);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.views[i], b.views[i]);
    EXPECT_THROW(tk::gen_ajive_validation(4, 15, 3, 0.3, 1), fedlr::Error);
}

TEST(QuadEnsemble, ZeroGradientAtOwnCenter) {
    tk::QuadEnsembleConfig cfg;
    const auto ens = tk::QuadEnsemble::generate(cfg, 1);
    const auto g = tk::quad_grad(ens.centers[2], 2, ens, 5);
    EXPECT_EQ(g.grad.norm(), 0.0);
}

TEST(QuadEnsemble, DriftTermsAverageToZero) {
    tk::QuadEnsembleConfig cfg;
    cfg.dirichlet_weights = true;
    cfg.noise_std = 0.5;
    const auto ens = tk::QuadEnsemble::generate(cfg, 2);
    fedlr::Rng rng(3);
    const Matrix w = rng.gaussian_matrix(cfg.rows, cfg.cols);
    Matrix sum = Matrix::Zero(cfg.rows, cfg.cols);
    for (std::size_t i = 0; i < ens.size(); ++i) sum += ens.weights[i] * tk::quad_grad(w, i, ens, rng).drift;
    EXPECT_LT(sum.norm(), 1e-12);
}

TEST(QuadEnsemble, ClippingBoundsNorm) {
    tk::QuadEnsembleConfig cfg;
    cfg.noise_std = 1.0;
    cfg.clip = 0.7;
    const auto ens = tk::QuadEnsemble::generate(cfg, 3);
    fedlr::Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        const Matrix w = 3.0 * rng.gaussian_matrix(cfg.rows, cfg.cols);
        EXPECT_LE(tk::quad_grad(w, static_cast<std::size_t>(t) % ens.size(), ens, rng).grad.norm(), 0.7 + 1e-12);
    }
}

TEST(QuadEnsemble, ConstantsAreConsistent) {
    tk::QuadEnsembleConfig cfg;
    const auto ens = tk::QuadEnsemble::generate(cfg, 4);
    double lmax = 0.0;
    for (const auto& h : ens.curvatures) lmax = std::max(lmax, h.maxCoeff());
    EXPECT_EQ(ens.smoothness, lmax);
    EXPECT_NEAR(ens.pl_constant, ens.mean_curvature.minCoeff(), 0.0);
    EXPECT_GE(ens.het_b, 1.0);
    EXPECT_LT(ens.global_grad(ens.optimum).norm(), 1e-12);
    EXPECT_NEAR(ens.excess_loss(ens.optimum), 0.0, 1e-14);
    fedlr::Rng rng(8);
    const Matrix w = rng.gaussian_matrix(cfg.rows, cfg.cols);
    const double diff = ens.global_loss(w) - ens.global_loss(ens.optimum);
    EXPECT_NEAR(ens.excess_loss(w), diff, 1e-10 * std::max(1.0, diff));
}

TEST(QuadEnsemble, HeterogeneityBoundHoldsOnProbes) {
    for (bool hetero_curv : {false, true}) {
        tk::QuadEnsembleConfig cfg;
        if (!hetero_curv) cfg.curvature_max = cfg.curvature_min;
        cfg.dirichlet_weights = true;
        const auto ens = tk::QuadEnsemble::generate(cfg, 5);
        fedlr::Rng rng(6);
        double worst = -1e300;
        for (int probe = 0; probe < 400; ++probe) {
            const Matrix w = ens.optimum + std::pow(10.0, rng.uniform() * 4 - 2) * rng.gaussian_matrix(cfg.rows, cfg.cols);
            double lhs = 0.0;
            for (std::size_t i = 0; i < ens.size(); ++i) lhs += ens.weights[i] * ens.client_grad(w, i).squaredNorm();
            worst = std::max(worst, lhs - ens.het_b * ens.het_b * ens.global_grad(w).squaredNorm());
        }
        EXPECT_LE(worst, ens.het_h * ens.het_h + 1e-8);
        // At the optimum the bound is attained up to the B^2 term, which vanishes.
        double at_opt = 0.0;
        for (std::size_t i = 0; i < ens.size(); ++i) at_opt += ens.weights[i] * ens.client_grad(ens.optimum, i).squaredNorm();
        EXPECT_LE(at_opt, ens.het_h * ens.het_h + 1e-8);
        if (!hetero_curv) {
            EXPECT_EQ(ens.het_b, 1.0);
            EXPECT_NEAR(at_opt, ens.het_h * ens.het_h, 1e-9 * at_opt);
        }
    }
}
