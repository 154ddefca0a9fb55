// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "fedlr/error.hpp"
#include "fedlr/fedsim.hpp"
#include "fedlr/linalg.hpp"

namespace fs = fedlr::fedsim;
namespace tk = fedlr::tasks;
using fs::Matrix;
using fedlr::ErrorKind;

namespace {

void expect_kind(ErrorKind kind, const std::function<void()>& fn) {
    try {
        fn();
        ADD_FAILURE() << "expected an error";
    } catch (const fedlr::Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

fs::ClientTask quadratic_task(const Matrix& target) {
    fs::ClientTask t;
    t.loss = [target](const Matrix& w) { return 0.5 * (w - target).squaredNorm(); };
    t.grad = [target](const Matrix& w, fedlr::Rng&) { return Matrix(w - target); };
    return t;
}

fs::ClientTask zero_task() {
    fs::ClientTask t;
    t.loss = [](const Matrix&) { return 0.0; };
    t.grad = [](const Matrix& w, fedlr::Rng&) { return Matrix(Matrix::Zero(w.rows(), w.cols())); };
    return t;
}

fs::ClientTask nan_task() {
    fs::ClientTask t;
    t.loss = [](const Matrix&) { return 0.0; };
    t.grad = [](const Matrix& w, fedlr::Rng&) {
        return Matrix(Matrix::Constant(w.rows(), w.cols(), std::numeric_limits<double>::quiet_NaN()));
    };
    return t;
}

fs::FedConfig base_config(fs::OptimizerKind opt, fs::Index clients = 1) {
    fs::FedConfig cfg;
    cfg.num_clients = clients;
    cfg.participants = clients;
    cfg.local_steps = 5;
    cfg.rounds = 3;
    cfg.optimizer = opt;
    cfg.aggregation = fs::is_lora(opt) ? fs::AggregationKind::Lifted : fs::AggregationKind::FedAvgDense;
    cfg.rank = 2;
    cfg.lr = 0.1;
    cfg.adam.lr = 0.05;
    return cfg;
}

tk::QuadEnsemble hetero_ensemble(std::uint64_t seed, fs::Index clients = 5, double noise = 0.1) {
    tk::QuadEnsembleConfig qc;
    qc.clients = clients;
    qc.rows = 8;
    qc.cols = 8;
    qc.center_spread = 2.0;
    qc.noise_std = noise;
    return tk::QuadEnsemble::generate(qc, seed);
}

fs::ClientUpdate dense_update(std::size_t id, Matrix delta) {
    fs::ClientUpdate u;
    u.client_id = id;
    u.dense = std::move(delta);
    return u;
}

}  // namespace

TEST(LocalTrain, SingleSgdStepMatchesOptimizer) {
    auto cfg = base_config(fs::OptimizerKind::Sgd);
    cfg.local_steps = 1;
    fedlr::Rng data(1);
    const Matrix target = data.gaussian_matrix(3, 4);
    const Matrix theta0 = data.gaussian_matrix(3, 4);
    const auto gs = fs::GlobalState::initial(theta0, cfg);
    fedlr::Rng batch(2);
    const auto out = fs::local_train(theta0, fs::init_client_state(gs, cfg), quadratic_task(target), cfg, batch);
    EXPECT_EQ(out.theta, fedlr::optim::sgd_step(theta0, theta0 - target, cfg.lr));
    EXPECT_EQ(out.trajectory.size(), 2u);
}

TEST(LocalTrain, ZeroStepsRejected) {
    auto cfg = base_config(fs::OptimizerKind::Sgd);
    cfg.local_steps = 0;
    expect_kind(ErrorKind::InvalidInput, [&] { cfg.validate(); });
    const Matrix theta0 = Matrix::Zero(2, 2);
    fedlr::Rng batch(0);
    expect_kind(ErrorKind::InvalidInput, [&] { fs::local_train(theta0, {}, zero_task(), cfg, batch); });
}

TEST(LocalTrain, ZeroGradientKeepsOrDecays) {
    const Matrix theta0 = Matrix::Constant(3, 3, 2.0);
    auto sgd = base_config(fs::OptimizerKind::Sgd);
    fedlr::Rng batch(0);
    auto gs = fs::GlobalState::initial(theta0, sgd);
    EXPECT_EQ(fs::local_train(theta0, fs::init_client_state(gs, sgd), zero_task(), sgd, batch).theta, theta0);

    auto adam = base_config(fs::OptimizerKind::AdamW);
    adam.adam.weight_decay = 0.1;
    gs = fs::GlobalState::initial(theta0, adam);
    const Matrix out = fs::local_train(theta0, fs::init_client_state(gs, adam), zero_task(), adam, batch).theta;
    const double factor = std::pow(1.0 - adam.adam.lr * 0.1, static_cast<double>(adam.local_steps));
    EXPECT_NEAR((out - factor * theta0).norm(), 0.0, 1e-12);
}

TEST(LocalTrain, QuadraticContractsByOneMinusEta) {
    auto cfg = base_config(fs::OptimizerKind::Sgd);
    cfg.local_steps = 12;
    cfg.lr = 0.3;
    fedlr::Rng data(3);
    const Matrix target = data.gaussian_matrix(4, 4);
    const Matrix theta0 = data.gaussian_matrix(4, 4);
    fedlr::Rng batch(4);
    const auto out = fs::local_train(theta0, {}, quadratic_task(target), cfg, batch);
    for (std::size_t t = 1; t < out.trajectory.size(); ++t) {
        const double before = (out.trajectory[t - 1] - target).norm();
        const double after = (out.trajectory[t] - target).norm();
        EXPECT_LT(after, before);
        EXPECT_NEAR(after, (1.0 - cfg.lr) * before, 1e-12);
    }
}

TEST(LocalTrain, NonFiniteGradientReportsStep) {
    const auto cfg = base_config(fs::OptimizerKind::Sgd);
    fedlr::Rng batch(0);
    try {
        fs::local_train(Matrix::Zero(2, 2), {}, nan_task(), cfg, batch);
        ADD_FAILURE() << "expected divergence";
    } catch (const fedlr::Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Diverged);
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
    }
}

TEST(LocalTrain, LoraKeepsLowRankDelta) {
    auto cfg = base_config(fs::OptimizerKind::LoraAdamW);
    fedlr::Rng data(5);
    const Matrix target = data.gaussian_matrix(6, 6);
    const Matrix theta0 = Matrix::Zero(6, 6);
    const auto gs = fs::GlobalState::initial(theta0, cfg);
    fedlr::Rng batch(6);
    const auto out = fs::local_train(theta0, fs::init_client_state(gs, cfg), quadratic_task(target), cfg, batch);
    EXPECT_GT((out.theta - theta0).norm(), 0.0);
    EXPECT_LE(fedlr::linalg::numeric_rank(out.theta - theta0), cfg.rank);
    EXPECT_LT(out.trajectory.back().norm() - out.theta.norm(), 1e-15);
}

TEST(ServerAggregate, IdenticalUpdatesReturnThatUpdate) {
    fedlr::Rng rng(7);
    const Matrix d = rng.gaussian_matrix(3, 3);
    const std::vector<fs::ClientUpdate> ups{dense_update(0, d), dense_update(1, d), dense_update(2, d)};
    const Matrix theta = Matrix::Zero(3, 3);
    const Matrix out = fs::server_aggregate(theta, ups, {0.2, 0.3, 0.5}, fs::AggregationKind::FedAvgDense);
    EXPECT_NEAR((out - d).norm(), 0.0, 1e-15);
}

TEST(ServerAggregate, TwoDenseDeltasAverage) {
    const std::vector<fs::ClientUpdate> ups{dense_update(0, Matrix::Zero(1, 1)), dense_update(1, Matrix::Constant(1, 1, 2.0))};
    const Matrix out = fs::server_aggregate(Matrix::Zero(1, 1), ups, {0.5, 0.5}, fs::AggregationKind::FedAvgDense);
    EXPECT_EQ(out(0, 0), 1.0);
}

TEST(ServerAggregate, RenormalizesOverParticipants) {
    const auto w = fs::participant_weights({0.2, 0.3, 0.5}, {0, 2});
    ASSERT_EQ(w.size(), 2u);
    EXPECT_NEAR(w[0], 2.0 / 7.0, 1e-15);
    EXPECT_NEAR(w[1], 5.0 / 7.0, 1e-15);
}

TEST(ServerAggregate, EmptyParticipantSetRejected) {
    expect_kind(ErrorKind::InvalidInput, [] { fs::participant_weights({0.5, 0.5}, {}); });
    expect_kind(ErrorKind::InvalidInput,
                [] { fs::server_aggregate(Matrix::Zero(2, 2), {}, {}, fs::AggregationKind::FedAvgDense); });
}

TEST(ServerAggregate, FedAvgStaysInsideNormBall) {
    fedlr::Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<fs::ClientUpdate> ups;
        std::vector<double> w;
        double biggest = 0.0;
        for (int i = 0; i < 5; ++i) {
            ups.push_back(dense_update(i, rng.gaussian_matrix(4, 4)));
            biggest = std::max(biggest, ups.back().dense->norm());
            w.push_back(rng.uniform() + 0.01);
        }
        w = fedlr::adapters::renormalize(w);
        const Matrix out = fs::server_aggregate(Matrix::Zero(4, 4), ups, w, fs::AggregationKind::FedAvgDense);
        EXPECT_LE(out.norm(), biggest + 1e-12);
    }
}

TEST(MatrixView, ZeroInputGivesZeroView) {
    EXPECT_EQ(fs::build_matrix_view(Matrix::Zero(8, 3), 4, 8, 3).norm(), 0.0);
}

TEST(MatrixView, RankAtMostR) {
    fedlr::Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix v = rng.gaussian_matrix(10, 3).cwiseAbs();
        const Matrix view = fs::build_matrix_view(v, 100 + trial, 10, 3);
        EXPECT_EQ(view.rows(), 10);
        EXPECT_EQ(view.cols(), 10);
        EXPECT_LT(fedlr::linalg::tail_distance(view, 3), 1e-12 * view.norm());
    }
}

TEST(MatrixView, RoundTripRecoversProjection) {
    fedlr::Rng rng(10);
    const Matrix v = rng.gaussian_matrix(10, 3).cwiseAbs();
    const Matrix view = fs::build_matrix_view(v, 55, 10, 3);
    const Matrix r = fedlr::linalg::seeded_orthonormal(55, 10, 3);
    EXPECT_LT((view * r.transpose() - v).norm(), 1e-13);
}

TEST(MatrixView, RejectsShapeMismatch) {
    expect_kind(ErrorKind::InvalidInput, [] { fs::build_matrix_view(Matrix::Zero(8, 2), 1, 8, 3); });
}

TEST(InitClientState, AbsentVBarGivesZeroBuffers) {
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW);
    const auto gs = fs::GlobalState::initial(Matrix::Ones(6, 6), cfg);
    const auto s = fs::init_client_state(gs, cfg);
    EXPECT_EQ(s.galore.m.norm(), 0.0);
    EXPECT_EQ(s.galore.v.norm(), 0.0);
    EXPECT_FALSE(s.galore.projector.has_value());
}

TEST(InitClientState, VBarInSeededSpanRoundTrips) {
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW);
    auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
    fedlr::Rng rng(11);
    const Matrix v_proj = rng.gaussian_matrix(8, cfg.rank).cwiseAbs();
    gs.v_bar = fs::build_matrix_view(v_proj, gs.seed, 8, cfg.rank);
    const auto s = fs::init_client_state(gs, cfg);
    ASSERT_TRUE(s.galore.projector.has_value());
    EXPECT_EQ(s.galore.projector->seed, gs.seed);
    EXPECT_EQ(s.galore.m.norm(), 0.0);
    EXPECT_LT((fs::build_matrix_view(s.galore.v, gs.seed, 8, cfg.rank) - *gs.v_bar).norm(), 1e-12);
}

TEST(InitClientState, ProjectedStateIsClamped) {
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW);
    auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
    fedlr::Rng rng(12);
    gs.v_bar = rng.gaussian_matrix(8, 8).cwiseAbs();
    const auto s = fs::init_client_state(gs, cfg);
    EXPECT_GE(s.galore.v.minCoeff(), 0.0);
}

TEST(StateSync, NoneDropsSecondMoment) {
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW);
    auto gs = fs::GlobalState::initial(Matrix::Zero(4, 4), cfg);
    gs.v_bar = Matrix::Ones(4, 4);
    const auto next = fs::state_sync({}, {}, gs, Matrix::Zero(4, 4), cfg);
    EXPECT_FALSE(next.v_bar.has_value());
    EXPECT_EQ(next.seed, gs.seed + 1);
    EXPECT_EQ(next.round, gs.round + 1);
    EXPECT_EQ(fs::init_client_state(next, cfg).galore.v.norm(), 0.0);
}

TEST(StateSync, IdenticalViewsAreReturned) {
    fedlr::Rng rng(13);
    const Matrix v = rng.gaussian_matrix(8, 2).cwiseAbs() + Matrix::Constant(8, 2, 0.1);
    std::vector<fs::ClientUpdate> ups(4);
    for (std::size_t i = 0; i < ups.size(); ++i) {
        ups[i].client_id = i;
        ups[i].v_proj = v;
        ups[i].basis_seed = 77;
    }
    const Matrix expected = fs::build_matrix_view(v, 77, 8, 2).cwiseMax(0.0);
    for (auto mode : {fs::SyncMode::ServerOnly, fs::SyncMode::Ajive}) {
        auto cfg = base_config(fs::OptimizerKind::GaloreAdamW, 4);
        cfg.sync = mode;
        const auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
        const auto next = fs::state_sync(ups, {0.25, 0.25, 0.25, 0.25}, gs, Matrix::Zero(8, 8), cfg);
        ASSERT_TRUE(next.v_bar.has_value());
        EXPECT_LT((*next.v_bar - expected).norm(), 1e-9 * expected.norm()) << fs::to_string(mode);
        EXPECT_GE(next.v_bar->minCoeff(), 0.0);
    }
}

TEST(StateSync, MissingProjectedMomentIsProtocolViolation) {
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW, 2);
    cfg.sync = fs::SyncMode::Ajive;
    const auto gs = fs::GlobalState::initial(Matrix::Zero(4, 4), cfg);
    std::vector<fs::ClientUpdate> ups(2);
    ups[0].v_proj = Matrix::Ones(4, 2);
    expect_kind(ErrorKind::ProtocolViolation, [&] { fs::state_sync(ups, {0.5, 0.5}, gs, Matrix::Zero(4, 4), cfg); });
}

TEST(SampleParticipants, FullParticipationAndDeterminism) {
    const auto all = fs::sample_participants(6, 6, 3);
    ASSERT_EQ(all.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(all[i], i);
    EXPECT_EQ(fs::sample_participants(20, 5, 99), fs::sample_participants(20, 5, 99));
    expect_kind(ErrorKind::InvalidInput, [] { fs::sample_participants(3, 4, 0); });
}

TEST(SampleParticipants, InclusionFrequencyIsUniform) {
    std::vector<int> hits(10, 0);
    for (std::uint64_t s = 0; s < 10000; ++s)
        for (std::size_t id : fs::sample_participants(10, 2, fedlr::derive_seed(321, s))) ++hits[id];
    for (int h : hits) EXPECT_NEAR(h / 10000.0, 0.2, 0.02);
}

TEST(RunRound, SingleClientMatchesLocalTraining) {
    const auto ens = hetero_ensemble(14, 1);
    const auto fed = fs::quad_federation(ens);
    for (auto opt : {fs::OptimizerKind::Sgd, fs::OptimizerKind::AdamW, fs::OptimizerKind::GaloreAdamW}) {
        auto cfg = base_config(opt);
        const auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
        const auto round = fs::run_round(gs, fed, cfg);
        fedlr::Rng batch(fedlr::derive_seed(cfg.master_seed, 2, 0));
        const auto local = fs::local_train(gs.theta_bar, fs::init_client_state(gs, cfg), fed.clients[0], cfg, batch);
        EXPECT_LT((round.state.theta_bar - local.theta).norm(), 1e-12) << fs::to_string(opt);
        EXPECT_NEAR(round.metrics.global_loss, fed.clients[0].loss(local.theta), 1e-12);
        EXPECT_NEAR(round.metrics.mean_client_loss, round.metrics.global_loss, 1e-12);
    }
}

TEST(RunRound, FixedSeedIsBitIdentical) {
    const auto ens = hetero_ensemble(15, 6);
    const auto fed = fs::quad_federation(ens);
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW, 6);
    cfg.participants = 4;
    cfg.sync = fs::SyncMode::Ajive;
    cfg.rounds = 4;
    const auto a = fs::run_federation(Matrix::Zero(8, 8), fed, cfg);
    const auto b = fs::run_federation(Matrix::Zero(8, 8), fed, cfg);
    EXPECT_EQ(a.state.theta_bar, b.state.theta_bar);
    ASSERT_TRUE(a.state.v_bar.has_value());
    EXPECT_EQ(*a.state.v_bar, *b.state.v_bar);
    for (std::size_t k = 0; k < a.rounds.size(); ++k) {
        EXPECT_EQ(a.rounds[k].global_loss, b.rounds[k].global_loss);
        EXPECT_EQ(a.rounds[k].max_local_deviation, b.rounds[k].max_local_deviation);
    }
}

TEST(RunRound, ThreadCountDoesNotChangeResults) {
    const auto ens = hetero_ensemble(16, 8);
    const auto fed = fs::quad_federation(ens);
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW, 8);
    cfg.sync = fs::SyncMode::ServerOnly;
    setenv("FEDLR_THREADS", "1", 1);
    const auto a = fs::run_federation(Matrix::Zero(8, 8), fed, cfg);
    setenv("FEDLR_THREADS", "3", 1);
    const auto b = fs::run_federation(Matrix::Zero(8, 8), fed, cfg);
    unsetenv("FEDLR_THREADS");
    EXPECT_EQ(a.state.theta_bar, b.state.theta_bar);
    for (std::size_t k = 0; k < a.rounds.size(); ++k) {
        EXPECT_EQ(a.rounds[k].global_loss, b.rounds[k].global_loss);
        EXPECT_EQ(a.rounds[k].mean_client_loss, b.rounds[k].mean_client_loss);
        EXPECT_EQ(a.rounds[k].aggregate_tail, b.rounds[k].aggregate_tail);
        EXPECT_EQ(a.rounds[k].max_local_deviation, b.rounds[k].max_local_deviation);
    }
}

TEST(RunRound, AdapterAggregatesShowMismatchSignature) {
    const auto ens = hetero_ensemble(17, 5, 0.0);
    const auto fed = fs::quad_federation(ens);
    for (auto mode : {fs::AggregationKind::FactorProduct, fs::AggregationKind::FrozenA, fs::AggregationKind::Lifted}) {
        auto cfg = base_config(fs::OptimizerKind::LoraSgd, 5);
        cfg.aggregation = mode;
        cfg.lr = 0.05;
        const auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
        const auto r = fs::run_round(gs, fed, cfg);
        const double scale = (r.state.theta_bar - gs.theta_bar).norm();
        ASSERT_GT(scale, 0.0);
        if (mode == fs::AggregationKind::Lifted)
            EXPECT_GT(r.metrics.aggregate_tail, 1e-3 * scale);
        else
            EXPECT_LT(r.metrics.aggregate_tail, 1e-10 * scale) << fs::to_string(mode);
    }
}

TEST(RunRound, GaloreUplinkIsTwoProjectedBuffersAndASeed) {
    const auto ens = hetero_ensemble(18, 3);
    const auto fed = fs::quad_federation(ens);
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW, 3);
    cfg.sync = fs::SyncMode::Ajive;
    auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
    for (int k = 0; k < 3; ++k) {
        const auto r = fs::run_round(gs, fed, cfg);
        EXPECT_EQ(r.metrics.uplink_floats, 3 * 2 * 8 * cfg.rank);
        EXPECT_EQ(r.metrics.uplink_seeds, 3);
        gs = r.state;
    }
}

TEST(RunRound, SeededDeltaIsLossless) {
    const auto ens = hetero_ensemble(19, 1);
    const auto fed = fs::quad_federation(ens);
    auto cfg = base_config(fs::OptimizerKind::GaloreAdamW);
    const auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
    fedlr::Rng batch(3);
    const auto local = fs::local_train(gs.theta_bar, fs::init_client_state(gs, cfg), fed.clients[0], cfg, batch);
    const auto up = fs::make_update(0, gs.theta_bar, local, gs, cfg, 0.0);
    ASSERT_TRUE(up.factors.has_value());
    ASSERT_TRUE(up.factors->basis_seed.has_value());
    EXPECT_LT((up.delta() - (local.theta - gs.theta_bar)).norm(), 1e-13);
}

TEST(RunRound, DivergedClientIsDropped) {
    const auto ens = hetero_ensemble(20, 3);
    auto fed = fs::quad_federation(ens);
    fed.clients[1] = nan_task();
    auto cfg = base_config(fs::OptimizerKind::Sgd, 3);
    const auto gs = fs::GlobalState::initial(Matrix::Zero(8, 8), cfg);
    const auto r = fs::run_round(gs, fed, cfg);
    EXPECT_EQ(r.metrics.diverged, 1);
    EXPECT_FALSE(r.metrics.failed);
    EXPECT_EQ(r.survivors, (std::vector<std::size_t>{0, 2}));
    EXPECT_TRUE(std::isfinite(r.metrics.global_loss));

    for (auto& c : fed.clients) c = nan_task();
    const auto all = fs::run_federation(Matrix::Zero(8, 8), fed, cfg);
    ASSERT_EQ(all.rounds.size(), 1u);
    EXPECT_TRUE(all.rounds[0].failed);
}

TEST(RunRound, ConfigCombinationsValidated) {
    auto cfg = base_config(fs::OptimizerKind::Sgd, 4);
    cfg.participants = 5;
    expect_kind(ErrorKind::InvalidInput, [&] { cfg.validate(); });
    cfg = base_config(fs::OptimizerKind::LoraAdamW, 4);
    cfg.aggregation = fs::AggregationKind::FedAvgDense;
    expect_kind(ErrorKind::InvalidInput, [&] { cfg.validate(); });
    cfg = base_config(fs::OptimizerKind::AdamW, 4);
    cfg.sync = fs::SyncMode::Ajive;
    expect_kind(ErrorKind::InvalidInput, [&] { cfg.validate(); });
    cfg = base_config(fs::OptimizerKind::Sgd, 2);
    cfg.client_weights = {0.3, 0.3};
    expect_kind(ErrorKind::InvalidInput, [&] { cfg.validate(); });
}

TEST(Barrier, IdenticalEndpointsGiveZero) {
    const Matrix a = Matrix::Ones(3, 3);
    EXPECT_EQ(fs::barrier(a, a, [](const Matrix& w) { return w.squaredNorm(); }, 11), 0.0);
}

TEST(Barrier, ConvexLossHasNoBarrier) {
    fedlr::Rng rng(21);
    const Matrix h = rng.gaussian_matrix(4, 4).cwiseAbs();
    auto loss = [&](const Matrix& w) { return 0.5 * (h.array() * w.array().square()).sum(); };
    for (int trial = 0; trial < 20; ++trial)
        EXPECT_LE(fs::barrier(rng.gaussian_matrix(4, 4), rng.gaussian_matrix(4, 4), loss, 21), 1e-12);
}

TEST(Barrier, TwoBasinsOfSoftminLandscape) {
    const auto land = tk::SoftminLandscape::build({});
    const Matrix sharp = Matrix::Zero(land.dim, land.dim);
    auto loss = [&](const Matrix& w) { return tk::softmin_loss(w, land).loss; };
    EXPECT_GT(fs::barrier(land.flat_center(), sharp, loss, 51), 0.05);
    expect_kind(ErrorKind::InvalidInput, [&] { fs::barrier(sharp, sharp, loss, 2); });
}
