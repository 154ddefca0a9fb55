// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedlr/adapters.hpp"
#include "fedlr/optim.hpp"
#include "fedlr/random.hpp"
#include "fedlr/tasks.hpp"

namespace fedlr::fedsim {

using linalg::Index;
using linalg::Matrix;

enum class OptimizerKind { Sgd, Momentum, AdamW, GaloreAdamW, LoraAdamW, LoraSgd };
enum class AggregationKind { FedAvgDense, FactorProduct, FrozenA, Lifted };
enum class SyncMode { None, ServerOnly, Ajive };

const char* to_string(OptimizerKind kind);
const char* to_string(AggregationKind kind);
const char* to_string(SyncMode mode);
OptimizerKind optimizer_from_string(const std::string& name);
AggregationKind aggregation_from_string(const std::string& name);
SyncMode sync_mode_from_string(const std::string& name);

bool is_lora(OptimizerKind kind);

struct FedConfig {
    Index num_clients = 10;   // M
    Index participants = 10;  // K per round
    Index local_steps = 10;   // T
    Index rounds = 10;
    std::vector<double> client_weights;  // p_i; empty means uniform
    OptimizerKind optimizer = OptimizerKind::GaloreAdamW;
    AggregationKind aggregation = AggregationKind::FedAvgDense;
    SyncMode sync = SyncMode::None;
    Index rank = 4;
    std::uint64_t master_seed = 0;
    optim::AdamHyper adam;
    double lr = 0.05;        // sgd, momentum and lora_sgd step size
    double momentum = 0.9;   // heavy-ball coefficient
    long galore_refresh = 200;
    long galore_adaptive_refreshes = 0;  // data-driven refreshes when no synced state is available
    double lora_scaling = 1.0;
    std::optional<Index> sync_joint_rank;  // defaults to rank

    /// Throws InvalidInput on out-of-range fields or incompatible combinations:
    /// LoRA optimizers need an adapter aggregation, dense ones need fedavg_dense,
    /// and state sync needs galore_adamw.
    void validate() const;
    /// client_weights, or uniform weights when empty.
    std::vector<double> weights() const;
};

/// One client's objective. grad draws any stochasticity from the supplied stream.
struct ClientTask {
    std::function<double(const Matrix&)> loss;
    std::function<Matrix(const Matrix&, Rng&)> grad;
};

struct Federation {
    std::vector<ClientTask> clients;
    std::function<double(const Matrix&)> global_loss;
};

/// Clients F_i of a quadratic ensemble; gradients follow tasks::quad_grad.
Federation quad_federation(const tasks::QuadEnsemble& ens);

/// delta = left * right. The factor on the seeded side is a regenerable basis
/// when basis_seed is set and is not counted as payload.
struct FactorizedDelta {
    Matrix left;
    Matrix right;
    std::optional<std::uint64_t> basis_seed;
    optim::Side seeded_side = optim::Side::Right;

    Matrix reconstruct() const { return left * right; }
};

struct ClientUpdate {
    std::size_t client_id = 0;
    std::optional<Matrix> dense;              // dense optimizers
    std::optional<FactorizedDelta> factors;   // galore and lora
    std::optional<Matrix> v_proj;             // projected second moment, >= 0
    std::uint64_t basis_seed = 0;             // seed of the basis v_proj lives in
    optim::Side side = optim::Side::Right;
    double terminal_loss = 0.0;

    Matrix delta() const;
    /// Uplinked floats: delta payload plus v_proj. Seeds are counted separately.
    Index payload_floats() const;
    Index payload_seeds() const;
};

struct GlobalState {
    Matrix theta_bar;
    std::optional<Matrix> v_bar;  // dense, >= 0
    Index round = 0;
    std::uint64_t seed = 0;  // s_k

    static GlobalState initial(Matrix theta0, const FedConfig& cfg);
};

/// Optimizer state of one client for one round; only the members of the
/// configured optimizer are used.
struct ClientState {
    optim::MomentumState momentum;
    optim::DenseAdamState adam;
    optim::GaLoreState galore;
    Matrix lora_a;
    Matrix lora_b;
    optim::DenseAdamState adam_a;
    optim::DenseAdamState adam_b;
};

/// Round-start client state. galore_adamw with v_bar present gets
/// v0 = clamp(project(v_bar)) in the seeded basis s_k, m0 = 0 and that basis as
/// its preset projector; every other case starts from zero buffers.
ClientState init_client_state(const GlobalState& gs, const FedConfig& cfg);

struct LocalResult {
    Matrix theta;                     // effective weights after T steps
    ClientState state;
    std::vector<Matrix> trajectory;   // T + 1 effective weights, starting at theta0
};

/// T steps of the configured optimizer on one client task. Throws Diverged,
/// naming the step, when a gradient or iterate becomes non-finite.
LocalResult local_train(const Matrix& theta0, const ClientState& init, const ClientTask& task, const FedConfig& cfg,
                        Rng& batch_rng);

/// Packs a client's round into its upload. galore_adamw sends the projected
/// update and v_proj in a seeded basis when the whole round used one seeded
/// projector (and no weight decay); otherwise the delta is rank-r truncated and
/// a data-driven v is first moved into the seeded basis s_k.
ClientUpdate make_update(std::size_t client_id, const Matrix& theta0, const LocalResult& local, const GlobalState& gs,
                         const FedConfig& cfg, double terminal_loss);

/// p_i / sum_{j in participants} p_j.
std::vector<double> participant_weights(const std::vector<double>& weights, const std::vector<std::size_t>& ids);

/// New global weights theta_bar + aggregate(deltas). Weights must already be
/// renormalized over the updates.
Matrix server_aggregate(const Matrix& theta_bar, const std::vector<ClientUpdate>& updates,
                        const std::vector<double>& weights, AggregationKind mode);

/// v_proj R for a right basis R = seeded_orthonormal(seed, n, r) (r x n).
Matrix build_matrix_view(const Matrix& v_proj, std::uint64_t basis_seed, Index n, Index r);
/// Side-aware form: L v_proj for a left basis L of rows.
Matrix build_matrix_view(const Matrix& v_proj, std::uint64_t basis_seed, Index rows, Index cols, Index r,
                         optim::Side side);

/// Server-side second-moment synchronization; advances round and seed.
/// Views v_proj R are signed in general and enter the average or AJIVE as is;
/// only the synchronized v_bar is clamped at 0.
GlobalState state_sync(const std::vector<ClientUpdate>& updates, const std::vector<double>& weights,
                       const GlobalState& gs, Matrix theta_next, const FedConfig& cfg);

/// K distinct clients drawn uniformly, sorted.
std::vector<std::size_t> sample_participants(Index num_clients, Index participants, std::uint64_t round_seed);

struct RoundMetrics {
    Index round = 0;
    double global_loss = 0.0;
    double mean_client_loss = 0.0;
    double aggregate_tail = 0.0;       // tail_distance of the aggregate delta beyond rank r
    double max_local_deviation = 0.0;  // max over clients and steps of distance to the weighted mean iterate
    SyncMode sync_mode = SyncMode::None;
    Index participants = 0;
    Index diverged = 0;
    bool failed = false;               // no participant survived
    Index uplink_floats = 0;           // total over surviving participants
    Index uplink_seeds = 0;
    double wall_ms = 0.0;
};

struct RoundResult {
    GlobalState state;
    RoundMetrics metrics;
    std::vector<double> client_losses;  // per surviving participant, in id order
    std::vector<std::size_t> survivors;
};

/// Broadcast, concurrent local training, aggregation and sync for one round.
/// Diverged clients are dropped and the remaining weights renormalized; when
/// none survive the state is returned unchanged and the round is marked failed.
RoundResult run_round(const GlobalState& gs, const Federation& fed, const FedConfig& cfg);

struct RunResult {
    GlobalState state;
    std::vector<RoundMetrics> rounds;
};

/// cfg.rounds rounds from theta0. Stops early after a failed round.
RunResult run_federation(const Matrix& theta0, const Federation& fed, const FedConfig& cfg);

/// max over a uniform grid of lambda in [0, 1] of
/// f(lambda a + (1 - lambda) b) - (lambda f(a) + (1 - lambda) f(b)).
double barrier(const Matrix& a, const Matrix& b, const std::function<double(const Matrix&)>& loss, Index grid);

}  // namespace fedlr::fedsim
