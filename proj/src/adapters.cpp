// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/adapters.hpp"

#include <cmath>
#include <numeric>

#include "fedlr/error.hpp"
#include "fedlr/random.hpp"

namespace fedlr::adapters {
namespace {

template <typename Get>
Matrix weighted_sum(std::size_t n, std::span<const double> weights, Get&& get) {
    Matrix acc = weights[0] * get(0);
    for (std::size_t i = 1; i < n; ++i) acc += weights[i] * get(i);
    return acc;
}

void check_pairs(std::span<const FactorPair> clients) {
    require(!clients.empty(), ErrorKind::InvalidInput, "aggregate: no clients");
    for (const auto& c : clients) {
        require(c.b.rows() == clients[0].b.rows() && c.b.cols() == clients[0].b.cols() &&
                    c.a.rows() == clients[0].a.rows() && c.a.cols() == clients[0].a.cols(),
                ErrorKind::InvalidInput, "aggregate: client factor shapes differ");
        require(c.b.cols() == c.a.rows(), ErrorKind::InvalidInput, "aggregate: b and a ranks differ");
    }
}

}  // namespace

const char* to_string(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::FactorProduct: return "factor_product";
        case AggregationMode::FrozenA: return "frozen_a";
        case AggregationMode::Lifted: return "lifted";
    }
    return "unknown";
}

void LoraParams::validate() const {
    require(a.cols() == w0.cols() && b.rows() == w0.rows() && b.cols() == a.rows(), ErrorKind::InvalidInput,
            "lora: factor shapes inconsistent with base weight");
    require(rank() <= std::min(w0.rows(), w0.cols()), ErrorKind::InvalidInput, "lora: rank exceeds min(d_out, d_in)");
}

LoraParams LoraParams::init(Matrix w0, Index r, std::uint64_t seed, double scaling) {
    require(r >= 1 && r <= std::min(w0.rows(), w0.cols()), ErrorKind::InvalidInput, "lora: rank out of range");
    Rng rng(seed);
    LoraParams p;
    p.a = rng.gaussian_matrix(r, w0.cols()) / std::sqrt(static_cast<double>(r));
    p.b = Matrix::Zero(w0.rows(), r);
    p.w0 = std::move(w0);
    p.scaling = scaling;
    return p;
}

Matrix effective_weight(const LoraParams& p) {
    p.validate();
    return p.w0 + p.scaling * (p.b * p.a);
}

void check_weights(std::span<const double> weights, std::size_t expected) {
    require(weights.size() == expected, ErrorKind::InvalidInput, "weights: count does not match clients");
    double sum = 0.0;
    for (double w : weights) {
        require(w >= 0.0 && std::isfinite(w), ErrorKind::InvalidInput, "weights: entries must be finite and nonnegative");
        sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-12, ErrorKind::InvalidInput, "weights: must sum to 1");
}

std::vector<double> renormalize(std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(total > 0.0, ErrorKind::InvalidInput, "renormalize: weights sum to zero");
    std::vector<double> out(weights.begin(), weights.end());
    for (double& w : out) w /= total;
    return out;
}

AggregatedDelta aggregate_factor_product(std::span<const FactorPair> clients, std::span<const double> weights) {
    check_pairs(clients);
    check_weights(weights, clients.size());
    const Matrix b = weighted_sum(clients.size(), weights, [&](std::size_t i) -> const Matrix& { return clients[i].b; });
    const Matrix a = weighted_sum(clients.size(), weights, [&](std::size_t i) -> const Matrix& { return clients[i].a; });
    return {b * a, AggregationMode::FactorProduct};
}

AggregatedDelta aggregate_frozen_a(std::span<const Matrix> client_b, const Matrix& a0, std::span<const double> weights) {
    require(!client_b.empty(), ErrorKind::InvalidInput, "aggregate_frozen_a: no clients");
    for (const auto& b : client_b)
        require(b.rows() == client_b[0].rows() && b.cols() == a0.rows(), ErrorKind::InvalidInput,
                "aggregate_frozen_a: factor shapes inconsistent");
    check_weights(weights, client_b.size());
    const Matrix b = weighted_sum(client_b.size(), weights, [&](std::size_t i) -> const Matrix& { return client_b[i]; });
    return {b * a0, AggregationMode::FrozenA};
}

AggregatedDelta aggregate_lifted(std::span<const FactorPair> clients, std::span<const double> weights) {
    check_pairs(clients);
    check_weights(weights, clients.size());
    Matrix acc = weights[0] * (clients[0].b * clients[0].a);
    for (std::size_t i = 1; i < clients.size(); ++i) acc += weights[i] * (clients[i].b * clients[i].a);
    return {std::move(acc), AggregationMode::Lifted};
}

MismatchReport mismatch_report(const Matrix& delta, Index r) {
    MismatchReport out;
    if (delta.size() == 0 || delta.isZero(0.0)) return out;
    out.tail = linalg::tail_distance(delta, r);
    out.numeric_rank = linalg::numeric_rank(delta);
    return out;
}

}  // namespace fedlr::adapters
