// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace fedlr {

/// xoshiro256** seeded through splitmix64.
///
/// Every stochastic component of the library draws from this generator so
/// that a (seed, call sequence) pair yields identical bits on every platform.
/// Gaussian variates use the polar-free Box-Muller transform
/// z = sqrt(-2 ln u1) cos(2 pi u2), caching the matching sine variate.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform double in (0, 1].
    double uniform_open_low();

    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t uniform_index(std::uint64_t bound);

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape);

    /// rows x cols standard normal matrix, filled in row-major order.
    Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);

private:
    std::array<std::uint64_t, 4> s_{};
    std::optional<double> spare_;
};

/// Mixes a base seed with stream identifiers into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t substream);

/// Uniform sample of k distinct indices from [0, n), returned sorted.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace fedlr
