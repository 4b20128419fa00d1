// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "immgp/model.hpp"
#include "immgp/rng.hpp"

namespace immgp {

struct GeneratedSet {
  Dataset dataset;
  std::vector<std::size_t> true_assignments;
  MixtureState true_state;
  std::uint64_t seed = 0;
};

/// Benchmark hyperparameters for D inputs and M outputs:
/// a0 = b0 = 1, mu0 = 0, R0 = I/10, W0 = I/(10D), nu0 = D, a1 = b1 = 1,
/// W1 = I/M, nu1 = M, mu1 = 0, r1 = 0.01, a2 = 0.1, b2 = 1.
Hyperparams benchmark_preset(Eigen::Index d, Eigen::Index m);

/// Inference-side variant of benchmark_preset: mu0 is the training input
/// mean, R0 = R_x the inverse of the training input covariance, W0 = R_x / D.
Hyperparams inference_preset(const Dataset& train);

// Named lookup: "benchmark" or "inference" (the latter needs training data).
Hyperparams preset_by_name(std::string_view name, Eigen::Index d, Eigen::Index m,
                           const Dataset* train = nullptr);

/// Ancestral draw: alpha, CRP seating, component parameters in order of
/// creation, inputs per point, then each component's stacked outputs jointly.
GeneratedSet generate(std::size_t n, const Hyperparams& hp, std::uint64_t seed);
GeneratedSet generate(std::size_t n, const Hyperparams& hp, Rng& rng);

// Inputs and outputs drawn for a fixed partition and parameters.
Dataset sample_observations(const MixtureState& state, Rng& rng);

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Uniform split without replacement; row order within each part follows a
/// random permutation of the rows. Throws BadSplit unless 0 < n_train < N.
Split split(const GeneratedSet& gs, std::size_t n_train, std::uint64_t seed);
Split split(const Dataset& data, std::size_t n_train, std::uint64_t seed);

}  // namespace immgp
