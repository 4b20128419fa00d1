// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/datagen.hpp"

#include <numeric>
#include <string>

#include "immgp/distributions.hpp"
#include "immgp/error.hpp"

namespace immgp {

Hyperparams benchmark_preset(Eigen::Index d, Eigen::Index m) {
  if (d < 1 || m < 1) throw InvalidConfig("preset dimensions must be >= 1");
  Hyperparams hp;
  hp.a0 = 1.0;
  hp.b0 = 1.0;
  hp.mu0 = Vector::Zero(d);
  hp.R0 = Matrix::Identity(d, d) / 10.0;
  hp.W0 = Matrix::Identity(d, d) / (10.0 * static_cast<double>(d));
  hp.nu0 = static_cast<double>(d);
  hp.a1 = 1.0;
  hp.b1 = 1.0;
  hp.W1 = Matrix::Identity(m, m) / static_cast<double>(m);
  hp.nu1 = static_cast<double>(m);
  hp.mu1 = 0.0;
  hp.r1 = 0.01;
  hp.a2 = 0.1;
  hp.b2 = 1.0;
  return hp;
}

Hyperparams inference_preset(const Dataset& train) {
  train.validate();
  if (train.size() < 2) throw InvalidConfig("inference preset needs at least 2 training rows");
  Hyperparams hp = benchmark_preset(train.input_dim(), train.output_dim());
  const Vector mean = train.X.colwise().mean().transpose();
  const Matrix centered = train.X.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(train.size() - 1);
  const Matrix rx = linalg::inverse(linalg::chol_spd(cov));
  hp.mu0 = mean;
  hp.R0 = rx;
  hp.W0 = rx / static_cast<double>(train.input_dim());
  return hp;
}

Hyperparams preset_by_name(std::string_view name, Eigen::Index d, Eigen::Index m,
                           const Dataset* train) {
  if (name == "benchmark") return benchmark_preset(d, m);
  if (name == "inference") {
    if (train == nullptr) throw InvalidConfig("preset 'inference' needs training data");
    return inference_preset(*train);
  }
  throw InvalidConfig("unknown preset '" + std::string(name) + "' (benchmark|inference)");
}

Dataset sample_observations(const MixtureState& state, Rng& rng) {
  state.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(state.assignments.size());
  const Component& first = state.components.front();
  Dataset out;
  out.X.resize(n, first.input_dim());
  out.Y.resize(n, first.output_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Component& c = state.components[state.assignments[static_cast<std::size_t>(i)]];
    out.X.row(i) = dist::mvn_sample(c.mu, c.R, rng).transpose();
  }
  for (std::size_t r = 0; r < state.components.size(); ++r) {
    const auto rows = state.members(r);
    const Component& c = state.components[r];
    const Matrix xr = gather_rows(out.X, rows);
    const auto f = linalg::chol_spd(assemble_sigma(c, xr));
    Vector z(f.dim());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
    const Vector stacked = f.lower() * z;
    const Matrix yr = unstack_outputs(stacked, c.output_dim());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      out.Y.row(static_cast<Eigen::Index>(rows[j])) = yr.row(static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

GeneratedSet generate(std::size_t n, const Hyperparams& hp, Rng& rng) {
  if (n < 1) throw InvalidConfig("generate: N must be >= 1");
  hp.validate();
  GeneratedSet gs;
  gs.seed = rng.seed();
  MixtureState& s = gs.true_state;
  s.alpha = dist::gamma_sample(hp.a0, hp.b0, rng);
  s.assignments = crp_assignments(n, s.alpha, rng);
  std::size_t c = 0;
  for (std::size_t z : s.assignments) c = std::max(c, z + 1);
  s.components.reserve(c);
  for (std::size_t r = 0; r < c; ++r) s.components.push_back(draw_component(hp, rng));
  gs.dataset = sample_observations(s, rng);
  gs.true_assignments = s.assignments;
  return gs;
}

GeneratedSet generate(std::size_t n, const Hyperparams& hp, std::uint64_t seed) {
  Rng rng(seed);
  return generate(n, hp, rng);
}

Split split(const Dataset& data, std::size_t n_train, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(data.size());
  if (n_train == 0 || n_train >= n) {
    throw BadSplit("n_train must satisfy 0 < n_train < N (got " + std::to_string(n_train) +
                   " for N = " + std::to_string(n) + ")");
  }
  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t k = n; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng.below(k));
    std::swap(perm[k - 1], perm[j]);
  }
  Split out;
  out.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  out.train.X = gather_rows(data.X, out.train_rows);
  out.train.Y = gather_rows(data.Y, out.train_rows);
  out.test.X = gather_rows(data.X, out.test_rows);
  out.test.Y = gather_rows(data.Y, out.test_rows);
  return out;
}

Split split(const GeneratedSet& gs, std::size_t n_train, std::uint64_t seed) {
  return split(gs.dataset, n_train, seed);
}

}  // namespace immgp
