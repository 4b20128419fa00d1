// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "immgp/linalg.hpp"
#include "immgp/rng.hpp"

namespace immgp {

/// Fixed top-level prior parameters.
///
///   alpha      ~ Gamma(a0, b0)
///   mu_r       ~ N(mu0, R0^{-1})          R_r ~ Wishart(W0, nu0)
///   sigma0_r   ~ Gamma(a1, b1)            K_r ~ Wishart(W1, nu1)
///   ln w_rd    ~ N(mu1, r1)               noise_rl ~ Gamma(a2, b2)
struct Hyperparams {
  double a0 = 1.0, b0 = 1.0;
  Vector mu0;
  Matrix R0;
  Matrix W0;
  double nu0 = 1.0;
  double a1 = 1.0, b1 = 1.0;
  Matrix W1;
  double nu1 = 1.0;
  double mu1 = 0.0, r1 = 0.01;
  double a2 = 0.1, b2 = 1.0;

  Eigen::Index input_dim() const { return mu0.size(); }
  Eigen::Index output_dim() const { return W1.rows(); }
  // Throws InvalidConfig describing the first violated constraint.
  void validate() const;
};

/// Parameters of one mixture component.
struct Component {
  Vector mu;       // input mean
  Matrix R;        // input precision
  double sigma0 = 1.0;
  Matrix K;        // inter-task matrix, M x M
  Vector w;        // ARD weights, one per input dimension
  Vector noise;    // per-output noise variances

  Eigen::Index input_dim() const { return mu.size(); }
  Eigen::Index output_dim() const { return K.rows(); }
  void validate() const;
};

struct Dataset {
  Matrix X;  // N x D
  Matrix Y;  // N x M

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index input_dim() const { return X.cols(); }
  Eigen::Index output_dim() const { return Y.cols(); }
  void validate() const;
};

/// One state of the sampler. Component ids are indices into `components`.
struct MixtureState {
  double alpha = 1.0;
  std::vector<std::size_t> assignments;
  std::vector<Component> components;

  std::size_t num_components() const { return components.size(); }
  std::vector<std::size_t> sizes() const;
  std::vector<std::size_t> members(std::size_t r) const;
  // Throws Error if an assignment is dangling or a component is empty.
  void validate() const;
  // Relabels components in order of first appearance in `assignments` and
  // drops components nobody is assigned to.
  void canonicalize();
};

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

// Output-major stacking: entry l * N_r + j holds output l of point j.
Vector stack_outputs(const Matrix& yr);
Matrix unstack_outputs(const Vector& stacked, Eigen::Index outputs);

double kernel(const Vector& x, const Vector& x2, const Vector& w);
Matrix kernel_matrix(const Matrix& xr, const Vector& w);
RowVector cross_kernel(const Vector& xstar, const Matrix& xr, const Vector& w);

// sigma0 * kron(K, Kx) + kron(diag(noise), I).
Matrix assemble_sigma(const Component& c, const Matrix& xr);
Matrix assemble_sigma_from_kernel(const Component& c, const Matrix& kx);

/// log N(yr | 0, Sigma) with yr stacked output-major; 0 for an empty set.
/// Throws NotPositiveDefinite if Sigma cannot be factored with jitter.
double log_marginal_y(const Component& c, const Matrix& xr, const Vector& yr);

// Fresh parameters drawn from the priors, in field order.
Component draw_component(const Hyperparams& hp, Rng& rng);
double component_log_prior(const Component& c, const Hyperparams& hp);

// Sequential Chinese restaurant process seating of n customers.
std::vector<std::size_t> crp_assignments(std::size_t n, double alpha, Rng& rng);

// ln p(Z | alpha) for the partition induced by the component sizes.
double crp_log_prob(std::span<const std::size_t> sizes, double alpha);

/// Unnormalized log joint density ln p(alpha, Z, Theta, X, Y).
double log_joint(const MixtureState& state, const Dataset& data, const Hyperparams& hp);

}  // namespace immgp
