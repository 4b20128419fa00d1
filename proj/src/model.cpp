// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "immgp/distributions.hpp"
#include "immgp/error.hpp"

namespace immgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_spd(const Matrix& m, Eigen::Index dim, const char* name) {
  if (m.rows() != dim || m.cols() != dim) {
    throw InvalidConfig(std::string(name) + " must be " + std::to_string(dim) + "x" +
                        std::to_string(dim));
  }
  try {
    linalg::chol_spd(m, linalg::JitterSchedule::none());
  } catch (const Error&) {
    throw InvalidConfig(std::string(name) + " is not symmetric positive definite");
  }
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw InvalidConfig(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

void Hyperparams::validate() const {
  const Eigen::Index d = input_dim();
  const Eigen::Index m = output_dim();
  if (d < 1) throw InvalidConfig("mu0 must have at least one entry");
  if (m < 1) throw InvalidConfig("W1 must be at least 1x1");
  if (!mu0.allFinite()) throw InvalidConfig("mu0 must be finite");
  require_spd(R0, d, "R0");
  require_spd(W0, d, "W0");
  require_spd(W1, m, "W1");
  require_positive(a0, "a0");
  require_positive(b0, "b0");
  require_positive(a1, "a1");
  require_positive(b1, "b1");
  require_positive(a2, "a2");
  require_positive(b2, "b2");
  require_positive(r1, "r1");
  if (!std::isfinite(mu1)) throw InvalidConfig("mu1 must be finite");
  if (!(nu0 >= static_cast<double>(d))) throw InvalidConfig("nu0 must be >= D");
  if (!(nu1 >= static_cast<double>(m))) throw InvalidConfig("nu1 must be >= M");
}

void Component::validate() const {
  const Eigen::Index d = input_dim();
  const Eigen::Index m = output_dim();
  if (R.rows() != d || R.cols() != d || w.size() != d) {
    throw DimensionMismatch("component: input dimensions disagree");
  }
  if (K.cols() != m || noise.size() != m) {
    throw DimensionMismatch("component: output dimensions disagree");
  }
  if (!(sigma0 > 0.0)) throw Error("component: sigma0 must be positive");
  if (!(w.array() > 0.0).all()) throw Error("component: ARD weights must be positive");
  if (!(noise.array() > 0.0).all()) throw Error("component: noise variances must be positive");
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, K.cwiseAbs().maxCoeff())) {
    throw Error("component: K is not symmetric");
  }
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(K, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
  if (min_eig < -1e-8 * K.trace() / static_cast<double>(m)) {
    throw Error("component: K is not positive semi-definite");
  }
}

void Dataset::validate() const {
  if (X.rows() != Y.rows()) throw DimensionMismatch("dataset: X and Y row counts differ");
  if (!X.allFinite() || !Y.allFinite()) throw Error("dataset: entries must be finite");
}

std::vector<std::size_t> MixtureState::sizes() const {
  std::vector<std::size_t> out(components.size(), 0);
  for (std::size_t z : assignments) ++out.at(z);
  return out;
}

std::vector<std::size_t> MixtureState::members(std::size_t r) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == r) out.push_back(i);
  }
  return out;
}

void MixtureState::validate() const {
  if (!(alpha > 0.0)) throw Error("state: alpha must be positive");
  for (std::size_t z : assignments) {
    if (z >= components.size()) throw Error("state: assignment references a missing component");
  }
  const auto counts = sizes();
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r] == 0) throw Error("state: component " + std::to_string(r) + " is empty");
  }
}

void MixtureState::canonicalize() {
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> relabel(components.size(), kUnset);
  std::vector<Component> ordered;
  ordered.reserve(components.size());
  for (std::size_t& z : assignments) {
    if (relabel[z] == kUnset) {
      relabel[z] = ordered.size();
      ordered.push_back(std::move(components[z]));
    }
    z = relabel[z];
  }
  components = std::move(ordered);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

Vector stack_outputs(const Matrix& yr) {
  // Eigen storage is column-major, which is already output-major.
  return Eigen::Map<const Vector>(yr.data(), yr.size());
}

Matrix unstack_outputs(const Vector& stacked, Eigen::Index outputs) {
  if (outputs <= 0 || stacked.size() % outputs != 0) {
    throw DimensionMismatch("unstack_outputs: length is not a multiple of the output count");
  }
  return Eigen::Map<const Matrix>(stacked.data(), stacked.size() / outputs, outputs);
}

double kernel(const Vector& x, const Vector& x2, const Vector& w) {
  if (x.size() != x2.size() || x.size() != w.size()) {
    throw DimensionMismatch("kernel: input and weight dimensions differ");
  }
  return std::exp(-0.5 * (w.array() * (x - x2).array()).square().sum());
}

Matrix kernel_matrix(const Matrix& xr, const Vector& w) {
  const Eigen::Index n = xr.rows();
  if (xr.cols() != w.size()) throw DimensionMismatch("kernel_matrix: weight dimension");
  const Matrix scaled = xr * w.asDiagonal();
  Matrix k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = std::exp(-0.5 * (scaled.row(i) - scaled.row(j)).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

RowVector cross_kernel(const Vector& xstar, const Matrix& xr, const Vector& w) {
  if (xr.cols() != w.size() || xstar.size() != w.size()) {
    throw DimensionMismatch("cross_kernel: dimensions differ");
  }
  const RowVector s = (xstar.array() * w.array()).matrix().transpose();
  const Matrix scaled = xr * w.asDiagonal();
  RowVector out(xr.rows());
  for (Eigen::Index j = 0; j < xr.rows(); ++j) {
    out[j] = std::exp(-0.5 * (scaled.row(j) - s).squaredNorm());
  }
  return out;
}

Matrix assemble_sigma_from_kernel(const Component& c, const Matrix& kx) {
  const Eigen::Index n = kx.rows();
  const Eigen::Index m = c.output_dim();
  Matrix sigma(m * n, m * n);
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index k = 0; k < m; ++k) {
      sigma.block(l * n, k * n, n, n) = (c.sigma0 * c.K(l, k)) * kx;
    }
    sigma.block(l * n, l * n, n, n).diagonal().array() += c.noise[l];
  }
  return sigma;
}

Matrix assemble_sigma(const Component& c, const Matrix& xr) {
  return assemble_sigma_from_kernel(c, kernel_matrix(xr, c.w));
}

double log_marginal_y(const Component& c, const Matrix& xr, const Vector& yr) {
  if (xr.rows() == 0) return 0.0;
  if (yr.size() != xr.rows() * c.output_dim()) {
    throw DimensionMismatch("log_marginal_y: stacked output length");
  }
  const auto f = linalg::chol_spd(assemble_sigma(c, xr));
  const Vector half = linalg::solve_lower(f, yr);
  return -0.5 * (static_cast<double>(yr.size()) * kLog2Pi + linalg::logdet(f) + half.squaredNorm());
}

Component draw_component(const Hyperparams& hp, Rng& rng) {
  Component c;
  c.mu = dist::mvn_sample(hp.mu0, hp.R0, rng);
  c.R = dist::wishart_sample(hp.W0, hp.nu0, rng);
  c.sigma0 = dist::gamma_sample(hp.a1, hp.b1, rng);
  c.K = dist::wishart_sample(hp.W1, hp.nu1, rng);
  c.w.resize(hp.input_dim());
  for (Eigen::Index d = 0; d < c.w.size(); ++d) c.w[d] = dist::lognormal_sample(hp.mu1, hp.r1, rng);
  c.noise.resize(hp.output_dim());
  for (Eigen::Index l = 0; l < c.noise.size(); ++l) {
    c.noise[l] = dist::gamma_sample(hp.a2, hp.b2, rng);
  }
  return c;
}

double component_log_prior(const Component& c, const Hyperparams& hp) {
  double lp = dist::mvn_logpdf(c.mu, hp.mu0, hp.R0);
  lp += dist::wishart_logpdf(c.R, hp.W0, hp.nu0);
  lp += dist::gamma_logpdf(c.sigma0, hp.a1, hp.b1);
  lp += dist::wishart_logpdf(c.K, hp.W1, hp.nu1);
  for (Eigen::Index d = 0; d < c.w.size(); ++d) lp += dist::lognormal_logpdf(c.w[d], hp.mu1, hp.r1);
  for (Eigen::Index l = 0; l < c.noise.size(); ++l) {
    lp += dist::gamma_logpdf(c.noise[l], hp.a2, hp.b2);
  }
  return lp;
}

std::vector<std::size_t> crp_assignments(std::size_t n, double alpha, Rng& rng) {
  std::vector<std::size_t> z;
  std::vector<double> counts;
  z.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Table r with weight n_r, a new table with weight alpha; total i + alpha.
    const double u = rng.uniform() * (static_cast<double>(i) + alpha);
    double cum = 0.0;
    std::size_t table = counts.size();
    for (std::size_t r = 0; r < counts.size(); ++r) {
      cum += counts[r];
      if (u < cum) {
        table = r;
        break;
      }
    }
    if (table == counts.size()) counts.push_back(0.0);
    counts[table] += 1.0;
    z.push_back(table);
  }
  return z;
}

double crp_log_prob(std::span<const std::size_t> sizes, double alpha) {
  double n = 0.0;
  double lp = 0.0;
  for (std::size_t s : sizes) {
    n += static_cast<double>(s);
    lp += std::lgamma(static_cast<double>(s));
  }
  lp += static_cast<double>(sizes.size()) * std::log(alpha) + std::lgamma(alpha) -
        std::lgamma(n + alpha);
  return lp;
}

double log_joint(const MixtureState& state, const Dataset& data, const Hyperparams& hp) {
  double lp = dist::gamma_logpdf(state.alpha, hp.a0, hp.b0);
  const auto sizes = state.sizes();
  lp += crp_log_prob(sizes, state.alpha);
  for (std::size_t r = 0; r < state.components.size(); ++r) {
    const Component& c = state.components[r];
    lp += component_log_prior(c, hp);
    const auto rows = state.members(r);
    const Matrix xr = gather_rows(data.X, rows);
    for (Eigen::Index j = 0; j < xr.rows(); ++j) {
      lp += dist::mvn_logpdf(xr.row(j).transpose(), c.mu, c.R);
    }
    lp += log_marginal_y(c, xr, stack_outputs(gather_rows(data.Y, rows)));
  }
  return lp;
}

}  // namespace immgp
