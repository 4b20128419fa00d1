// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/gibbs.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "immgp/distributions.hpp"
#include "immgp/error.hpp"

namespace immgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kDivergenceThreshold = 1000.0;

struct MemberData {
  Matrix x;
  Vector y;  // stacked output-major
};

MemberData member_data(std::size_t r, const MixtureState& state, const Dataset& data) {
  const auto rows = state.members(r);
  return {gather_rows(data.X, rows), stack_outputs(gather_rows(data.Y, rows))};
}

// ln N(v | 0, cov) for a small dense covariance.
double centered_gauss_logpdf(const Vector& v, const Matrix& cov) {
  const auto f = linalg::chol_spd(0.5 * (cov + cov.transpose()));
  const Vector half = linalg::solve_lower(f, v);
  return -0.5 * (static_cast<double>(v.size()) * kLog2Pi + linalg::logdet(f) + half.squaredNorm());
}

// sigma0 K kron k*, the M x (M n) cross-covariance between a new point and the members.
Matrix cross_covariance(const Component& c, const RowVector& kstar) {
  const Eigen::Index m = c.output_dim();
  const Eigen::Index n = kstar.size();
  Matrix out(m, m * n);
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index k = 0; k < m; ++k) out.block(l, k * n, 1, n) = (c.sigma0 * c.K(l, k)) * kstar;
  }
  return out;
}

Matrix point_covariance(const Component& c) {
  return c.sigma0 * c.K + Matrix(c.noise.asDiagonal());
}

bool same_gp_params(const Component& a, const Component& b) {
  return a.sigma0 == b.sigma0 && a.K == b.K && a.w == b.w && a.noise == b.noise;
}

// Energy in theta = ln sigma0 and its derivative, from one factorization.
struct ThetaEnergy {
  double potential;
  double gradient;
};

ThetaEnergy theta_energy(double theta, const Component& c, const Matrix& kx, const Vector& y,
                         const Hyperparams& hp) {
  const double sigma0 = std::exp(theta);
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw NumericalError("sigma0 out of range");
  Component probe = c;
  probe.sigma0 = sigma0;
  const auto f = linalg::chol_spd(assemble_sigma_from_kernel(probe, kx));
  const Vector alpha = linalg::solve(f, y);
  const double energy = (1.0 - hp.a1) * theta + hp.b1 * sigma0 +
                        0.5 * linalg::logdet(f) + 0.5 * y.dot(alpha);

  // With G = kron(K, Kx), the factored matrix is sigma0 G + diag(noise_k + eps),
  // so both trace terms reduce to diagonal sums.
  const Eigen::Index n = kx.rows();
  Vector loading(y.size());
  for (Eigen::Index l = 0; l < c.output_dim(); ++l) {
    loading.segment(l * n, n).setConstant(c.noise[l] + f.jitter());
  }
  const Vector inv_diag = linalg::inverse_diagonal(f);
  const double tr_sinv_g =
      (static_cast<double>(y.size()) - loading.dot(inv_diag)) / sigma0;
  const double quad_g = (alpha.dot(y) - loading.dot(alpha.cwiseProduct(alpha))) / sigma0;
  const double de_dsigma = (1.0 - hp.a1) / sigma0 + hp.b1 + 0.5 * (tr_sinv_g - quad_g);
  // U(theta) = E(e^theta) - theta.
  return {energy - theta, de_dsigma * sigma0 - 1.0};
}

double try_log_marginal(const Component& c, const Matrix& kx, const Vector& y) {
  if (kx.rows() == 0) return 0.0;
  const auto f = linalg::chol_spd(assemble_sigma_from_kernel(c, kx));
  const Vector half = linalg::solve_lower(f, y);
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + linalg::logdet(f) + half.squaredNorm());
}

// Shared loop of the independence samplers: propose, then accept on the
// likelihood ratio. A proposal whose covariance cannot be factored is rejected.
template <class T, class Propose, class Apply>
MhResult<T> independence_mh(T current, const Component& c, const Matrix& x, const Vector& y,
                            bool kernel_changes, int tries, Rng& rng, Propose propose,
                            Apply apply) {
  MhResult<T> out{current, {}};
  Component state = c;
  apply(state, current);
  Matrix kx = kernel_matrix(x, state.w);
  double ll = try_log_marginal(state, kx, y);
  for (int t = 0; t < tries; ++t) {
    T proposal = propose(rng);
    const double log_u = std::log(rng.uniform_open());
    ++out.moves.attempted;
    Component probe = state;
    apply(probe, proposal);
    double ll_new;
    Matrix kx_new;
    try {
      if (kernel_changes) kx_new = kernel_matrix(x, probe.w);
      ll_new = try_log_marginal(probe, kernel_changes ? kx_new : kx, y);
    } catch (const NumericalError&) {
      continue;
    }
    if (log_u < ll_new - ll) {
      ++out.moves.accepted;
      out.value = std::move(proposal);
      state = std::move(probe);
      ll = ll_new;
      if (kernel_changes) kx = std::move(kx_new);
    }
  }
  return out;
}

void remove_component(MixtureState& state, std::size_t r) {
  state.components.erase(state.components.begin() + static_cast<std::ptrdiff_t>(r));
  for (std::size_t& z : state.assignments) {
    if (z > r) --z;
  }
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_sweeps < 1) throw InvalidConfig("n_sweeps must be >= 1");
  if (burn_in < 0 || burn_in >= n_sweeps) throw InvalidConfig("burn_in must lie in [0, n_sweeps)");
  if (!(hmc_step > 0.0)) throw InvalidConfig("hmc_step must be positive");
  if (hmc_leapfrog < 1) throw InvalidConfig("hmc_leapfrog must be >= 1");
  if (mh_tries_per_param < 1) throw InvalidConfig("mh_tries_per_param must be >= 1");
  if (!(alpha_proposal_scale > 0.0)) throw InvalidConfig("alpha_proposal_scale must be positive");
}

AuxSource prior_aux_source(const Hyperparams& hp) {
  return [&hp](Rng& rng) { return draw_component(hp, rng); };
}

double gp_conditional_logpdf(const Component& c, const Matrix& x_rest, const Matrix& y_rest,
                             const Vector& x, const Vector& y) {
  if (x_rest.rows() == 0) return centered_gauss_logpdf(y, point_covariance(c));
  const auto f = linalg::chol_spd(assemble_sigma(c, x_rest));
  const Matrix cross = cross_covariance(c, cross_kernel(x, x_rest, c.w));
  const Vector mean = cross * linalg::solve(f, stack_outputs(y_rest));
  const Matrix v = linalg::solve_lower(f, cross.transpose());
  return centered_gauss_logpdf(y - mean, point_covariance(c) - v.transpose() * v);
}

double gp_conditional_logpdf(std::size_t i, std::size_t r, const MixtureState& state,
                             const Dataset& data) {
  std::vector<std::size_t> rest;
  for (std::size_t j : state.members(r)) {
    if (j != i) rest.push_back(j);
  }
  return gp_conditional_logpdf(state.components.at(r), gather_rows(data.X, rest),
                               gather_rows(data.Y, rest), data.X.row(i).transpose(),
                               data.Y.row(i).transpose());
}

IndicatorUpdater::IndicatorUpdater(const Dataset& data, const Hyperparams& hp, AuxSource aux)
    : data_(data), hp_(hp), aux_(aux ? std::move(aux) : prior_aux_source(hp)) {}

IndicatorUpdater::CacheEntry& IndicatorUpdater::cache_for(std::size_t r,
                                                                const MixtureState& state) {
  if (cache_.size() < state.components.size()) cache_.resize(state.components.size());
  auto members = state.members(r);
  const Component& c = state.components[r];
  auto& slot = cache_[r];
  if (slot && slot->members == members && same_gp_params(slot->params, c)) return *slot;

  CacheEntry e;
  e.x = gather_rows(data_.X, members);
  const Vector y = stack_outputs(gather_rows(data_.Y, members));
  e.factor = linalg::chol_spd(assemble_sigma(c, e.x));
  e.alpha = linalg::solve(e.factor, y);
  e.members = std::move(members);
  e.params = c;
  slot = std::move(e);
  return *slot;
}

double IndicatorUpdater::conditional_excluded(const CacheEntry& e, const Component& c,
                                              std::size_t i) const {
  const Vector x = data_.X.row(i).transpose();
  const Vector y = data_.Y.row(i).transpose();
  const Matrix cross = cross_covariance(c, cross_kernel(x, e.x, c.w));
  const Matrix v = linalg::solve_lower(e.factor, cross.transpose());
  return centered_gauss_logpdf(y - cross * e.alpha, point_covariance(c) - v.transpose() * v);
}

double IndicatorUpdater::conditional_included(CacheEntry& e, std::size_t i) const {
  // With Lambda = Sigma^{-1}: y_i | rest has covariance Lambda_ii^{-1} and
  // residual Lambda_ii^{-1} (Sigma^{-1} y)_i.
  const auto n = static_cast<Eigen::Index>(e.members.size());
  const Eigen::Index m = data_.output_dim();
  if (e.inverse_blocks.empty()) {
    const Matrix linv = linalg::inverse_lower(e.factor);
    e.inverse_blocks.resize(e.members.size());
    for (Eigen::Index j = 0; j < n; ++j) {
      Matrix block(m, m);
      for (Eigen::Index l = 0; l < m; ++l) {
        for (Eigen::Index k = 0; k <= l; ++k) {
          // Column l n + j of L^{-1} is zero above row l n + j.
          const Eigen::Index start = l * n + j;
          const Eigen::Index len = m * n - start;
          block(l, k) = linv.col(l * n + j).tail(len).dot(linv.col(k * n + j).tail(len));
          block(k, l) = block(l, k);
        }
      }
      e.inverse_blocks[static_cast<std::size_t>(j)] = std::move(block);
    }
  }
  Eigen::Index j = 0;
  while (e.members[static_cast<std::size_t>(j)] != i) ++j;
  Vector b(m);
  for (Eigen::Index l = 0; l < m; ++l) b[l] = e.alpha[l * n + j];
  const auto f = linalg::chol_spd(e.inverse_blocks[static_cast<std::size_t>(j)]);
  const Vector half = linalg::solve_lower(f, b);
  return -0.5 * (static_cast<double>(m) * kLog2Pi - linalg::logdet(f) + half.squaredNorm());
}

IndicatorWeights IndicatorUpdater::weights(std::size_t i, const MixtureState& state, Rng& rng) {
  const std::size_t r_old = state.assignments.at(i);
  const auto sizes = state.sizes();
  const bool singleton = sizes[r_old] == 1;
  const Vector xi = data_.X.row(i).transpose();
  const Vector yi = data_.Y.row(i).transpose();

  IndicatorWeights out;
  out.aux_is_current = singleton;
  out.aux = singleton ? state.components[r_old] : aux_(rng);

  for (std::size_t r = 0; r < state.components.size(); ++r) {
    if (singleton && r == r_old) continue;
    const Component& c = state.components[r];
    const double count = static_cast<double>(sizes[r] - (r == r_old ? 1 : 0));
    CacheEntry& e = cache_for(r, state);
    const double cond = r == r_old ? conditional_included(e, i) : conditional_excluded(e, c, i);
    out.candidates.push_back(r);
    out.log_weights.push_back(std::log(count) + cond + dist::mvn_logpdf(xi, c.mu, c.R));
  }
  const Matrix none(0, data_.input_dim());
  out.candidates.push_back(IndicatorWeights::kAux);
  out.log_weights.push_back(std::log(state.alpha) +
                            gp_conditional_logpdf(out.aux, none, Matrix(0, data_.output_dim()), xi, yi) +
                            dist::mvn_logpdf(xi, out.aux.mu, out.aux.R));
  return out;
}

void IndicatorUpdater::update(std::size_t i, MixtureState& state, Rng& rng) {
  IndicatorWeights w = weights(i, state, rng);
  const std::size_t pick = dist::sample_log_categorical(w.log_weights, rng);
  const std::size_t chosen = w.candidates[pick];
  const std::size_t r_old = state.assignments[i];

  if (chosen == IndicatorWeights::kAux) {
    if (w.aux_is_current) return;
    state.components.push_back(std::move(w.aux));
    if (cache_.size() < state.components.size()) cache_.resize(state.components.size());
    state.assignments[i] = state.components.size() - 1;
    return;
  }
  state.assignments[i] = chosen;
  if (w.aux_is_current) {
    remove_component(state, r_old);
    if (r_old < cache_.size()) cache_.erase(cache_.begin() + static_cast<std::ptrdiff_t>(r_old));
  }
}

void update_indicator(std::size_t i, MixtureState& state, const Dataset& data, const Hyperparams& hp,
                      Rng& rng, const AuxSource& aux) {
  IndicatorUpdater updater(data, hp, aux);
  updater.update(i, state, rng);
}

Vector posterior_mu(std::size_t r, const MixtureState& state, const Dataset& data,
                    const Hyperparams& hp, Rng& rng) {
  const Component& c = state.components.at(r);
  const auto rows = state.members(r);
  Vector sum = Vector::Zero(data.input_dim());
  for (std::size_t j : rows) sum += data.X.row(static_cast<Eigen::Index>(j)).transpose();
  const Matrix precision = hp.R0 + static_cast<double>(rows.size()) * c.R;
  const Vector mean = linalg::solve(linalg::chol_spd(precision), Vector(hp.R0 * hp.mu0 + c.R * sum));
  return dist::mvn_sample(mean, precision, rng);
}

Matrix posterior_R(std::size_t r, const MixtureState& state, const Dataset& data,
                   const Hyperparams& hp, Rng& rng) {
  const Component& c = state.components.at(r);
  const auto rows = state.members(r);
  Matrix scatter = linalg::inverse(linalg::chol_spd(hp.W0));
  for (std::size_t j : rows) {
    const Vector d = data.X.row(static_cast<Eigen::Index>(j)).transpose() - c.mu;
    scatter += d * d.transpose();
  }
  Matrix scale = linalg::inverse(linalg::chol_spd(0.5 * (scatter + scatter.transpose())));
  scale = 0.5 * (scale + scale.transpose());
  return dist::wishart_sample(scale, hp.nu0 + static_cast<double>(rows.size()), rng);
}

double sigma0_energy(double sigma0, const Component& c, const Matrix& xr, const Vector& yr,
                     const Hyperparams& hp) {
  Component probe = c;
  probe.sigma0 = sigma0;
  const auto f = linalg::chol_spd(assemble_sigma(probe, xr));
  const Vector half = linalg::solve_lower(f, yr);
  return (1.0 - hp.a1) * std::log(sigma0) + hp.b1 * sigma0 + 0.5 * linalg::logdet(f) +
         0.5 * half.squaredNorm();
}

double sigma0_energy_gradient(double sigma0, const Component& c, const Matrix& xr,
                              const Vector& yr, const Hyperparams& hp) {
  Component probe = c;
  probe.sigma0 = sigma0;
  const Matrix kx = kernel_matrix(xr, c.w);
  const auto f = linalg::chol_spd(assemble_sigma_from_kernel(probe, kx));
  return (1.0 - hp.a1) / sigma0 + hp.b1 + 0.5 * linalg::trace_prod(f, yr, linalg::kron(c.K, kx));
}

HmcResult hmc_update_sigma0(std::size_t r, const MixtureState& state, const Dataset& data,
                            const Hyperparams& hp, const SamplerConfig& cfg, Rng& rng) {
  const Component& c = state.components.at(r);
  const MemberData md = member_data(r, state, data);
  const Matrix kx = kernel_matrix(md.x, c.w);
  HmcResult out{c.sigma0, false, false};

  const double theta0 = std::log(c.sigma0);
  double p = rng.normal();
  ThetaEnergy e;
  try {
    e = theta_energy(theta0, c, kx, md.y, hp);
  } catch (const NumericalError&) {
    out.divergent = true;
    return out;
  }
  const double h0 = e.potential + 0.5 * p * p;
  double theta = theta0;
  const double eps = cfg.hmc_step;
  try {
    for (int s = 0; s < cfg.hmc_leapfrog; ++s) {
      p -= 0.5 * eps * e.gradient;
      theta += eps * p;
      e = theta_energy(theta, c, kx, md.y, hp);
      p -= 0.5 * eps * e.gradient;
    }
  } catch (const NumericalError&) {
    out.divergent = true;
    return out;
  }
  const double dh = e.potential + 0.5 * p * p - h0;
  if (!std::isfinite(dh) || std::abs(dh) > kDivergenceThreshold) {
    out.divergent = true;
    return out;
  }
  if (std::log(rng.uniform_open()) < -dh) {
    out.sigma0 = std::exp(theta);
    out.accepted = true;
  }
  return out;
}

MhResult<Matrix> mh_update_K(std::size_t r, const MixtureState& state, const Dataset& data,
                             const Hyperparams& hp, const SamplerConfig& cfg, Rng& rng) {
  const Component& c = state.components.at(r);
  const MemberData md = member_data(r, state, data);
  return independence_mh<Matrix>(
      c.K, c, md.x, md.y, false, cfg.mh_tries_per_param, rng,
      [&](Rng& g) { return dist::wishart_sample(hp.W1, hp.nu1, g); },
      [](Component& t, const Matrix& k) { t.K = k; });
}

MhResult<double> mh_update_w(std::size_t r, Eigen::Index d, const MixtureState& state,
                             const Dataset& data, const Hyperparams& hp, const SamplerConfig& cfg,
                             Rng& rng) {
  const Component& c = state.components.at(r);
  const MemberData md = member_data(r, state, data);
  return independence_mh<double>(
      c.w[d], c, md.x, md.y, true, cfg.mh_tries_per_param, rng,
      [&](Rng& g) { return dist::lognormal_sample(hp.mu1, hp.r1, g); },
      [d](Component& t, double v) { t.w[d] = v; });
}

MhResult<double> mh_update_noise(std::size_t r, Eigen::Index l, const MixtureState& state,
                                 const Dataset& data, const Hyperparams& hp,
                                 const SamplerConfig& cfg, Rng& rng) {
  const Component& c = state.components.at(r);
  const MemberData md = member_data(r, state, data);
  return independence_mh<double>(
      c.noise[l], c, md.x, md.y, false, cfg.mh_tries_per_param, rng,
      [&](Rng& g) { return dist::gamma_sample(hp.a2, hp.b2, g); },
      [l](Component& t, double v) { t.noise[l] = v; });
}

AlphaLogTarget alpha_log_target(double alpha, std::size_t c, std::size_t n, const Hyperparams& hp) {
  const double cc = static_cast<double>(c);
  const double nn = static_cast<double>(n);
  return {{(cc + hp.a0 - 1.0) * std::log(alpha), -hp.b0 * alpha, std::lgamma(alpha),
           -std::lgamma(nn + alpha)}};
}

double alpha_log_acceptance(const AlphaLogTarget& current, const AlphaLogTarget& proposal,
                            double alpha, double proposed_alpha) {
  if (current.terms.size() != proposal.terms.size()) {
    throw DimensionMismatch("alpha_log_acceptance: term lists differ");
  }
  double log_ratio = 0.0;
  for (std::size_t k = 0; k < current.terms.size(); ++k) {
    log_ratio += proposal.terms[k] - current.terms[k];
  }
  // Log-space random walk: q(alpha | alpha') / q(alpha' | alpha) = alpha' / alpha.
  return log_ratio + std::log(proposed_alpha) - std::log(alpha);
}

MhResult<double> mh_update_alpha(const MixtureState& state, const Hyperparams& hp,
                                 const SamplerConfig& cfg, Rng& rng) {
  const std::size_t c = state.num_components();
  const std::size_t n = state.assignments.size();
  MhResult<double> out{state.alpha, {}};
  AlphaLogTarget current = alpha_log_target(out.value, c, n, hp);
  for (int t = 0; t < cfg.mh_tries_per_param; ++t) {
    const double proposal = out.value * std::exp(cfg.alpha_proposal_scale * rng.normal());
    const double log_u = std::log(rng.uniform_open());
    ++out.moves.attempted;
    if (!(proposal > 0.0) || !std::isfinite(proposal)) continue;
    AlphaLogTarget next = alpha_log_target(proposal, c, n, hp);
    if (log_u < alpha_log_acceptance(current, next, out.value, proposal)) {
      ++out.moves.accepted;
      out.value = proposal;
      current = std::move(next);
    }
  }
  return out;
}

MixtureState sweep(MixtureState state, const Dataset& data, const Hyperparams& hp,
                   const SamplerConfig& cfg, Rng& rng, SweepDiagnostics* diag) {
  SweepDiagnostics local;
  SweepDiagnostics& d = diag ? *diag : local;

  IndicatorUpdater updater(data, hp);
  for (std::size_t i = 0; i < state.assignments.size(); ++i) updater.update(i, state, rng);

  for (std::size_t r = 0; r < state.components.size(); ++r) {
    state.components[r].mu = posterior_mu(r, state, data, hp, rng);
    state.components[r].R = posterior_R(r, state, data, hp, rng);

    const HmcResult h = hmc_update_sigma0(r, state, data, hp, cfg, rng);
    state.components[r].sigma0 = h.sigma0;
    ++d.sigma0.attempted;
    d.sigma0.accepted += h.accepted ? 1 : 0;
    d.hmc_divergent += h.divergent ? 1 : 0;

    auto k = mh_update_K(r, state, data, hp, cfg, rng);
    state.components[r].K = std::move(k.value);
    d.K += k.moves;
    for (Eigen::Index dim = 0; dim < data.input_dim(); ++dim) {
      const auto w = mh_update_w(r, dim, state, data, hp, cfg, rng);
      state.components[r].w[dim] = w.value;
      d.w += w.moves;
    }
    for (Eigen::Index l = 0; l < data.output_dim(); ++l) {
      const auto s = mh_update_noise(r, l, state, data, hp, cfg, rng);
      state.components[r].noise[l] = s.value;
      d.noise += s.moves;
    }
  }

  const auto a = mh_update_alpha(state, hp, cfg, rng);
  state.alpha = a.value;
  d.alpha_moves += a.moves;

  state.canonicalize();
  d.num_components = state.num_components();
  d.alpha = state.alpha;
  if (diag) d.log_joint = log_joint(state, data, hp);
  return state;
}

MixtureState sample_prior_state(std::size_t n, const Hyperparams& hp, Rng& rng) {
  MixtureState s;
  s.alpha = dist::gamma_sample(hp.a0, hp.b0, rng);
  s.assignments = crp_assignments(n, s.alpha, rng);
  std::size_t c = 0;
  for (std::size_t z : s.assignments) c = std::max(c, z + 1);
  for (std::size_t r = 0; r < c; ++r) s.components.push_back(draw_component(hp, rng));
  return s;
}

Chain run(const Dataset& data, const Hyperparams& hp, const SamplerConfig& cfg,
          const SweepObserver& observer) {
  cfg.validate();
  hp.validate();
  data.validate();
  if (data.size() == 0) throw InvalidConfig("run: dataset is empty");
  if (data.input_dim() != hp.input_dim() || data.output_dim() != hp.output_dim()) {
    throw DimensionMismatch("run: data dimensions do not match the hyperparameters");
  }

  Rng rng(cfg.seed);
  MixtureState state = sample_prior_state(static_cast<std::size_t>(data.size()), hp, rng);
  Chain chain;
  chain.samples.reserve(static_cast<std::size_t>(cfg.n_sweeps - cfg.burn_in));
  chain.diagnostics.reserve(static_cast<std::size_t>(cfg.n_sweeps));
  for (int s = 0; s < cfg.n_sweeps; ++s) {
    SweepDiagnostics diag;
    diag.sweep = s;
    try {
      state = sweep(std::move(state), data, hp, cfg, rng, &diag);
    } catch (const NumericalError& e) {
      throw NumericalError("sweep " + std::to_string(s) + ": " + e.what());
    }
    if (observer) observer(s, state, diag);
    chain.diagnostics.push_back(diag);
    if (s >= cfg.burn_in) chain.samples.push_back(state);
  }
  return chain;
}

}  // namespace immgp
