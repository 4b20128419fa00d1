// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/predict.hpp"

#include <cmath>
#include <string>

#include "immgp/distributions.hpp"
#include "immgp/error.hpp"

namespace immgp {

namespace {

Matrix cross_covariance(const Component& c, const RowVector& kstar) {
  const Eigen::Index m = c.output_dim();
  const Eigen::Index n = kstar.size();
  Matrix out(m, m * n);
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index k = 0; k < m; ++k) out.block(l, k * n, 1, n) = (c.sigma0 * c.K(l, k)) * kstar;
  }
  return out;
}

}  // namespace

std::string_view to_string(PredictionMode mode) {
  return mode == PredictionMode::kExistingOnly ? "immgp1" : "immgp2";
}

PredictionMode parse_prediction_mode(std::string_view text) {
  if (text == "immgp1") return PredictionMode::kExistingOnly;
  if (text == "immgp2") return PredictionMode::kWithNew;
  throw InvalidConfig("unknown prediction mode '" + std::string(text) + "' (immgp1|immgp2)");
}

NewComponentDensity::NewComponentDensity(const Hyperparams& hp, std::size_t draws, Rng& rng) {
  if (draws < 1) throw InvalidConfig("mc_draws must be >= 1");
  means_.reserve(draws);
  precisions_.reserve(draws);
  for (std::size_t s = 0; s < draws; ++s) {
    means_.push_back(dist::mvn_sample(hp.mu0, hp.R0, rng));
    precisions_.push_back(dist::wishart_sample(hp.W0, hp.nu0, rng));
  }
}

std::vector<double> NewComponentDensity::log_terms(const Vector& x) const {
  std::vector<double> out(means_.size());
  for (std::size_t s = 0; s < means_.size(); ++s) {
    out[s] = dist::mvn_logpdf(x, means_[s], precisions_[s]);
  }
  return out;
}

double NewComponentDensity::log_density(const Vector& x) const {
  const auto terms = log_terms(x);
  return dist::log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

double NewComponentDensity::relative_std_error(const Vector& x) const {
  const auto terms = log_terms(x);
  const double log_mean = dist::log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
  if (terms.size() < 2 || !std::isfinite(log_mean)) return 0.0;
  // Var of p_s / mean, computed on the normalized scale.
  double sum_sq = 0.0;
  for (double t : terms) {
    const double ratio = std::exp(t - log_mean);
    sum_sq += (ratio - 1.0) * (ratio - 1.0);
  }
  const double n = static_cast<double>(terms.size());
  return std::sqrt(sum_sq / (n - 1.0) / n);
}

Vector responsibilities(const Vector& xstar, const MixtureState& sample, PredictionMode mode,
                        const NewComponentDensity* new_density) {
  const auto sizes = sample.sizes();
  const std::size_t c = sizes.size();
  const bool with_new = mode == PredictionMode::kWithNew;
  if (with_new && new_density == nullptr) {
    throw InvalidConfig("responsibilities: new-component density required");
  }
  // The common 1 / (alpha + N) factor cancels in the normalization.
  std::vector<double> lw(c + (with_new ? 1 : 0));
  for (std::size_t r = 0; r < c; ++r) {
    const Component& comp = sample.components[r];
    lw[r] = std::log(static_cast<double>(sizes[r])) + dist::mvn_logpdf(xstar, comp.mu, comp.R);
  }
  if (with_new) lw[c] = std::log(sample.alpha) + new_density->log_density(xstar);
  const double norm = dist::log_sum_exp(lw);
  Vector out(static_cast<Eigen::Index>(lw.size()));
  if (!std::isfinite(norm)) {
    // Every density underflowed; fall back to the prior CRP shares.
    for (std::size_t r = 0; r < c; ++r) lw[r] = std::log(static_cast<double>(sizes[r]));
    if (with_new) lw[c] = std::log(sample.alpha);
    const double prior_norm = dist::log_sum_exp(lw);
    for (std::size_t k = 0; k < lw.size(); ++k) out[static_cast<Eigen::Index>(k)] = std::exp(lw[k] - prior_norm);
    return out;
  }
  for (std::size_t k = 0; k < lw.size(); ++k) out[static_cast<Eigen::Index>(k)] = std::exp(lw[k] - norm);
  return out;
}

Vector responsibilities(const Vector& xstar, const MixtureState& sample, const Hyperparams& hp,
                        PredictionMode mode, std::size_t mc_draws, Rng& rng) {
  if (mode == PredictionMode::kExistingOnly) return responsibilities(xstar, sample, mode, nullptr);
  const NewComponentDensity density(hp, mc_draws, rng);
  return responsibilities(xstar, sample, mode, &density);
}

ComponentPrediction component_predict(const Vector& xstar, std::size_t r, const MixtureState& sample,
                                      const Dataset& data) {
  const Component& c = sample.components.at(r);
  const auto rows = sample.members(r);
  if (rows.empty()) throw Error("component_predict: component has no members");
  const Matrix x = gather_rows(data.X, rows);
  const auto f = linalg::chol_spd(assemble_sigma(c, x));
  const Matrix cross = cross_covariance(c, cross_kernel(xstar, x, c.w));
  ComponentPrediction out;
  out.mean = cross * linalg::solve(f, stack_outputs(gather_rows(data.Y, rows)));
  const Matrix v = linalg::solve_lower(f, cross.transpose());
  const Matrix cov = c.sigma0 * c.K - v.transpose() * v;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

Predictor::Predictor(std::span<const MixtureState> samples, const Dataset& data,
                     const Hyperparams& hp, PredictionMode mode, std::size_t mc_draws, Rng& rng)
    : samples_(samples), mode_(mode), outputs_(data.output_dim()) {
  if (samples.empty()) throw InvalidConfig("predict: chain has no samples");
  if (mode == PredictionMode::kWithNew) new_density_.emplace(hp, mc_draws, rng);
  solved_.reserve(samples.size());
  for (const MixtureState& s : samples) {
    if (s.assignments.size() != static_cast<std::size_t>(data.size())) {
      throw SchemaMismatch("predict: sample has " + std::to_string(s.assignments.size()) +
                           " assignments for " + std::to_string(data.size()) + " training rows");
    }
    std::vector<Solved> per_component;
    per_component.reserve(s.components.size());
    for (std::size_t r = 0; r < s.components.size(); ++r) {
      const auto rows = s.members(r);
      Solved solved;
      solved.x = gather_rows(data.X, rows);
      if (!rows.empty()) {
        const auto f = linalg::chol_spd(assemble_sigma(s.components[r], solved.x));
        solved.alpha = linalg::solve(f, stack_outputs(gather_rows(data.Y, rows)));
      }
      per_component.push_back(std::move(solved));
    }
    solved_.push_back(std::move(per_component));
  }
}

Prediction Predictor::predict(const Vector& xstar, bool keep_per_sample) const {
  Prediction out;
  out.mode = mode_;
  out.mean = Vector::Zero(outputs_);
  if (keep_per_sample) out.per_sample_means.resize(static_cast<Eigen::Index>(samples_.size()), outputs_);
  const NewComponentDensity* density = new_density_ ? &*new_density_ : nullptr;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const MixtureState& s = samples_[i];
    const Vector resp = responsibilities(xstar, s, mode_, density);
    Vector sample_mean = Vector::Zero(outputs_);
    for (std::size_t r = 0; r < s.components.size(); ++r) {
      const Solved& solved = solved_[i][r];
      if (solved.x.rows() == 0) continue;
      const Component& c = s.components[r];
      const Matrix cross = cross_covariance(c, cross_kernel(xstar, solved.x, c.w));
      sample_mean += resp[static_cast<Eigen::Index>(r)] * (cross * solved.alpha);
    }
    // A new component has zero predictive mean and adds nothing.
    out.mean += sample_mean;
    if (keep_per_sample) out.per_sample_means.row(static_cast<Eigen::Index>(i)) = sample_mean.transpose();
  }
  out.mean /= static_cast<double>(samples_.size());
  return out;
}

Matrix Predictor::predict_all(const Matrix& xstar) const {
  Matrix out(xstar.rows(), outputs_);
  for (Eigen::Index k = 0; k < xstar.rows(); ++k) {
    out.row(k) = predict(xstar.row(k).transpose()).mean.transpose();
  }
  return out;
}

Prediction predict(const Vector& xstar, const Chain& chain, const Dataset& data,
                   const Hyperparams& hp, PredictionMode mode, std::size_t mc_draws, Rng& rng) {
  const Predictor predictor(chain.samples, data, hp, mode, mc_draws, rng);
  return predictor.predict(xstar, true);
}

}  // namespace immgp
