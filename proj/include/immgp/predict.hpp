// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "immgp/gibbs.hpp"
#include "immgp/model.hpp"
#include "immgp/rng.hpp"

namespace immgp {

// kExistingOnly averages over the live components of each sample (IMMGP1);
// kWithNew also gives a fresh prior component its CRP share (IMMGP2).
enum class PredictionMode { kExistingOnly, kWithNew };

std::string_view to_string(PredictionMode mode);
PredictionMode parse_prediction_mode(std::string_view text);

struct Prediction {
  Vector mean;
  Matrix per_sample_means;  // L x M, filled on request
  PredictionMode mode = PredictionMode::kExistingOnly;
};

/// Monte Carlo estimate of the input density of a component not yet seen,
/// p(x) = E_{mu ~ N(mu0, R0^{-1}), R ~ W(W0, nu0)} N(x | mu, R^{-1}).
class NewComponentDensity {
 public:
  NewComponentDensity(const Hyperparams& hp, std::size_t draws, Rng& rng);

  double log_density(const Vector& x) const;
  // Relative standard error of the estimate at x.
  double relative_std_error(const Vector& x) const;
  std::size_t draws() const { return means_.size(); }

 private:
  std::vector<double> log_terms(const Vector& x) const;

  std::vector<Vector> means_;
  std::vector<Matrix> precisions_;
};

/// p(z* | x*, Z, Theta) over the live components, followed by the new
/// component when mode is kWithNew. `new_density` is required in that mode.
Vector responsibilities(const Vector& xstar, const MixtureState& sample, PredictionMode mode,
                        const NewComponentDensity* new_density);

// Convenience form drawing a fresh density estimate with mc_draws prior draws.
Vector responsibilities(const Vector& xstar, const MixtureState& sample, const Hyperparams& hp,
                        PredictionMode mode, std::size_t mc_draws, Rng& rng);

struct ComponentPrediction {
  Vector mean;  // K* Sigma^{-1} y_r
  Matrix cov;   // sigma0 K - K* Sigma^{-1} K*^T
};

ComponentPrediction component_predict(const Vector& xstar, std::size_t r, const MixtureState& sample,
                                      const Dataset& data);

/// Averaged point prediction over a chain. The per-sample component
/// solutions Sigma^{-1} y_r are computed once at construction; one set of
/// prior draws for the new-component density is shared by every sample.
class Predictor {
 public:
  Predictor(std::span<const MixtureState> samples, const Dataset& data, const Hyperparams& hp,
            PredictionMode mode, std::size_t mc_draws, Rng& rng);

  Prediction predict(const Vector& xstar, bool keep_per_sample = false) const;
  Matrix predict_all(const Matrix& xstar) const;
  const std::optional<NewComponentDensity>& new_density() const { return new_density_; }

 private:
  struct Solved {
    Matrix x;
    Vector alpha;
  };

  std::span<const MixtureState> samples_;
  std::vector<std::vector<Solved>> solved_;
  PredictionMode mode_;
  std::optional<NewComponentDensity> new_density_;
  Eigen::Index outputs_;
};

Prediction predict(const Vector& xstar, const Chain& chain, const Dataset& data,
                   const Hyperparams& hp, PredictionMode mode, std::size_t mc_draws, Rng& rng);

}  // namespace immgp
