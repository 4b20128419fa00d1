// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "immgp/linalg.hpp"
#include "immgp/model.hpp"
#include "immgp/rng.hpp"

namespace immgp {

struct SamplerConfig {
  int n_sweeps = 4000;
  int burn_in = 2000;
  double hmc_step = 0.15;
  int hmc_leapfrog = 5;
  int mh_tries_per_param = 5;
  double alpha_proposal_scale = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Acceptance {
  int accepted = 0;
  int attempted = 0;

  double rate() const { return attempted > 0 ? static_cast<double>(accepted) / attempted : 0.0; }
  Acceptance& operator+=(const Acceptance& o) {
    accepted += o.accepted;
    attempted += o.attempted;
    return *this;
  }
};

struct SweepDiagnostics {
  int sweep = 0;
  std::size_t num_components = 0;
  double alpha = 0.0;
  double log_joint = 0.0;
  Acceptance sigma0;
  Acceptance K;
  Acceptance w;
  Acceptance noise;
  Acceptance alpha_moves;
  int hmc_divergent = 0;
};

struct Chain {
  std::vector<MixtureState> samples;
  std::vector<SweepDiagnostics> diagnostics;
};

// Source of parameters for the auxiliary "new" component of an indicator
// update. The default draws every field from the prior.
using AuxSource = std::function<Component(Rng&)>;

AuxSource prior_aux_source(const Hyperparams& hp);

/// ln p(y_i | outputs of the other members of r, their inputs, Theta_r).
/// Rebuilds and factors the covariance of r's other members. If r has no
/// other members this is ln N(y_i | 0, sigma0 K + diag(noise)).
double gp_conditional_logpdf(std::size_t i, std::size_t r, const MixtureState& state,
                             const Dataset& data);

// The same density for an explicit component and conditioning set.
double gp_conditional_logpdf(const Component& c, const Matrix& x_rest, const Matrix& y_rest,
                             const Vector& x, const Vector& y);

/// Candidate weights for resampling z_i with one auxiliary component.
struct IndicatorWeights {
  static constexpr std::size_t kAux = static_cast<std::size_t>(-1);

  // Component ids, then kAux last.
  std::vector<std::size_t> candidates;
  // Unnormalized: ln(count excluding i or alpha) + GP conditional + input density.
  std::vector<double> log_weights;
  // Parameters used for the auxiliary candidate. When i is alone in its
  // component this is that component, unchanged.
  Component aux;
  bool aux_is_current = false;
};

/// Indicator updates with per-component factor caches.
///
/// A cache entry holds the Cholesky factor of a component's covariance and
/// Sigma^{-1} y for its current members and GP parameters; it is rebuilt
/// whenever either differs from the state being updated. The conditional of
/// y_i given a component's other members is computed from the factor of the
/// members-without-i covariance when i is outside the component and from the
/// i-th diagonal block of the inverse of the full covariance when i is inside.
class IndicatorUpdater {
 public:
  IndicatorUpdater(const Dataset& data, const Hyperparams& hp, AuxSource aux = {});

  // Consumes the auxiliary draw (unless i is a singleton) but not the choice.
  IndicatorWeights weights(std::size_t i, const MixtureState& state, Rng& rng);
  // Draws z_i and applies it; removes a component that becomes empty.
  void update(std::size_t i, MixtureState& state, Rng& rng);

 private:
  struct CacheEntry {
    std::vector<std::size_t> members;
    Component params;
    Matrix x;
    linalg::SpdFactor factor;
    Vector alpha;
    // Diagonal M x M blocks of Sigma^{-1}, one per member; filled on first use.
    std::vector<Matrix> inverse_blocks;
  };

  CacheEntry& cache_for(std::size_t r, const MixtureState& state);
  double conditional_excluded(const CacheEntry& e, const Component& c, std::size_t i) const;
  double conditional_included(CacheEntry& e, std::size_t i) const;

  const Dataset& data_;
  const Hyperparams& hp_;
  AuxSource aux_;
  std::vector<std::optional<CacheEntry>> cache_;
};

// Single indicator update without cache reuse.
void update_indicator(std::size_t i, MixtureState& state, const Dataset& data, const Hyperparams& hp,
                      Rng& rng, const AuxSource& aux = {});

// Conjugate draws for the input-space parameters of component r.
Vector posterior_mu(std::size_t r, const MixtureState& state, const Dataset& data,
                    const Hyperparams& hp, Rng& rng);
Matrix posterior_R(std::size_t r, const MixtureState& state, const Dataset& data,
                   const Hyperparams& hp, Rng& rng);

/// Potential E(sigma0) = (1 - a1) ln sigma0 + b1 sigma0 + ln|Sigma|/2 + y^T Sigma^{-1} y / 2
/// and its derivative, for a component's inputs and stacked outputs.
double sigma0_energy(double sigma0, const Component& c, const Matrix& xr, const Vector& yr,
                     const Hyperparams& hp);
double sigma0_energy_gradient(double sigma0, const Component& c, const Matrix& xr,
                              const Vector& yr, const Hyperparams& hp);

struct HmcResult {
  double sigma0 = 0.0;
  bool accepted = false;
  bool divergent = false;
};

/// One HMC trajectory in theta = ln sigma0 (potential E(e^theta) - theta).
/// |Delta H| > 1000, a non-finite energy or an unfactorable covariance along
/// the trajectory is a divergence: the move is rejected and flagged.
HmcResult hmc_update_sigma0(std::size_t r, const MixtureState& state, const Dataset& data,
                            const Hyperparams& hp, const SamplerConfig& cfg, Rng& rng);

template <class T>
struct MhResult {
  T value;
  Acceptance moves;
};

// Independence Metropolis-Hastings with prior proposals; cfg.mh_tries_per_param tries.
MhResult<Matrix> mh_update_K(std::size_t r, const MixtureState& state, const Dataset& data,
                             const Hyperparams& hp, const SamplerConfig& cfg, Rng& rng);
MhResult<double> mh_update_w(std::size_t r, Eigen::Index d, const MixtureState& state,
                             const Dataset& data, const Hyperparams& hp, const SamplerConfig& cfg,
                             Rng& rng);
MhResult<double> mh_update_noise(std::size_t r, Eigen::Index l, const MixtureState& state,
                                 const Dataset& data, const Hyperparams& hp,
                                 const SamplerConfig& cfg, Rng& rng);

/// Terms of ln p(alpha | c, N) up to a constant:
/// (c + a0 - 1) ln alpha, -b0 alpha, ln Gamma(alpha), -ln Gamma(N + alpha).
struct AlphaLogTarget {
  std::vector<double> terms;
};

AlphaLogTarget alpha_log_target(double alpha, std::size_t c, std::size_t n, const Hyperparams& hp);

/// ln of the MH acceptance ratio for alpha -> proposal under a log-space
/// random walk, summed term by term so any constant term cancels exactly.
double alpha_log_acceptance(const AlphaLogTarget& current, const AlphaLogTarget& proposal,
                            double alpha, double proposed_alpha);

MhResult<double> mh_update_alpha(const MixtureState& state, const Hyperparams& hp,
                                 const SamplerConfig& cfg, Rng& rng);

/// Full sweep: indicators in index order, then every component's
/// mu, R, sigma0, K, w_d, noise_l, then alpha; finally canonical relabeling.
MixtureState sweep(MixtureState state, const Dataset& data, const Hyperparams& hp,
                   const SamplerConfig& cfg, Rng& rng, SweepDiagnostics* diag = nullptr);

// Prior draw of alpha, a CRP partition of n points and component parameters.
MixtureState sample_prior_state(std::size_t n, const Hyperparams& hp, Rng& rng);

using SweepObserver =
    std::function<void(int sweep, const MixtureState& state, const SweepDiagnostics& diag)>;

/// Runs cfg.n_sweeps sweeps from a prior-sampled state seeded by cfg.seed and
/// keeps the states after burn-in. Numerical failures are rethrown as
/// NumericalError naming the sweep.
Chain run(const Dataset& data, const Hyperparams& hp, const SamplerConfig& cfg,
          const SweepObserver& observer = {});

}  // namespace immgp
