// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "immgp/linalg.hpp"
#include "immgp/rng.hpp"

// Samplers and log densities for the priors of the mixture model. Gamma is
// shape/rate (mean a/b); Wishart has E[X] = dof * scale.
namespace immgp::dist {

Vector mvn_sample(const Vector& mean, const Matrix& precision, Rng& rng);
double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& precision);

// Bartlett construction. Requires dof >= dim.
Matrix wishart_sample(const Matrix& scale, double dof, Rng& rng);
double wishart_logpdf(const Matrix& x, const Matrix& scale, double dof);

// Marsaglia-Tsang; shapes below one are boosted by u^{1/a}.
double gamma_sample(double shape, double rate, Rng& rng);
double gamma_logpdf(double x, double shape, double rate);

// ln(w) ~ N(mu, var). The density is over w, Jacobian included.
double lognormal_sample(double mu, double var, Rng& rng);
double lognormal_logpdf(double w, double mu, double var);

/// Unsigned Stirling numbers of the first kind |s(n, c)| for c = 1..n,
/// exact in 128-bit integers, then rounded to double. 1 <= n <= 30.
std::vector<double> stirling_unsigned(int n);

// ln |s(n, c)| for c = 1..n, any n >= 1.
std::vector<double> log_stirling_unsigned(int n);

double log_sum_exp(std::span<const double> values);

/// Draws an index with probability proportional to exp(log_weights[k]),
/// consuming exactly one uniform.
std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng);

}  // namespace immgp::dist
