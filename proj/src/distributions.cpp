// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/distributions.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "immgp/error.hpp"

namespace immgp::dist {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw NonPositiveParameter(std::string(what) + " must be positive, got " + std::to_string(v));
  }
}

double standard_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double g = standard_gamma(shape + 1.0, rng);
    return std::exp(std::log(g) + std::log(rng.uniform_open()) / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

Vector mvn_sample(const Vector& mean, const Matrix& precision, Rng& rng) {
  if (precision.rows() != mean.size()) throw DimensionMismatch("mvn_sample: precision/mean size");
  const auto f = linalg::chol_spd(precision);
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  // precision = L L^T, so L^{-T} z has covariance precision^{-1}.
  f.lower().triangularView<Eigen::Lower>().transpose().solveInPlace(z);
  return mean + z;
}

double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& precision) {
  if (x.size() != mean.size() || precision.rows() != x.size()) {
    throw DimensionMismatch("mvn_logpdf: sizes of x, mean and precision differ");
  }
  const auto f = linalg::chol_spd(precision);
  const Vector u = f.lower().transpose() * (x - mean);
  return 0.5 * linalg::logdet(f) - 0.5 * static_cast<double>(x.size()) * kLog2Pi -
         0.5 * u.squaredNorm();
}

Matrix wishart_sample(const Matrix& scale, double dof, Rng& rng) {
  const Eigen::Index d = scale.rows();
  if (dof < static_cast<double>(d)) {
    throw DofTooSmall("wishart_sample: dof " + std::to_string(dof) + " < dim " + std::to_string(d));
  }
  const auto f = linalg::chol_spd(scale);
  // Row by row: chi on the diagonal, then standard normals left of it.
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(2.0 * standard_gamma(0.5 * (dof - static_cast<double>(i)), rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix la = f.lower() * a;
  Matrix x = la * la.transpose();
  return 0.5 * (x + x.transpose());
}

double wishart_logpdf(const Matrix& x, const Matrix& scale, double dof) {
  const Eigen::Index d = scale.rows();
  if (x.rows() != d || x.cols() != d) throw DimensionMismatch("wishart_logpdf: sizes differ");
  if (dof < static_cast<double>(d)) throw DofTooSmall("wishart_logpdf: dof < dim");
  const auto fw = linalg::chol_spd(scale);
  const auto fx = linalg::chol_spd(x);
  const double dd = static_cast<double>(d);
  double log_b = -0.5 * dof * linalg::logdet(fw) - 0.5 * dof * dd * std::numbers::ln2 -
                 0.25 * dd * (dd - 1.0) * std::log(std::numbers::pi);
  for (Eigen::Index i = 0; i < d; ++i) log_b -= std::lgamma(0.5 * (dof - static_cast<double>(i)));
  const double tr = linalg::solve(fw, x).trace();
  return log_b + 0.5 * (dof - dd - 1.0) * linalg::logdet(fx) - 0.5 * tr;
}

double gamma_sample(double shape, double rate, Rng& rng) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  return standard_gamma(shape, rng) / rate;
}

double gamma_logpdf(double x, double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double lognormal_sample(double mu, double var, Rng& rng) {
  if (!(var > 0.0)) throw NonPositiveVariance("lognormal variance must be positive");
  return std::exp(mu + std::sqrt(var) * rng.normal());
}

double lognormal_logpdf(double w, double mu, double var) {
  if (!(var > 0.0)) throw NonPositiveVariance("lognormal variance must be positive");
  if (!(w > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = std::log(w) - mu;
  return -std::log(w) - 0.5 * (kLog2Pi + std::log(var)) - 0.5 * z * z / var;
}

std::vector<double> stirling_unsigned(int n) {
  if (n < 1 || n > 30) throw OutOfRange("stirling_unsigned: n must lie in [1, 30]");
  using u128 = unsigned __int128;
  // row[c] = |s(k, c)|, built with |s(k,c)| = |s(k-1,c-1)| + (k-1)|s(k-1,c)|.
  std::vector<u128> row(static_cast<std::size_t>(n) + 1, 0);
  row[0] = 1;
  for (int k = 1; k <= n; ++k) {
    for (int c = k; c >= 1; --c) {
      row[c] = row[c - 1] + static_cast<u128>(k - 1) * row[c];
    }
    row[0] = 0;
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int c = 1; c <= n; ++c) out[c - 1] = static_cast<double>(row[c]);
  return out;
}

std::vector<double> log_stirling_unsigned(int n) {
  if (n < 1) throw OutOfRange("log_stirling_unsigned: n must be >= 1");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> row(static_cast<std::size_t>(n) + 1, neg_inf);
  row[0] = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double log_km1 = k > 1 ? std::log(static_cast<double>(k - 1)) : neg_inf;
    for (int c = k; c >= 1; --c) {
      const double a = row[c - 1];
      const double b = row[c] == neg_inf || k == 1 ? neg_inf : log_km1 + row[c];
      const double hi = std::max(a, b);
      row[c] = hi == neg_inf ? neg_inf : hi + std::log1p(std::exp(std::min(a, b) - hi));
    }
    row[0] = neg_inf;
  }
  return {row.begin() + 1, row.end()};
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double v : values) s += std::exp(v - hi);
  return hi + std::log(s);
}

std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  assert(!log_weights.empty());
  const double norm = log_sum_exp(log_weights);
  if (!std::isfinite(norm)) throw NumericalError("sample_log_categorical: weights are not finite");
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    cum += std::exp(log_weights[k] - norm);
    if (u < cum) return k;
  }
  // Round-off can leave cum just below one; fall back to the last positive weight.
  for (std::size_t k = log_weights.size(); k-- > 0;) {
    if (std::isfinite(log_weights[k])) return k;
  }
  return log_weights.size() - 1;
}

}  // namespace immgp::dist
