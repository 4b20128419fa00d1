// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <Eigen/Dense>
#include <vector>

namespace immgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace linalg {

// Diagonal loadings tried in order; each entry is scaled by mean(diag(A)).
struct JitterSchedule {
  std::vector<double> relative{0.0, 1e-10, 1e-8, 1e-6};

  static JitterSchedule none() { return JitterSchedule{{0.0}}; }
};

// Cholesky factor L of A + eps*I, with eps the first schedule entry that worked.
class SpdFactor {
 public:
  const Matrix& lower() const { return lower_; }
  Eigen::Index dim() const { return lower_.rows(); }
  double jitter() const { return jitter_; }

 private:
  friend SpdFactor chol_spd(const Matrix& a, const JitterSchedule& schedule);

  Matrix lower_;
  double jitter_ = 0.0;
};

/// Factor a symmetric matrix, retrying with the jitter schedule.
/// Throws NotPositiveDefinite once the schedule is exhausted (or when `a`
/// is not symmetric to 1e-9), DimensionMismatch for non-square input.
SpdFactor chol_spd(const Matrix& a, const JitterSchedule& schedule = {});

double logdet(const SpdFactor& f);

// X with (L L^T) X = B.
Matrix solve(const SpdFactor& f, const Matrix& b);
Vector solve(const SpdFactor& f, const Vector& b);

// L^{-1} B, the forward half of a solve.
Matrix solve_lower(const SpdFactor& f, const Matrix& b);

Matrix kron(const Matrix& a, const Matrix& b);

/// Tr[(S^{-1} - S^{-1} y y^T S^{-1}) G] for the factored S, computed by
/// solving against the columns of G.
double trace_prod(const SpdFactor& f, const Vector& y, const Matrix& g);

// L^{-1}, lower triangular.
Matrix inverse_lower(const SpdFactor& f);

// diag(S^{-1}) from the factor.
Vector inverse_diagonal(const SpdFactor& f);

// Explicit inverse of the factored matrix; small matrices only.
Matrix inverse(const SpdFactor& f);

}  // namespace linalg
}  // namespace immgp
