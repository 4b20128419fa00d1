// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "immgp/error.hpp"

namespace immgp::linalg {

namespace {

void require_dims(const SpdFactor& f, Eigen::Index rows, const char* what) {
  if (rows != f.dim()) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(f.dim()) +
                            " rows, got " + std::to_string(rows));
  }
}

// max |a(i,j) - a(j,i)|, walked in tiles so the transposed reads stay in cache.
double max_asymmetry(const Matrix& a) {
  constexpr Eigen::Index kTile = 32;
  const Eigen::Index n = a.rows();
  double worst = 0.0;
  for (Eigen::Index jb = 0; jb < n; jb += kTile) {
    for (Eigen::Index ib = jb; ib < n; ib += kTile) {
      const Eigen::Index jend = std::min(n, jb + kTile);
      const Eigen::Index iend = std::min(n, ib + kTile);
      for (Eigen::Index j = jb; j < jend; ++j) {
        for (Eigen::Index i = std::max(ib, j + 1); i < iend; ++i) {
          worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
        }
      }
    }
  }
  return worst;
}

// In-place inverse of a lower triangular block by recursive halving.
void invert_lower(Eigen::Ref<Matrix> l) {
  const Eigen::Index n = l.rows();
  if (n <= 48) {
    Matrix eye = Matrix::Identity(n, n);
    l.triangularView<Eigen::Lower>().solveInPlace(eye);
    l = eye;
    return;
  }
  const Eigen::Index h = n / 2;
  auto a = l.topLeftCorner(h, h);
  auto b = l.bottomLeftCorner(n - h, h);
  auto c = l.bottomRightCorner(n - h, n - h);
  invert_lower(a);
  invert_lower(c);
  // [[A, 0], [B, C]]^{-1} = [[A^{-1}, 0], [-C^{-1} B A^{-1}, C^{-1}]].
  const Matrix ba = b * a.triangularView<Eigen::Lower>();
  b.noalias() = -(c.triangularView<Eigen::Lower>() * ba);
}

}  // namespace

Matrix inverse_lower(const SpdFactor& f) {
  Matrix linv = f.lower();
  if (linv.rows() > 0) invert_lower(linv);
  return linv;
}

SpdFactor chol_spd(const Matrix& a, const JitterSchedule& schedule) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("chol_spd: matrix is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()));
  }
  const Eigen::Index n = a.rows();
  if (n == 0) return SpdFactor{};
  if (!a.allFinite()) throw NotPositiveDefinite("chol_spd: non-finite entries");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (max_asymmetry(a) > 1e-9 * scale) {
    throw NotPositiveDefinite("chol_spd: matrix is not symmetric");
  }
  const double mean_diag = a.diagonal().mean();
  if (!(mean_diag > 0.0)) throw NotPositiveDefinite("chol_spd: non-positive mean diagonal");

  Matrix work(n, n);
  for (double rel : schedule.relative) {
    const double eps = rel * mean_diag;
    work = a;
    work.diagonal().array() += eps;
    Eigen::LLT<Eigen::Ref<Matrix>> llt(work);
    if (llt.info() != Eigen::Success) continue;
    const auto diag = work.diagonal();
    bool ok = true;
    for (Eigen::Index i = 0; i < n && ok; ++i) ok = diag[i] > 0.0 && std::isfinite(diag[i]);
    if (!ok) continue;
    work.triangularView<Eigen::StrictlyUpper>().setZero();
    SpdFactor f;
    f.lower_ = std::move(work);
    f.jitter_ = eps;
    return f;
  }
  throw NotPositiveDefinite("chol_spd: factorization failed after jitter schedule (n=" +
                            std::to_string(n) + ")");
}

double logdet(const SpdFactor& f) {
  return 2.0 * f.lower().diagonal().array().log().sum();
}

Matrix solve_lower(const SpdFactor& f, const Matrix& b) {
  require_dims(f, b.rows(), "solve");
  return f.lower().triangularView<Eigen::Lower>().solve(b);
}

Matrix solve(const SpdFactor& f, const Matrix& b) {
  require_dims(f, b.rows(), "solve");
  const auto lower = f.lower().triangularView<Eigen::Lower>();
  Matrix x = lower.solve(b);
  lower.transpose().solveInPlace(x);
  return x;
}

Vector solve(const SpdFactor& f, const Vector& b) {
  require_dims(f, b.rows(), "solve");
  const auto lower = f.lower().triangularView<Eigen::Lower>();
  Vector x = lower.solve(b);
  lower.transpose().solveInPlace(x);
  return x;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

double trace_prod(const SpdFactor& f, const Vector& y, const Matrix& g) {
  require_dims(f, y.size(), "trace_prod y");
  require_dims(f, g.rows(), "trace_prod G");
  if (g.cols() != g.rows()) throw DimensionMismatch("trace_prod: G must be square");
  const Matrix sinv_g = solve(f, g);
  const Vector alpha = solve(f, y);
  return sinv_g.trace() - alpha.dot(g * alpha);
}

Vector inverse_diagonal(const SpdFactor& f) {
  // S^{-1} = L^{-T} L^{-1}, so its diagonal holds the squared column norms of L^{-1}.
  return inverse_lower(f).colwise().squaredNorm().transpose();
}

Matrix inverse(const SpdFactor& f) {
  return solve(f, Matrix(Matrix::Identity(f.dim(), f.dim())));
}

}  // namespace immgp::linalg
