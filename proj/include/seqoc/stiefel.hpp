#pragma once

// Cayley-transform updates on the set of matrices with orthonormal columns.

#include <cmath>
#include <random>
#include <string>

#include "seqoc/common.hpp"
#include "seqoc/error.hpp"

namespace seqoc::stiefel {

inline constexpr double default_tolerance = 1e-8;

/// ||W^T W - I||_F.
inline double orthogonality_error(const Matrix& w) {
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm();
}

/// A matrix with orthonormal columns (r >= c), checked on construction.
class ManifoldPoint {
 public:
  explicit ManifoldPoint(Matrix value, double tolerance = default_tolerance)
      : value_(std::move(value)), tolerance_(tolerance) {
    if (value_.rows() < value_.cols() || value_.cols() < 1) {
      throw ShapeError("manifold point needs rows >= cols >= 1, got " +
                       std::to_string(value_.rows()) + "x" + std::to_string(value_.cols()));
    }
    const double err = orthogonality_error(value_);
    if (!(err <= tolerance_)) {
      throw ValidationError("columns are not orthonormal (error " + std::to_string(err) + ")");
    }
  }

  const Matrix& value() const noexcept { return value_; }
  double tolerance() const noexcept { return tolerance_; }

 private:
  Matrix value_;
  double tolerance_;
};

/// Thin Q factor of Z with columns sign-fixed so that diag(R) >= 0.
inline Matrix orthonormalize(const Matrix& z) {
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ() * Matrix::Identity(z.rows(), z.cols());
  const Matrix r = qr.matrixQR().topRows(z.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < z.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

inline ManifoldPoint init_orthogonal(Index rows, Index cols, std::uint64_t seed) {
  if (cols < 1 || rows < cols) {
    throw ShapeError("init_orthogonal needs rows >= cols >= 1, got " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) z(i, j) = normal(rng);
  }
  return ManifoldPoint(orthonormalize(z));
}

/// W' = (I + mu/2 A)^{-1} (I - mu/2 A) W with A = G W^T - W G^T, no cleanup.
inline Matrix cayley_transform(const Matrix& w, const Matrix& g, double mu) {
  if (g.rows() != w.rows() || g.cols() != w.cols()) {
    throw ShapeError("gradient shape does not match the parameter");
  }
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    throw ShapeError("step size must be finite and non-negative");
  }
  const Index r = w.rows();
  const Matrix a = g * w.transpose() - w * g.transpose();
  const Matrix half = 0.5 * mu * a;
  const Matrix lhs = Matrix::Identity(r, r) + half;
  Eigen::PartialPivLU<Matrix> lu(lhs);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw StepFailure("Cayley system is numerically singular (rcond " + std::to_string(rcond) + ")");
  }
  return lu.solve(w - half * w);
}

/// One Cayley step. Re-orthonormalizes if float drift exceeds the tolerance.
inline ManifoldPoint cayley_step(const ManifoldPoint& w, const Matrix& g, double mu) {
  Matrix next = cayley_transform(w.value(), g, mu);
  if (!next.allFinite()) {
    throw StepFailure("Cayley step produced non-finite entries");
  }
  if (orthogonality_error(next) > default_tolerance) {
    next = orthonormalize(next);
  }
  return ManifoldPoint(std::move(next), w.tolerance());
}

/// Orthogonality constraint on the short dimension: wide blocks are stepped
/// through their transpose.
inline double block_error(const Matrix& w) {
  return w.rows() >= w.cols() ? orthogonality_error(w) : orthogonality_error(w.transpose());
}

inline Matrix step_block(const Matrix& w, const Matrix& g, double mu) {
  if (w.rows() >= w.cols()) {
    return cayley_step(ManifoldPoint(w, 1e-6), g, mu).value();
  }
  return cayley_step(ManifoldPoint(w.transpose(), 1e-6), g.transpose(), mu).value().transpose();
}

inline Matrix init_block(Index rows, Index cols, std::uint64_t seed) {
  if (rows >= cols) return init_orthogonal(rows, cols, seed).value();
  return init_orthogonal(cols, rows, seed).value().transpose();
}

}  // namespace seqoc::stiefel
