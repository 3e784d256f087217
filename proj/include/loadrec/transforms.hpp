#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>

#include "loadrec/errors.hpp"
#include "loadrec/rng.hpp"

namespace loadrec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Interval-averaging operator: maps N x T to N x T_s by taking the mean of
// each contiguous block of r columns. Block j covers columns [j*r, (j+1)*r).
// As a matrix it has one 1/r-weighted block per coarse column.
struct AveragingOperator {
  int horizon_T;
  int factor_r;
  int width_Ts;

  AveragingOperator(int T, int r) : horizon_T(T), factor_r(r), width_Ts(T / r) {
    if (T < 1 || r < 1)
      throw ValidationError("AveragingOperator: horizon and factor must be >= 1");
    if (T % r != 0)
      throw ValidationError("AveragingOperator: horizon " + std::to_string(T) +
                            " not divisible by factor " + std::to_string(r));
  }
};

// Cumulative-sum operator: right-multiplication by the upper-triangular
// all-ones matrix. Row x maps to its running sums.
struct CumSumOperator {
  int horizon_T;
  explicit CumSumOperator(int T) : horizon_T(T) {
    if (T < 1) throw ValidationError("CumSumOperator: horizon must be >= 1");
  }
};

// Consecutive-difference operator, the exact inverse of CumSumOperator:
// row x maps to (x1, x2 - x1, ..., xT - x(T-1)).
struct DiffOperator {
  int horizon_T;
  explicit DiffOperator(int T) : horizon_T(T) {
    if (T < 1) throw ValidationError("DiffOperator: horizon must be >= 1");
  }
};

inline Matrix apply_averaging(const Matrix& M, const AveragingOperator& op) {
  if (M.cols() != op.horizon_T)
    throw ShapeError("apply_averaging: expected " + std::to_string(op.horizon_T) +
                     " columns, got " + std::to_string(M.cols()));
  Matrix out(M.rows(), op.width_Ts);
  for (int j = 0; j < op.width_Ts; ++j)
    out.col(j) = M.middleCols(j * op.factor_r, op.factor_r).rowwise().sum() /
                 static_cast<double>(op.factor_r);
  return out;
}

inline Matrix adjoint_averaging(const Matrix& M, const AveragingOperator& op) {
  if (M.cols() != op.width_Ts)
    throw ShapeError("adjoint_averaging: expected " + std::to_string(op.width_Ts) +
                     " columns, got " + std::to_string(M.cols()));
  Matrix out(M.rows(), op.horizon_T);
  for (int j = 0; j < op.width_Ts; ++j)
    for (int k = 0; k < op.factor_r; ++k)
      out.col(j * op.factor_r + k) = M.col(j) / static_cast<double>(op.factor_r);
  return out;
}

inline Matrix apply_cumsum(const Matrix& M) {
  Matrix out(M.rows(), M.cols());
  if (M.cols() == 0) return out;
  out.col(0) = M.col(0);
  for (int t = 1; t < M.cols(); ++t) out.col(t) = out.col(t - 1) + M.col(t);
  return out;
}

// Adjoint of cumsum: suffix sums (column t collects all columns >= t).
inline Matrix adjoint_cumsum(const Matrix& M) {
  Matrix out(M.rows(), M.cols());
  if (M.cols() == 0) return out;
  const int T = static_cast<int>(M.cols());
  out.col(T - 1) = M.col(T - 1);
  for (int t = T - 2; t >= 0; --t) out.col(t) = out.col(t + 1) + M.col(t);
  return out;
}

inline Matrix apply_diff(const Matrix& M) {
  Matrix out(M.rows(), M.cols());
  if (M.cols() == 0) return out;
  out.col(0) = M.col(0);
  for (int t = 1; t < M.cols(); ++t) out.col(t) = M.col(t) - M.col(t - 1);
  return out;
}

// Adjoint of diff: forward differences negated, with the last column kept.
inline Matrix adjoint_diff(const Matrix& M) {
  Matrix out(M.rows(), M.cols());
  if (M.cols() == 0) return out;
  const int T = static_cast<int>(M.cols());
  out.col(T - 1) = M.col(T - 1);
  for (int t = 0; t < T - 1; ++t) out.col(t) = M.col(t) - M.col(t + 1);
  return out;
}

// Exact spectral norm of the averaging operator: averaging a block of r
// equals an orthogonal projection scaled by 1/sqrt(r) per block.
inline double averaging_norm(const AveragingOperator& op) {
  return 1.0 / std::sqrt(static_cast<double>(op.factor_r));
}

// Power-iteration estimate of the spectral norm of a linear map given by
// forward/adjoint callables over N x T matrices. Fixed-seed start makes the
// estimate a pure function of the operator and the iteration budget.
inline double power_iteration_norm(
    const std::function<Matrix(const Matrix&)>& forward,
    const std::function<Matrix(const Matrix&)>& adjoint, int rows, int cols,
    int iters = 50, std::uint64_t seed = 0x9e3779b97f4a7c15ULL) {
  Rng rng(seed);
  Matrix x(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) x(i, j) = 2.0 * rng.uniform() - 1.0;
  double nx = x.norm();
  if (nx == 0.0) return 0.0;
  x /= nx;
  double value = 0.0;
  for (int k = 0; k < iters; ++k) {
    Matrix g = adjoint(forward(x));
    value = g.norm();  // Rayleigh-style estimate of ||op||^2
    if (value == 0.0) return 0.0;
    x = g / value;
  }
  return std::sqrt(value);
}

inline double cumsum_norm(int T, int iters = 50) {
  return power_iteration_norm([](const Matrix& m) { return apply_cumsum(m); },
                              [](const Matrix& m) { return adjoint_cumsum(m); }, 1, T,
                              iters);
}

inline double diff_norm(int T, int iters = 50) {
  return power_iteration_norm([](const Matrix& m) { return apply_diff(m); },
                              [](const Matrix& m) { return adjoint_diff(m); }, 1, T,
                              iters);
}

// Singular values in descending order, computed from the Gram matrix on the
// short side (house-count side in this codebase, so the eigenproblem stays
// tiny even for long horizons).
inline Vector singular_values(const Matrix& M) {
  if (M.rows() == 0 || M.cols() == 0) return Vector(0);
  const bool rows_short = M.rows() <= M.cols();
  const Matrix gram = rows_short ? Matrix(M * M.transpose()) : Matrix(M.transpose() * M);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  Vector ev = eig.eigenvalues();  // ascending
  Vector sv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    sv(i) = std::sqrt(std::max(0.0, ev(ev.size() - 1 - i)));
  return sv;
}

// Count of singular values above rel_tol times the largest.
inline int numerical_rank(const Matrix& M, double rel_tol = 1e-6) {
  const Vector sv = singular_values(M);
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double cut = rel_tol * sv(0);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++r;
  return r;
}

}  // namespace loadrec
