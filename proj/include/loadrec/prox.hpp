#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "loadrec/transforms.hpp"

namespace loadrec {

// Soft-thresholding: entrywise prox of tau * |.|.
inline Matrix prox_l1(const Matrix& M, double tau) {
  return M.array().sign() * (M.array().abs() - tau).max(0.0);
}

// Entrywise clamp onto [lo, hi].
inline Matrix project_box(const Matrix& M, const Matrix& lo, const Matrix& hi) {
  if (lo.rows() != M.rows() || lo.cols() != M.cols() || hi.rows() != M.rows() ||
      hi.cols() != M.cols())
    throw ShapeError("project_box: bound shapes must match the argument");
  return M.cwiseMax(lo).cwiseMin(hi);
}

inline double project_box_scalar(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

struct NuclearProxResult {
  Matrix value;          // the prox point
  double nuclear_norm;   // ||value||_* (free by-product of the shrinkage)
  int rank;              // number of singular values surviving the threshold
  Matrix left;           // rows x rank: left singular vectors of the prox point
  Matrix right;          // cols x rank: right singular vectors of the prox point
};

namespace detail {

// Shrink singular values of M by tau using an explicit thin SVD.
inline NuclearProxResult nuclear_shrink_svd(const Matrix& M, double tau) {
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector shrunk = (s.array() - tau).max(0.0);
  int rank = 0;
  for (int i = 0; i < shrunk.size(); ++i)
    if (shrunk(i) > 0.0) ++rank;
  NuclearProxResult out;
  out.nuclear_norm = shrunk.sum();
  out.rank = rank;
  if (rank == 0) {
    out.value = Matrix::Zero(M.rows(), M.cols());
    out.left = Matrix::Zero(M.rows(), 0);
    out.right = Matrix::Zero(M.cols(), 0);
  } else {
    out.left = svd.matrixU().leftCols(rank);
    out.right = svd.matrixV().leftCols(rank);
    out.value = out.left * shrunk.head(rank).asDiagonal() * out.right.transpose();
  }
  return out;
}

// Shrink singular values via the Gram matrix of the short side. For a wide
// N x T matrix with N << T this costs O(N^2 T) instead of a full SVD; the
// singular values below ~sqrt(eps)*sigma_1 lose precision, which is harmless
// here because everything below the shrink threshold is discarded anyway.
inline NuclearProxResult nuclear_shrink_gram(const Matrix& M, double tau) {
  const bool wide = M.cols() >= M.rows();
  const Matrix G = wide ? Matrix(M * M.transpose()) : Matrix(M.transpose() * M);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
  const int n = static_cast<int>(G.rows());
  // eigenvalues ascending; singular values are sqrt of the nonnegative part
  NuclearProxResult out;
  out.nuclear_norm = 0.0;
  out.rank = 0;
  std::vector<int> keep;
  for (int i = n - 1; i >= 0; --i) {
    const double ev = eig.eigenvalues()(i);
    const double sv = ev > 0.0 ? std::sqrt(ev) : 0.0;
    if (sv > tau) {
      keep.push_back(i);
      out.nuclear_norm += sv - tau;
    }
  }
  out.rank = static_cast<int>(keep.size());
  if (out.rank == 0) {
    out.value = Matrix::Zero(M.rows(), M.cols());
    out.left = Matrix::Zero(M.rows(), 0);
    out.right = Matrix::Zero(M.cols(), 0);
    return out;
  }
  // Reconstruct U * diag((s - tau)) * V^T. With Q the kept eigenvectors of
  // the short-side Gram, the other factor is recovered as M^T Q / s.
  Matrix Q(n, out.rank);
  Vector scale(out.rank);  // (s - tau) / s
  Vector inv_s(out.rank);
  for (int k = 0; k < out.rank; ++k) {
    const double sv = std::sqrt(std::max(eig.eigenvalues()(keep[static_cast<std::size_t>(k)]), 0.0));
    Q.col(k) = eig.eigenvectors().col(keep[static_cast<std::size_t>(k)]);
    scale(k) = (sv - tau) / sv;
    inv_s(k) = 1.0 / sv;
  }
  if (wide) {
    // M = U s V^T, Q = U. value = Q diag(scale) Q^T M; V = M^T Q / s
    out.value = Q * scale.asDiagonal() * (Q.transpose() * M);
    out.left = Q;
    out.right = M.transpose() * Q * inv_s.asDiagonal();
  } else {
    // Q = V. value = M Q diag(scale) Q^T; U = M Q / s
    out.value = (M * Q) * scale.asDiagonal() * Q.transpose();
    out.left = M * Q * inv_s.asDiagonal();
    out.right = Q;
  }
  return out;
}

}  // namespace detail

// Singular-value shrinkage, the prox of tau * ||.||_*. `use_gram` selects the
// short-side Gram path (the default for strongly rectangular inputs);
// `force_svd` pins the explicit-SVD path for callers that need maximum
// accuracy on tiny singular values.
inline NuclearProxResult prox_nuclear(const Matrix& M, double tau, bool force_svd = false) {
  if (tau < 0.0) throw ValidationError("prox_nuclear: tau must be >= 0");
  const auto lo = static_cast<double>(std::min(M.rows(), M.cols()));
  const auto hi = static_cast<double>(std::max(M.rows(), M.cols()));
  if (!force_svd && hi >= 2.0 * lo && lo > 1.0)
    return detail::nuclear_shrink_gram(M, tau);
  return detail::nuclear_shrink_svd(M, tau);
}

}  // namespace loadrec
