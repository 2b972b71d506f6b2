#ifndef COPSENS_DETAIL_LINALG_HPP
#define COPSENS_DETAIL_LINALG_HPP

#include <copsens/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace copsens::detail {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending
/// order.
struct SymEig {
  VectorXd values;
  MatrixXd vectors;
};

inline SymEig sym_eig_desc(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigen", "symmetric eigendecomposition failed");
  }
  const Index n = a.rows();
  SymEig out{VectorXd(n), MatrixXd(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

/// Flip each column so that its largest-magnitude entry is positive (ties go
/// to the lowest index).
inline void canonicalize_signs(MatrixXd& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < columns.rows(); ++i) {
      const double a = std::abs(columns(i, j));
      if (a > best_abs * (1.0 + 1e-12) + 1e-300) {
        best_abs = a;
        best = i;
      }
    }
    if (columns(best, j) < 0.0) columns.col(j) *= -1.0;
  }
}

inline double max_abs_asymmetry(const MatrixXd& a) {
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped to 0).
inline MatrixXd sqrt_psd(const MatrixXd& a) {
  const SymEig e = sym_eig_desc(a);
  const VectorXd r = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

/// Symmetric inverse square root with an absolute eigenvalue floor.
inline MatrixXd inv_sqrt_psd(const MatrixXd& a, double floor = 1e-12) {
  const SymEig e = sym_eig_desc(a);
  const VectorXd r = e.values.cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

/// (A^+)^{1/2}: eigenvalues below rel_tol * lambda_max are treated as zero.
inline MatrixXd pinv_sqrt_psd(const MatrixXd& a, double rel_tol = 1e-10) {
  const SymEig e = sym_eig_desc(a);
  const double cutoff = rel_tol * std::max(e.values(0), 0.0);
  VectorXd r(e.values.size());
  for (Index i = 0; i < r.size(); ++i) {
    r(i) = e.values(i) > cutoff && e.values(i) > 0.0 ? 1.0 / std::sqrt(e.values(i)) : 0.0;
  }
  return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

inline int numerical_rank(const VectorXd& desc_eigenvalues, double rel_tol) {
  if (desc_eigenvalues.size() == 0 || desc_eigenvalues(0) <= 0.0) return 0;
  const double cutoff = rel_tol * desc_eigenvalues(0);
  int rank = 0;
  for (Index i = 0; i < desc_eigenvalues.size(); ++i) {
    if (desc_eigenvalues(i) > cutoff) ++rank;
  }
  return rank;
}

/// Radial projection onto the Euclidean ball of the given radius.
inline VectorXd project_ball(VectorXd z, double radius) {
  const double n = z.norm();
  if (n > radius) z *= radius / n;
  return z;
}

inline void require_size(Index got, Index want, const std::string& what) {
  if (got != want) {
    throw InputError("dimension", what + ": expected length " + std::to_string(want) + ", got " +
                                      std::to_string(got));
  }
}

}  // namespace copsens::detail

#endif  // COPSENS_DETAIL_LINALG_HPP
