#ifndef COPSENS_CALIBRATE_HPP
#define COPSENS_CALIBRATE_HPP

#include <copsens/copula.hpp>
#include <copsens/detail/linalg.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>
#include <copsens/outcome.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace copsens {

/// gamma = sqrt(r2) Sigma^{-1/2} d. d must already be a unit vector.
inline SensitivitySpec gamma_from_r2_direction(double r2, const VectorXd& d, const MatrixXd& sigma_u_given_t) {
  require(r2 >= 0.0 && r2 <= 1.0, "domain", "r2 must lie in [0, 1]");
  detail::require_size(d.size(), sigma_u_given_t.rows(), "direction");
  if (std::abs(d.norm() - 1.0) > 1e-10) {
    throw InputError("normalization", "direction must have unit Euclidean norm (got " + std::to_string(d.norm()) + ")");
  }
  const detail::SymEig e = detail::sym_eig_desc(sigma_u_given_t);
  const bool full = detail::numerical_rank(e.values, 1e-10) == sigma_u_given_t.rows();
  const MatrixXd root = full ? detail::inv_sqrt_psd(sigma_u_given_t) : detail::pinv_sqrt_psd(sigma_u_given_t);
  return SensitivitySpec::from_gamma(std::sqrt(r2) * root * d, sigma_u_given_t);
}

/// gamma' Sigma gamma: the share of residual (Gaussianized) outcome variance
/// explained by the confounder.
inline double r2_of_gamma(const VectorXd& gamma, const MatrixXd& sigma_u_given_t) {
  detail::require_size(gamma.size(), sigma_u_given_t.rows(), "sensitivity vector");
  const double r2 = gamma.dot(sigma_u_given_t * gamma);
  if (r2 > 1.0 + 1e-9) throw InputError("domain", "gamma' Sigma gamma exceeds 1");
  return std::max(r2, 0.0);
}

namespace detail {

inline double ols_r2(const MatrixXd& x, const VectorXd& y) {
  const VectorXd yc = y.array() - y.mean();
  const double tss = yc.squaredNorm();
  require(tss > 0.0, "degenerate", "outcome has zero variance");
  if (x.cols() == 0) return 0.0;
  MatrixXd xi(x.rows(), x.cols() + 1);
  xi.col(0).setOnes();
  xi.rightCols(x.cols()) = x;
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(xi);
  if (qr.rank() < xi.cols()) throw InputError("singular_fit", "benchmark regression design is rank deficient");
  const VectorXd resid = y - xi * qr.solve(y);
  return 1.0 - resid.squaredNorm() / tss;
}

inline MatrixXd drop_columns(const MatrixXd& x, const std::vector<Index>& cols) {
  std::set<Index> drop(cols.begin(), cols.end());
  for (Index j : drop) require(j >= 0 && j < x.cols(), "dimension", "column index out of range");
  MatrixXd out(x.rows(), x.cols() - static_cast<Index>(drop.size()));
  Index c = 0;
  for (Index j = 0; j < x.cols(); ++j) {
    if (!drop.count(j)) out.col(c++) = x.col(j);
  }
  return out;
}

inline double partial_from(double r2_full, double r2_reduced) {
  if (!(1.0 - r2_reduced > 1e-12)) {
    throw NumericalError("degenerate", "reduced model already explains all outcome variance");
  }
  double p = (r2_full - r2_reduced) / (1.0 - r2_reduced);
  if (p < 0.0) {
    if (p < -1e-6) warn("partial R^2 of " + std::to_string(p) + " clipped to 0");
    p = 0.0;
  }
  return p;
}

}  // namespace detail

/// Partial R^2 of the columns `j` for y after controlling for the other
/// treatments, on the raw outcome scale.
inline double partial_r2_treatment(const TreatmentMatrix& T, const VectorXd& y, const std::vector<Index>& j) {
  detail::require_size(y.size(), T.n(), "outcome vector");
  require(!j.empty(), "dimension", "column set must be nonempty");
  const double full = detail::ols_r2(T.data(), y);
  const double reduced = detail::ols_r2(detail::drop_columns(T.data(), j), y);
  return detail::partial_from(full, reduced);
}

/// Implicit R^2 of a probit fit: Var(eta) / (Var(eta) + 1).
inline double implicit_r2(const TreatmentMatrix& T, const BinaryOutcome& model) {
  detail::require_size(model.probit_coef.size(), T.k(), "probit coefficients");
  const VectorXd eta = T.data() * model.probit_coef;
  const double var = (eta.array() - eta.mean()).square().mean();
  return var / (var + 1.0);
}

/// Partial implicit R^2 of columns `j`: the probit is refit without them and
/// the two implicit R^2 values are composed like an ordinary partial R^2.
inline double implicit_r2(const TreatmentMatrix& T, const VectorXd& y_binary, const BinaryOutcome& model,
                          const std::vector<Index>& j) {
  const double full = implicit_r2(T, model);
  const MatrixXd reduced_x = detail::drop_columns(T.data(), j);
  double reduced = 0.0;
  if (reduced_x.cols() > 0) {
    const TreatmentMatrix reduced_T(reduced_x);
    reduced = implicit_r2(reduced_T, fit_probit(reduced_T, y_binary));
  }
  return detail::partial_from(full, reduced);
}

}  // namespace copsens

#endif  // COPSENS_CALIBRATE_HPP
