#ifndef COPSENS_TESTS_SUPPORT_HPP
#define COPSENS_TESTS_SUPPORT_HPP

#include <copsens/copsens.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace copsens::testing {

/// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    set_warning_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() {
    set_warning_handler([](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); });
  }
  bool any_contains(const std::string& needle) const {
    for (const auto& m : messages)
      if (m.find(needle) != std::string::npos) return true;
    return false;
  }
  std::vector<std::string> messages;
};

inline MatrixXd random_normal(Index rows, Index cols, std::uint64_t seed, std::uint64_t stream = 99) {
  detail::Stream s(seed, stream);
  MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = s.normal();
  return out;
}

inline MatrixXd random_spd(Index m, std::uint64_t seed) {
  const MatrixXd a = random_normal(m, m, seed, 7);
  return a * a.transpose() + 0.5 * MatrixXd::Identity(m, m);
}

/// Random exact-parameter factor model with zero treatment means.
inline FactorModel random_factor_model(Index k, Index m, std::uint64_t seed, double noise = 1.0) {
  FactorModel fm;
  fm.loadings = random_normal(k, m, seed, 3);
  fm.noise_variance = noise;
  fm.treatment_means = VectorXd::Zero(k);
  fm.singular_values = Eigen::JacobiSVD<MatrixXd>(fm.loadings).singularValues();
  return fm;
}

/// (A coef, A Sigma A') for an SPD matrix A.
inline ConditionalConfounder transform(const ConditionalConfounder& cc, const MatrixXd& a) {
  return make_confounder(a * cc.coef, a * cc.cov * a.transpose(), cc.treatment_means);
}

inline FactorModel b61_model() {
  FactorModel fm;
  fm.loadings = MatrixXd(4, 1);
  fm.loadings << 2.0, 0.5, -0.4, 0.2;
  fm.noise_variance = 1.0;
  fm.treatment_means = VectorXd::Zero(4);
  fm.singular_values = VectorXd::Constant(1, std::sqrt(4.45));
  return fm;
}

/// Observed-data Gaussian outcome implied by a linear simulation truth.
inline GaussianOutcome population_outcome(const SimTruth& truth) {
  const ConditionalConfounder cc = conditional_confounder(true_factor_model(truth));
  GaussianOutcome o;
  o.tau_naive = truth.tau_true + cc.coef.transpose() * truth.gamma_true;
  o.sigma2_y_given_t = truth.sigma2_y_given_tu + truth.gamma_true.dot(cc.cov * truth.gamma_true);
  o.std_errors = VectorXd::Zero(truth.k() + 1);
  return o;
}

}  // namespace copsens::testing

#endif  // COPSENS_TESTS_SUPPORT_HPP
