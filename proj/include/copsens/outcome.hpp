#ifndef COPSENS_OUTCOME_HPP
#define COPSENS_OUTCOME_HPP

#include <copsens/detail/linalg.hpp>
#include <copsens/detail/normal.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace copsens {

// ---------------------------------------------------------------------------
// Conditional laws F_{Y|t} at a fixed treatment value.

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;

  double cdf(double y) const { return detail::norm_cdf((y - mean) / sd); }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw InputError("domain", "quantile level must lie in (0, 1)");
    return mean + sd * detail::norm_quantile(p);
  }

  // Exact shortcuts for the Gaussianization round trip.
  double from_normal(double z) const { return mean + sd * z; }
  double to_normal(double y) const { return (y - mean) / sd; }
};

/// Bernoulli(mu) outcome in {0, 1}.
struct BinaryLaw {
  double mu = 0.5;

  double cdf(double y) const {
    if (y < 0.0) return 0.0;
    if (y < 1.0) return 1.0 - mu;
    return 1.0;
  }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw InputError("domain", "quantile level must lie in (0, 1)");
    return p > 1.0 - mu ? 1.0 : 0.0;
  }
};

/// mean(t) plus a pooled residual law; the residual quantile function is the
/// type-7 linear interpolation between order statistics.
struct EmpiricalLaw {
  double mean = 0.0;
  const std::vector<double>* residuals = nullptr;  // sorted ascending, size >= 2

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw InputError("domain", "quantile level must lie in (0, 1)");
    const auto& r = *residuals;
    const double h = static_cast<double>(r.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= r.size()) return mean + r.back();
    return mean + r[lo] + (h - static_cast<double>(lo)) * (r[lo + 1] - r[lo]);
  }

  double cdf(double y) const {
    const auto& r = *residuals;
    const double x = y - mean;
    if (x < r.front()) return 0.0;
    if (x >= r.back()) return 1.0;
    const auto it = std::upper_bound(r.begin(), r.end(), x);
    const auto j = static_cast<std::size_t>(std::distance(r.begin(), it)) - 1;
    const double width = r[j + 1] - r[j];
    const double frac = width > 0.0 ? (x - r[j]) / width : 0.0;
    return (static_cast<double>(j) + frac) / static_cast<double>(r.size() - 1);
  }
};

// ---------------------------------------------------------------------------
// Fitted outcome models.

/// Linear-Gaussian observed outcome: Y | t ~ N(intercept + tau_naive' t, sigma2).
struct GaussianOutcome {
  VectorXd tau_naive;
  double intercept = 0.0;
  double sigma2_y_given_t = 1.0;
  VectorXd std_errors;  // intercept first, then one per treatment

  double mean(const VectorXd& t) const {
    detail::require_size(t.size(), tau_naive.size(), "treatment vector");
    return intercept + tau_naive.dot(t);
  }
  double sigma_y_given_t() const { return std::sqrt(sigma2_y_given_t); }
  GaussianLaw law(const VectorXd& t) const { return {mean(t), sigma_y_given_t()}; }
};

/// Probit observed outcome: P(Y = 1 | t) = Phi(intercept + coef' t).
struct BinaryOutcome {
  VectorXd probit_coef;
  double probit_intercept = 0.0;
  double p_y1 = 0.5;  // marginal P(Y = 1)
  VectorXd std_errors;

  double linear_predictor(const VectorXd& t) const {
    detail::require_size(t.size(), probit_coef.size(), "treatment vector");
    return probit_intercept + probit_coef.dot(t);
  }
  double mu_y(const VectorXd& t) const { return detail::norm_cdf(linear_predictor(t)); }
  double mean(const VectorXd& t) const { return mu_y(t); }
  BinaryLaw law(const VectorXd& t) const { return {mu_y(t)}; }
};

/// Least-squares polynomial regressor on standardized treatments: per-column
/// powers 1..degree plus, optionally, all pairwise products.
struct PolynomialRegressor {
  int degree = 2;
  bool interactions = false;
  VectorXd center;
  VectorXd scale;
  VectorXd coefficients;

  VectorXd features(const VectorXd& t) const {
    const Index k = center.size();
    detail::require_size(t.size(), k, "treatment vector");
    const VectorXd x = (t - center).cwiseQuotient(scale);
    const Index n_inter = interactions ? k * (k - 1) / 2 : 0;
    VectorXd f(1 + k * degree + n_inter);
    Index c = 0;
    f(c++) = 1.0;
    for (Index j = 0; j < k; ++j) {
      double p = 1.0;
      for (int d = 1; d <= degree; ++d) {
        p *= x(j);
        f(c++) = p;
      }
    }
    for (Index a = 0; a < k && interactions; ++a)
      for (Index b = a + 1; b < k; ++b) f(c++) = x(a) * x(b);
    return f;
  }

  double predict(const VectorXd& t) const { return coefficients.dot(features(t)); }
};

/// Outcome model with a pluggable conditional mean and a homoskedastic pooled
/// residual law.
struct EmpiricalOutcome {
  std::function<double(const VectorXd&)> mean_fn;
  std::vector<double> residual_quantiles;  // sorted residual sample
  double sigma2_y_given_t = 1.0;
  std::optional<PolynomialRegressor> regressor;  // set when mean_fn is the built-in regressor

  static EmpiricalOutcome from_residuals(std::function<double(const VectorXd&)> mean_fn,
                                         std::vector<double> residuals) {
    require(residuals.size() >= 2, "dimension", "empirical outcome needs at least 2 residuals");
    for (double r : residuals) require(std::isfinite(r), "non_finite", "residuals must be finite");
    EmpiricalOutcome out;
    out.mean_fn = std::move(mean_fn);
    std::sort(residuals.begin(), residuals.end());
    double ss = 0.0;
    for (double r : residuals) ss += r * r;
    out.sigma2_y_given_t = ss / static_cast<double>(residuals.size());
    out.residual_quantiles = std::move(residuals);
    return out;
  }

  double mean(const VectorXd& t) const { return mean_fn(t); }
  double sigma_y_given_t() const { return std::sqrt(sigma2_y_given_t); }
  EmpiricalLaw law(const VectorXd& t) const { return {mean(t), &residual_quantiles}; }
};

using OutcomeModel = std::variant<GaussianOutcome, BinaryOutcome, EmpiricalOutcome>;

namespace detail {

inline MatrixXd with_intercept(const MatrixXd& t) {
  MatrixXd x(t.rows(), t.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(t.cols()) = t;
  return x;
}

/// Least squares with a rank check; throws naming dependent columns.
inline VectorXd least_squares(const MatrixXd& x, const VectorXd& y, const std::vector<std::string>& names) {
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Index i = qr.rank(); i < x.cols(); ++i) {
      if (!cols.empty()) cols += ", ";
      cols += names[static_cast<std::size_t>(perm(i))];
    }
    throw InputError("singular_fit", "design matrix is rank deficient; linearly dependent column(s): " + cols);
  }
  return qr.solve(y);
}

inline std::vector<std::string> design_names(const TreatmentMatrix& T) {
  std::vector<std::string> names{"(intercept)"};
  names.insert(names.end(), T.column_names().begin(), T.column_names().end());
  return names;
}

}  // namespace detail

/// Ordinary least squares of y on the treatments with an intercept;
/// sigma2_y_given_t = RSS / (n - k - 1).
inline GaussianOutcome fit_linear(const TreatmentMatrix& T, const VectorXd& y) {
  detail::require_size(y.size(), T.n(), "outcome vector");
  require(y.allFinite(), "non_finite", "outcome contains non-finite values");
  require(T.n() > T.k() + 1, "dimension", "linear fit needs n > k + 1");
  const MatrixXd x = detail::with_intercept(T.data());
  const VectorXd beta = detail::least_squares(x, y, detail::design_names(T));
  const VectorXd resid = y - x * beta;
  const double dof = static_cast<double>(T.n() - T.k() - 1);

  GaussianOutcome out;
  out.intercept = beta(0);
  out.tau_naive = beta.tail(T.k());
  out.sigma2_y_given_t = resid.squaredNorm() / dof;
  const double var_y = (y.array() - y.mean()).square().mean();
  if (out.sigma2_y_given_t <= 1e-12 * std::max(var_y, 1e-300)) {
    warn("fit_linear: residual variance is numerically zero; outcome is a deterministic function of T");
  }
  const MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(MatrixXd::Identity(x.cols(), x.cols()));
  out.std_errors = (out.sigma2_y_given_t * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
  return out;
}

/// Probit maximum likelihood by damped Newton iterations. Converged when the
/// largest score component drops below 1e-8 (or after 100 iterations).
/// Constant treatment columns are not identified alongside the intercept and
/// are pinned at 0.
inline BinaryOutcome fit_probit(const TreatmentMatrix& T, const VectorXd& y) {
  detail::require_size(y.size(), T.n(), "outcome vector");
  Index ones = 0;
  for (Index i = 0; i < y.size(); ++i) {
    require(y(i) == 0.0 || y(i) == 1.0, "domain", "binary outcome must be coded 0/1");
    ones += y(i) == 1.0 ? 1 : 0;
  }
  require(ones > 0 && ones < y.size(), "one_class", "binary outcome needs both classes present");

  const Index k = T.k();
  std::vector<Index> active;
  for (Index j = 0; j < k; ++j) {
    const auto col = T.data().col(j);
    if (col.maxCoeff() - col.minCoeff() > 0.0) {
      active.push_back(j);
    } else {
      warn("fit_probit: treatment column " + T.column_names()[static_cast<std::size_t>(j)] +
           " is constant; its coefficient is fixed at 0");
    }
  }
  const Index p = static_cast<Index>(active.size()) + 1;
  MatrixXd x(T.n(), p);
  x.col(0).setOnes();
  for (Index a = 0; a + 1 < p; ++a) x.col(a + 1) = T.data().col(active[static_cast<std::size_t>(a)]);
  {
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    if (qr.rank() < p) throw InputError("singular_fit", "probit design matrix is rank deficient");
  }

  const double ybar = static_cast<double>(ones) / static_cast<double>(y.size());
  VectorXd beta = VectorXd::Zero(p);
  beta(0) = detail::norm_quantile(ybar);

  auto loglik = [&](const VectorXd& b) {
    const VectorXd eta = x * b;
    double ll = 0.0;
    for (Index i = 0; i < eta.size(); ++i) ll += detail::log_norm_cdf(y(i) == 1.0 ? eta(i) : -eta(i));
    return ll;
  };

  MatrixXd info(p, p);
  double ll = loglik(beta);
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    const VectorXd eta = x * beta;
    VectorXd score = VectorXd::Zero(p);
    VectorXd w(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      const double s = y(i) == 1.0 ? 1.0 : -1.0;
      const double lam = detail::mills_ratio(s * eta(i));
      score += (s * lam) * x.row(i).transpose();
      w(i) = lam * (lam + s * eta(i));
    }
    info.noalias() = x.transpose() * w.asDiagonal() * x;
    if (score.cwiseAbs().maxCoeff() < 1e-8) {
      converged = true;
      break;
    }
    const VectorXd step = info.ldlt().solve(score);
    double scale = 1.0;
    VectorXd next = beta + step;
    double next_ll = loglik(next);
    while (!(next_ll >= ll) && scale > 1e-10) {
      scale *= 0.5;
      next = beta + scale * step;
      next_ll = loglik(next);
    }
    if (!(next_ll >= ll)) break;  // no ascent possible: at the optimum to rounding
    beta = next;
    ll = next_ll;
    if (beta.cwiseAbs().maxCoeff() > 1e3) {
      throw NumericalError("separation", "probit coefficients diverge (> 1e3); the classes are perfectly separated");
    }
  }
  {
    // Every row on its own side of eta = 0: a separating hyperplane exists and
    // the likelihood has no finite maximiser.
    const VectorXd eta = x * beta;
    double margin = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < eta.size(); ++i) margin = std::min(margin, (y(i) == 1.0 ? 1.0 : -1.0) * eta(i));
    if (margin > 0.0) {
      throw NumericalError("separation", "probit outcome is perfectly separated by the treatments; no finite MLE");
    }
  }
  if (!converged) {
    const VectorXd eta = x * beta;
    VectorXd score = VectorXd::Zero(p);
    for (Index i = 0; i < eta.size(); ++i) {
      const double s = y(i) == 1.0 ? 1.0 : -1.0;
      score += (s * detail::mills_ratio(s * eta(i))) * x.row(i).transpose();
    }
    if (score.cwiseAbs().maxCoeff() > 1e-6 * static_cast<double>(y.size())) {
      warn("fit_probit: Newton iterations stopped before the score reached 1e-8");
    }
  }

  BinaryOutcome out;
  out.probit_intercept = beta(0);
  out.probit_coef = VectorXd::Zero(k);
  for (Index a = 0; a + 1 < p; ++a) out.probit_coef(active[static_cast<std::size_t>(a)]) = beta(a + 1);
  out.p_y1 = ybar;
  const VectorXd se_active = info.ldlt().solve(MatrixXd::Identity(p, p)).diagonal().cwiseMax(0.0).cwiseSqrt();
  out.std_errors = VectorXd::Zero(k + 1);
  out.std_errors(0) = se_active(0);
  for (Index a = 0; a + 1 < p; ++a) out.std_errors(active[static_cast<std::size_t>(a)] + 1) = se_active(a + 1);
  return out;
}

/// Empirical outcome backed by the built-in polynomial regressor.
inline EmpiricalOutcome fit_empirical(const TreatmentMatrix& T, const VectorXd& y, int degree = 2,
                                      bool interactions = false) {
  detail::require_size(y.size(), T.n(), "outcome vector");
  require(y.allFinite(), "non_finite", "outcome contains non-finite values");
  require(degree >= 1, "domain", "polynomial degree must be at least 1");
  PolynomialRegressor reg;
  reg.degree = degree;
  reg.interactions = interactions;
  reg.center = T.column_means();
  reg.scale = ((T.data().rowwise() - reg.center.transpose()).array().square().colwise().mean().sqrt())
                  .transpose();
  for (Index j = 0; j < reg.scale.size(); ++j) {
    if (!(reg.scale(j) > 0.0)) {
      throw InputError("singular_fit", "treatment column " + T.column_names()[static_cast<std::size_t>(j)] +
                                           " is constant");
    }
  }
  reg.coefficients = VectorXd::Zero(reg.features(T.row(0)).size());
  const Index p = reg.coefficients.size();
  require(T.n() > p, "dimension", "polynomial fit needs more rows than features");
  MatrixXd x(T.n(), p);
  for (Index i = 0; i < T.n(); ++i) x.row(i) = reg.features(T.row(i)).transpose();
  std::vector<std::string> names;
  for (Index j = 0; j < p; ++j) names.push_back("feature" + std::to_string(j));
  reg.coefficients = detail::least_squares(x, y, names);

  const VectorXd resid = y - x * reg.coefficients;
  EmpiricalOutcome out;
  out.residual_quantiles.assign(resid.data(), resid.data() + resid.size());
  std::sort(out.residual_quantiles.begin(), out.residual_quantiles.end());
  out.sigma2_y_given_t = resid.squaredNorm() / static_cast<double>(T.n() - p);
  out.regressor = reg;
  out.mean_fn = [reg](const VectorXd& t) { return reg.predict(t); };
  return out;
}

/// (F_{Y|t}, F^{-1}_{Y|t}) at treatment t, packaged as a law object.
template <class Outcome>
auto conditional_cdf_quantile(const Outcome& model, const VectorXd& t) {
  return model.law(t);
}

/// Conditional mean E[Y | t] for any outcome kind.
inline double outcome_mean(const OutcomeModel& model, const VectorXd& t) {
  return std::visit([&](const auto& m) { return m.mean(t); }, model);
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json to_json(const GaussianOutcome& o) {
  return {{"kind", "gaussian"},
          {"tau_naive", detail::to_std(o.tau_naive)},
          {"intercept", o.intercept},
          {"sigma2_y_given_t", o.sigma2_y_given_t},
          {"std_errors", detail::to_std(o.std_errors)}};
}

inline nlohmann::json to_json(const BinaryOutcome& o) {
  return {{"kind", "probit"},
          {"probit_coef", detail::to_std(o.probit_coef)},
          {"probit_intercept", o.probit_intercept},
          {"p_y1", o.p_y1},
          {"std_errors", detail::to_std(o.std_errors)}};
}

inline nlohmann::json to_json(const EmpiricalOutcome& o) {
  if (!o.regressor) {
    throw InputError("unserializable", "empirical outcome with a custom mean function cannot be serialized");
  }
  const PolynomialRegressor& r = *o.regressor;
  return {{"kind", "empirical"},
          {"degree", r.degree},
          {"interactions", r.interactions},
          {"center", detail::to_std(r.center)},
          {"scale", detail::to_std(r.scale)},
          {"coefficients", detail::to_std(r.coefficients)},
          {"sigma2_y_given_t", o.sigma2_y_given_t},
          {"residuals", o.residual_quantiles}};
}

inline nlohmann::json to_json(const OutcomeModel& model) {
  return std::visit([](const auto& m) { return to_json(m); }, model);
}

inline OutcomeModel outcome_from_json(const nlohmann::json& j) {
  auto vec = [&](const char* key) {
    const auto& a = j.at(key);
    return detail::vector_from_json(a, static_cast<Index>(a.size()), key);
  };
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gaussian") {
      GaussianOutcome o;
      o.tau_naive = vec("tau_naive");
      o.intercept = j.at("intercept").get<double>();
      o.sigma2_y_given_t = j.at("sigma2_y_given_t").get<double>();
      o.std_errors = j.contains("std_errors") ? vec("std_errors") : VectorXd();
      require(o.sigma2_y_given_t > 0.0, "malformed_file", "sigma2_y_given_t must be positive");
      return o;
    }
    if (kind == "probit") {
      BinaryOutcome o;
      o.probit_coef = vec("probit_coef");
      o.probit_intercept = j.at("probit_intercept").get<double>();
      o.p_y1 = j.at("p_y1").get<double>();
      o.std_errors = j.contains("std_errors") ? vec("std_errors") : VectorXd();
      require(o.p_y1 > 0.0 && o.p_y1 < 1.0, "malformed_file", "p_y1 must lie in (0, 1)");
      return o;
    }
    if (kind == "empirical") {
      PolynomialRegressor r;
      r.degree = j.at("degree").get<int>();
      r.interactions = j.at("interactions").get<bool>();
      r.center = vec("center");
      r.scale = vec("scale");
      r.coefficients = vec("coefficients");
      EmpiricalOutcome o = EmpiricalOutcome::from_residuals([r](const VectorXd& t) { return r.predict(t); },
                                                            j.at("residuals").get<std::vector<double>>());
      o.sigma2_y_given_t = j.at("sigma2_y_given_t").get<double>();
      o.regressor = r;
      return o;
    }
    throw InputError("malformed_file", "unknown outcome kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed_file", std::string("outcome file: ") + e.what());
  }
}

}  // namespace copsens

#endif  // COPSENS_OUTCOME_HPP
