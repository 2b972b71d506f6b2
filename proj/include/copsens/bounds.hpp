#ifndef COPSENS_BOUNDS_HPP
#define COPSENS_BOUNDS_HPP

#include <copsens/copula.hpp>
#include <copsens/detail/linalg.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace copsens {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A bias magnitude, or an unbounded sentinel with its reason.
struct BiasBound {
  double value = 0.0;
  bool bounded = true;
  std::string reason;

  static BiasBound unbounded(std::string why) { return {kInf, false, std::move(why)}; }
};

struct IgnoranceRegion {
  double naive = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double r2_cap = 0.0;
  bool bounded = true;
  std::string reason;

  bool contains(double x) const { return lower <= x && x <= upper; }
};

namespace detail {

inline void check_r2(double r2) {
  if (!(r2 >= 0.0 && r2 <= 1.0)) throw InputError("domain", "r2 must lie in [0, 1]");
}

/// Sigma^{-1/2} mu, or Sigma^{+1/2} mu when Sigma is rank deficient and mu lies
/// in its row space; nullopt when mu leaves the row space.
inline std::optional<VectorXd> whiten(const ConditionalConfounder& cc, const VectorXd& mu) {
  const SymEig e = sym_eig_desc(cc.cov);
  const double cutoff = 1e-10 * std::max(e.values(0), 0.0);
  const VectorXd coords = e.vectors.transpose() * mu;
  VectorXd scaled = VectorXd::Zero(coords.size());
  double outside2 = 0.0;
  for (Index i = 0; i < coords.size(); ++i) {
    if (e.values(i) > cutoff && e.values(i) > 0.0) {
      scaled(i) = coords(i) / std::sqrt(e.values(i));
    } else {
      outside2 += coords(i) * coords(i);
    }
  }
  if (std::sqrt(outside2) > 1e-8 * mu.norm()) return std::nullopt;
  return VectorXd(e.vectors * scaled);
}

inline const char* kRowSpaceReason =
    "confounder mean difference leaves the row space of the singular conditional covariance";

}  // namespace detail

/// sigma_{y|t} gamma'(mu_{u|t1} - mu_{u|t2}), gamma standardized.
inline double bias_closed_form(const SensitivitySpec& spec, const ConditionalConfounder& cc,
                               double sigma_y_given_t, const Contrast& c) {
  const VectorXd mu = mu_delta(cc, c);
  detail::require_size(spec.m(), mu.size(), "sensitivity vector");
  return sigma_y_given_t * spec.gamma.dot(mu);
}

/// Largest |bias| over gamma with gamma' Sigma gamma <= r2:
/// sigma_{y|t} sqrt(r2) |Sigma^{-1/2} mu_{u|dt}|.
inline BiasBound worst_case_bias(const ConditionalConfounder& cc, double sigma_y_given_t, double r2,
                                 const Contrast& c) {
  detail::check_r2(r2);
  const VectorXd mu = mu_delta(cc, c);
  const auto w = detail::whiten(cc, mu);
  if (!w) {
    if (r2 == 0.0) return {0.0, true, {}};
    return BiasBound::unbounded(detail::kRowSpaceReason);
  }
  return {sigma_y_given_t * std::sqrt(r2) * w->norm(), true, {}};
}

struct Direction {
  VectorXd d;
  bool defined = true;  // false when mu_{u|dt} = 0: no confounding signal
};

/// Unit d with gamma = sqrt(r2) Sigma^{-1/2} d maximizing the (positive) bias.
inline Direction worst_case_direction(const ConditionalConfounder& cc, const Contrast& c) {
  const VectorXd mu = mu_delta(cc, c);
  const auto w = detail::whiten(cc, mu);
  if (!w) throw InputError("unbounded", detail::kRowSpaceReason);
  const double norm = w->norm();
  if (!(norm > 0.0)) return {VectorXd::Zero(mu.size()), false};
  return {*w / norm, true};
}

/// The gamma attaining worst_case_bias at level r2.
inline SensitivitySpec worst_case_gamma(const ConditionalConfounder& cc, double r2, const Contrast& c) {
  detail::check_r2(r2);
  const Direction dir = worst_case_direction(cc, c);
  const MatrixXd root = cc.full_rank() ? detail::inv_sqrt_psd(cc.cov) : detail::pinv_sqrt_psd(cc.cov);
  return SensitivitySpec::from_gamma(std::sqrt(r2) * root * dir.d, cc.cov);
}

inline IgnoranceRegion ignorance_region(double naive_effect, const ConditionalConfounder& cc,
                                        double sigma_y_given_t, double r2, const Contrast& c) {
  const BiasBound b = worst_case_bias(cc, sigma_y_given_t, r2, c);
  IgnoranceRegion reg;
  reg.naive = naive_effect;
  reg.r2_cap = r2;
  reg.bounded = b.bounded;
  reg.reason = b.reason;
  reg.lower = b.bounded ? naive_effect - b.value : -kInf;
  reg.upper = b.bounded ? naive_effect + b.value : kInf;
  return reg;
}

struct ContrastSweep {
  double max_bias = 0.0;
  VectorXd argmax_delta;     // first left singular vector of B
  MatrixXd null_space_basis; // k x (k - rank B), orthonormal
};

/// Largest worst-case bias over unit contrasts: attained along the first left
/// singular vector of B; contrasts in null(B') are unbiased.
inline ContrastSweep contrast_bound_sweep(const FactorModel& fm, double sigma_y_given_t, double r2) {
  detail::check_r2(r2);
  require(fm.noise_variance > 0.0, "invalid_model", "noise variance must be positive");
  const Index k = fm.k();
  const Eigen::JacobiSVD<MatrixXd> svd(fm.loadings, Eigen::ComputeFullU);
  const VectorXd sv = svd.singularValues();
  int rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > 1e-10 * std::max(sv(0), 1e-300)) ++rank;
  }
  MatrixXd u = svd.matrixU();
  detail::canonicalize_signs(u);
  ContrastSweep out;
  const double d1 = sv.size() > 0 ? sv(0) : 0.0;
  const double s2 = fm.noise_variance;
  out.max_bias = std::sqrt(d1 * d1 / (d1 * d1 + s2) * sigma_y_given_t * sigma_y_given_t / s2 * r2);
  out.argmax_delta = u.col(0);
  out.null_space_basis = u.rightCols(k - rank);
  return out;
}

struct RobustnessValue {
  double rv = 0.0;
  bool robust = false;   // the region excludes zero even at r2 = 1
  bool bounded = true;
};

/// Smallest r2 at which the ignorance region reaches zero:
/// naive^2 / (sigma_{y|t}^2 |Sigma^{-1/2} mu_{u|dt}|^2), clipped to 1.
inline RobustnessValue robustness_value(double naive_effect, const ConditionalConfounder& cc,
                                        double sigma_y_given_t, const Contrast& c) {
  if (naive_effect == 0.0) return {0.0, false, true};
  const auto w = detail::whiten(cc, mu_delta(cc, c));
  if (!w) return {0.0, false, false};
  const double denom = sigma_y_given_t * sigma_y_given_t * w->squaredNorm();
  if (!(denom > 0.0)) return {1.0, true, true};
  const double rv = naive_effect * naive_effect / denom;
  if (rv >= 1.0) return {1.0, true, true};
  return {rv, false, true};
}

/// Single-treatment bias magnitude from treatment and outcome partial R^2.
inline BiasBound single_treatment_bias(double r2_t_u, double r2_y_u_t, double var_y_given_t, double var_t) {
  require(r2_t_u >= 0.0 && r2_t_u <= 1.0, "domain", "r2_t_u must lie in [0, 1]");
  detail::check_r2(r2_y_u_t);
  require(var_y_given_t > 0.0 && var_t > 0.0, "domain", "variances must be positive");
  if (r2_t_u >= 1.0) {
    if (r2_y_u_t == 0.0) return {0.0, true, {}};
    return BiasBound::unbounded("treatment fully explained by the confounder (R^2_{T~U} = 1)");
  }
  return {std::sqrt(r2_t_u / (1.0 - r2_t_u) * r2_y_u_t * var_y_given_t / var_t), true, {}};
}

inline nlohmann::json region_record(const std::string& contrast_id, const IgnoranceRegion& reg,
                                    const std::optional<RobustnessValue>& rv = std::nullopt) {
  auto finite_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"contrast_id", contrast_id},
                      {"naive", reg.naive},
                      {"lower", finite_or_null(reg.lower)},
                      {"upper", finite_or_null(reg.upper)},
                      {"r2_cap", reg.r2_cap},
                      {"bounded", reg.bounded}};
  if (rv) {
    j["rv"] = rv->rv;
    j["robust"] = rv->robust;
  } else {
    j["rv"] = nullptr;
  }
  if (!reg.reason.empty()) j["reason"] = reg.reason;
  return j;
}

}  // namespace copsens

#endif  // COPSENS_BOUNDS_HPP
