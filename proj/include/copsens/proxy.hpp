#ifndef COPSENS_PROXY_HPP
#define COPSENS_PROXY_HPP

#include <copsens/bounds.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace copsens {

/// Reduced-form regressions of T on Z and of Y on (T, Z), with Z scaled to
/// unit variance. Variances are maximum-likelihood (divide by n).
struct ProxyFit {
  double tilde_beta = 0.0;   // Z in the treatment regression
  double tilde_gamma = 0.0;  // Z in the outcome regression
  double tilde_tau = 0.0;    // T in the outcome regression
  double sigma2_T = 1.0;
  double sigma2_T_given_Z = 1.0;
  double sigma2_Y_given_TZ = 1.0;
  double se_tilde_beta = 0.0;
  double se_tilde_gamma = 0.0;
  double se_tilde_tau = 0.0;
  Index n = 0;
};

inline ProxyFit fit_proxy(const VectorXd& y, const VectorXd& t, const VectorXd& z) {
  const Index n = y.size();
  require(n >= 4, "dimension", "proxy fit needs at least 4 observations");
  detail::require_size(t.size(), n, "treatment vector");
  detail::require_size(z.size(), n, "proxy vector");
  require(y.allFinite() && t.allFinite() && z.allFinite(), "non_finite", "proxy inputs must be finite");
  const double dn = static_cast<double>(n);
  auto center = [](const VectorXd& v) { return VectorXd(v.array() - v.mean()); };
  const VectorXd yc = center(y), tc = center(t);
  VectorXd zc = center(z);
  const double var_z = zc.squaredNorm() / dn;
  require(var_z > 0.0, "singular_fit", "proxy has zero variance");
  zc /= std::sqrt(var_z);

  ProxyFit f;
  f.n = n;
  f.sigma2_T = tc.squaredNorm() / dn;
  require(f.sigma2_T > 0.0, "singular_fit", "treatment has zero variance");
  f.tilde_beta = tc.dot(zc) / dn;  // unit-variance Z
  const VectorXd rt = tc - f.tilde_beta * zc;
  f.sigma2_T_given_Z = rt.squaredNorm() / dn;
  if (!(f.sigma2_T_given_Z > 1e-12 * f.sigma2_T)) {
    throw InputError("singular_fit", "treatment and proxy are collinear");
  }

  Eigen::Matrix2d xtx;
  xtx << tc.squaredNorm(), tc.dot(zc), tc.dot(zc), zc.squaredNorm();
  const Eigen::Vector2d xty(tc.dot(yc), zc.dot(yc));
  const Eigen::Vector2d coef = xtx.ldlt().solve(xty);
  f.tilde_tau = coef(0);
  f.tilde_gamma = coef(1);
  const VectorXd ry = yc - f.tilde_tau * tc - f.tilde_gamma * zc;
  f.sigma2_Y_given_TZ = ry.squaredNorm() / dn;
  require(f.sigma2_Y_given_TZ > 0.0, "singular_fit", "outcome is an exact linear function of treatment and proxy");

  const Eigen::Matrix2d inv = xtx.inverse();
  const double s2y = ry.squaredNorm() / (dn - 3.0);
  f.se_tilde_tau = std::sqrt(s2y * inv(0, 0));
  f.se_tilde_gamma = std::sqrt(s2y * inv(1, 1));
  f.se_tilde_beta = std::sqrt(rt.squaredNorm() / (dn - 2.0) / zc.squaredNorm());
  return f;
}

struct ProxyDomain {
  double lo = 0.0;
  double hi = 1.0;
  bool no_information = false;  // tilde_beta = tilde_gamma = 0
};

/// Feasible values of the confounder's share of proxy variance.
inline ProxyDomain sigma_u2_domain(const ProxyFit& f) {
  const double a = f.tilde_gamma * f.tilde_gamma * f.sigma2_T_given_Z;
  const double b = f.tilde_beta * f.tilde_beta;
  const double c = f.sigma2_Y_given_TZ;
  ProxyDomain d;
  d.lo = std::clamp((a + b * c) / (a + f.sigma2_T * c), 0.0, 1.0);
  d.hi = 1.0;
  d.no_information = f.tilde_beta == 0.0 && f.tilde_gamma == 0.0;
  return d;
}

/// tau = tilde_tau - tilde_gamma tilde_beta (1 - s) / (sigma2_T s - tilde_beta^2).
inline double tau_adjusted(const ProxyFit& f, double sigma_u2) {
  const ProxyDomain d = sigma_u2_domain(f);
  if (!(sigma_u2 >= d.lo - 1e-12 && sigma_u2 <= d.hi + 1e-12)) {
    throw InputError("domain", "sigma_u2 = " + std::to_string(sigma_u2) + " lies outside its feasible domain [" +
                                   std::to_string(d.lo) + ", " + std::to_string(d.hi) + "]");
  }
  const double denom = f.sigma2_T * sigma_u2 - f.tilde_beta * f.tilde_beta;
  if (!(denom > 1e-9 * f.sigma2_T)) {
    throw InputError("positivity", "sigma_u2 reaches the point where the treatment is a deterministic function of "
                                   "the confounder; the effect is not identified");
  }
  return f.tilde_tau - f.tilde_gamma * f.tilde_beta * (1.0 - sigma_u2) / denom;
}

/// Range of tau over the feasible domain; tilde_tau is one endpoint.
inline IgnoranceRegion tau_bounds(const ProxyFit& f) {
  IgnoranceRegion reg;
  reg.naive = f.tilde_tau;
  reg.r2_cap = 1.0;
  const double prod = f.tilde_gamma * f.tilde_beta;
  reg.lower = reg.upper = f.tilde_tau;
  if (prod == 0.0) return reg;
  const double other = f.tilde_tau - f.tilde_beta * f.sigma2_Y_given_TZ / (f.tilde_gamma * f.sigma2_T_given_Z);
  if (prod > 0.0) reg.lower = other; else reg.upper = other;
  return reg;
}

inline nlohmann::json to_json(const ProxyFit& f) {
  return {{"tilde_beta", f.tilde_beta},
          {"tilde_gamma", f.tilde_gamma},
          {"tilde_tau", f.tilde_tau},
          {"sigma2_T", f.sigma2_T},
          {"sigma2_T_given_Z", f.sigma2_T_given_Z},
          {"sigma2_Y_given_TZ", f.sigma2_Y_given_TZ},
          {"se_tilde_beta", f.se_tilde_beta},
          {"se_tilde_gamma", f.se_tilde_gamma},
          {"se_tilde_tau", f.se_tilde_tau},
          {"n", f.n}};
}

}  // namespace copsens

#endif  // COPSENS_PROXY_HPP
