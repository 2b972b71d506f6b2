#ifndef COPSENS_BINARY_HPP
#define COPSENS_BINARY_HPP

#include <copsens/bounds.hpp>
#include <copsens/calibrate.hpp>
#include <copsens/copula.hpp>
#include <copsens/detail/linalg.hpp>
#include <copsens/detail/normal.hpp>
#include <copsens/detail/rng.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>
#include <copsens/outcome.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace copsens {

namespace detail {

/// Observed-row confounder means, shared by every risk-ratio evaluation.
struct RrContext {
  const ConditionalConfounder* cc;
  const BinaryOutcome* bin;
  MatrixXd row_means;  // n x m, row i = mu_{u|t_i}'

  RrContext(const ConditionalConfounder& c, const BinaryOutcome& b, const TreatmentMatrix& T) : cc(&c), bin(&b) {
    require_size(T.k(), c.k(), "observed treatments");
    row_means = (T.data().rowwise() - c.treatment_means.transpose()) * c.coef.transpose();
  }

  /// mean_i Phi(Phi^{-1}(mu_{y|t}) + gamma'(mu_{u|t_i} - mu_{u|t})).
  double numerator(const VectorXd& t, const VectorXd& gamma) const {
    double mu = bin->mu_y(t);
    if (mu < kClampLo || mu > kClampHi) {
      warn("risk ratio: mu_{y|t} reached 0 or 1 and was clamped");
      mu = std::clamp(mu, kClampLo, kClampHi);
    }
    const double a = norm_quantile(mu) - gamma.dot(cc->mean(t));
    const VectorXd shifts = row_means * gamma;
    double s = 0.0;
    for (Index i = 0; i < shifts.size(); ++i) s += norm_cdf(a + shifts(i));
    return s / static_cast<double>(shifts.size());
  }

  double contrast(const Contrast& c, const VectorXd& gamma) const {
    return numerator(c.t1(), gamma) / numerator(c.t2(), gamma);
  }
};

}  // namespace detail

/// P(Y = 1 | do(t)) / P(Y = 1) under the Gaussian copula with sensitivity spec.
inline double rr_single(const VectorXd& t, const SensitivitySpec& spec, const ConditionalConfounder& cc,
                        const BinaryOutcome& bin, const TreatmentMatrix& observed_T) {
  detail::require_size(spec.m(), cc.m(), "sensitivity vector");
  const detail::RrContext ctx(cc, bin, observed_T);
  return ctx.numerator(t, spec.gamma) / bin.p_y1;
}

/// P(Y = 1 | do(t1)) / P(Y = 1 | do(t2)).
inline double rr_contrast(const Contrast& c, const SensitivitySpec& spec, const ConditionalConfounder& cc,
                          const BinaryOutcome& bin, const TreatmentMatrix& observed_T) {
  detail::require_size(spec.m(), cc.m(), "sensitivity vector");
  const detail::RrContext ctx(cc, bin, observed_T);
  return ctx.contrast(c, spec.gamma);
}

struct RrPoint {
  double signed_r2 = 0.0;
  double rr = 1.0;
};

/// RR along gamma = sign(r2) sqrt(|r2|) Sigma^{-1/2} d for each signed r2.
inline std::vector<RrPoint> rr_curve(const Contrast& c, const ConditionalConfounder& cc, const BinaryOutcome& bin,
                                     const TreatmentMatrix& observed_T, const VectorXd& d,
                                     const std::vector<double>& signed_r2_grid) {
  const detail::RrContext ctx(cc, bin, observed_T);
  std::vector<RrPoint> out;
  out.reserve(signed_r2_grid.size());
  for (double s : signed_r2_grid) {
    require(s >= -1.0 && s <= 1.0, "domain", "signed r2 must lie in [-1, 1]");
    const VectorXd dir = s < 0.0 ? VectorXd(-d) : d;
    const SensitivitySpec spec = gamma_from_r2_direction(std::abs(s), dir, cc.cov);
    out.push_back({s, ctx.contrast(c, spec.gamma)});
  }
  return out;
}

/// Evenly spaced signed-r2 grid on [-1, 1] with `points` entries.
inline std::vector<double> signed_r2_grid(std::size_t points) {
  require(points >= 2, "domain", "grid needs at least 2 points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  g.back() = 1.0;
  return g;
}

struct RrRegion : IgnoranceRegion {
  bool converged = true;
  VectorXd gamma_lower;  // sensitivity vectors attaining the endpoints
  VectorXd gamma_upper;
};

struct RrSearchOptions {
  std::size_t grid_points = 401;      // scalar grid (m = 1)
  std::size_t directions = 200;       // random restarts (m > 1)
  std::size_t line_points = 41;       // grid per restart direction
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

namespace detail {

/// Golden-section refinement of f on [a, b]; returns (x, f(x)) for the
/// minimum of sign * f.
template <class F>
std::pair<double, double> golden(F&& f, double a, double b, double sign, double xtol) {
  const double invphi = 0.6180339887498949;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = sign * f(c), fd = sign * f(d);
  while (b - a > xtol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = sign * f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = sign * f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

/// Global min and max of f over [lo, hi] by a uniform grid plus golden-section
/// refinement around the best grid point.
template <class F>
std::pair<std::pair<double, double>, std::pair<double, double>> line_extrema(F&& f, double lo, double hi,
                                                                             std::size_t points, double xtol) {
  std::vector<double> xs(points), fs(points);
  for (std::size_t i = 0; i < points; ++i) {
    xs[i] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    fs[i] = f(xs[i]);
  }
  auto refine = [&](double sign) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < points; ++i) {
      if (sign * fs[i] < sign * fs[best]) best = i;
    }
    std::pair<double, double> result{xs[best], fs[best]};
    if (points < 3) return result;
    const double a = xs[best == 0 ? 0 : best - 1];
    const double b = xs[best + 1 >= points ? points - 1 : best + 1];
    const auto g = golden(f, a, b, sign, xtol);
    if (sign * g.second < sign * result.second) result = g;
    return result;
  };
  return {refine(1.0), refine(-1.0)};
}

}  // namespace detail

/// Range of the risk ratio over every gamma with gamma' Sigma gamma <= r2_cap.
/// m = 1 searches the scalar interval directly; m > 1 searches random
/// directions through the origin and refines coordinatewise.
inline RrRegion rr_ignorance_region(const Contrast& c, const ConditionalConfounder& cc, const BinaryOutcome& bin,
                                    const TreatmentMatrix& observed_T, double r2_cap,
                                    const RrSearchOptions& opt = {}) {
  require(r2_cap >= 0.0 && r2_cap <= 1.0, "domain", "r2_cap must lie in [0, 1]");
  const detail::RrContext ctx(cc, bin, observed_T);
  const Index m = cc.m();
  RrRegion reg;
  reg.naive = ctx.contrast(c, VectorXd::Zero(m));
  reg.r2_cap = r2_cap;
  reg.lower = reg.upper = reg.naive;
  reg.gamma_lower = reg.gamma_upper = VectorXd::Zero(m);
  if (r2_cap == 0.0) return reg;

  const MatrixXd inv_root = cc.full_rank() ? detail::inv_sqrt_psd(cc.cov) : detail::pinv_sqrt_psd(cc.cov);
  const double radius = std::sqrt(r2_cap);
  auto update = [&](const VectorXd& z, double value) {
    if (value < reg.lower) {
      reg.lower = value;
      reg.gamma_lower = inv_root * z;
    }
    if (value > reg.upper) {
      reg.upper = value;
      reg.gamma_upper = inv_root * z;
    }
  };

  // Line search along whitened direction d: z = r d with r in [-radius, radius].
  auto search_line = [&](const VectorXd& d, std::size_t points) {
    auto f = [&](double r) { return ctx.contrast(c, inv_root * (r * d)); };
    const auto ext = detail::line_extrema(f, -radius, radius, points, 1e-10 * std::max(radius, 1.0));
    update(ext.first.first * d, ext.first.second);
    update(ext.second.first * d, ext.second.second);
  };

  if (m == 1) {
    search_line(VectorXd::Ones(1), opt.grid_points);
    return reg;
  }

  detail::Stream stream(opt.seed, 0xB1A7ULL);
  for (std::size_t r = 0; r < opt.directions; ++r) {
    VectorXd d(m);
    for (Index l = 0; l < m; ++l) d(l) = stream.normal();
    if (r < static_cast<std::size_t>(m)) d = VectorXd::Unit(m, static_cast<Index>(r));
    d.normalize();
    search_line(d, opt.line_points);
  }

  // Coordinate refinement of each endpoint in whitened coordinates.
  const MatrixXd root = detail::sqrt_psd(cc.cov);
  bool converged = true;
  for (double sign : {1.0, -1.0}) {
    VectorXd z = root * (sign > 0 ? reg.gamma_lower : reg.gamma_upper);
    double fz = sign > 0 ? reg.lower : reg.upper;
    double step = 0.1 * radius;
    int sweeps = 0;
    while (step > 1e-9 * radius && sweeps < 2000) {
      bool moved = false;
      for (Index l = 0; l < m; ++l) {
        for (double dir : {1.0, -1.0}) {
          VectorXd cand = z;
          cand(l) += dir * step;
          cand = detail::project_ball(cand, radius);
          const double fc = ctx.contrast(c, inv_root * cand);
          if (sign * fc < sign * fz - opt.tol * 1e-6) {
            z = cand;
            fz = fc;
            moved = true;
          }
        }
      }
      if (!moved) step *= 0.5;
      ++sweeps;
    }
    if (sweeps >= 2000) converged = false;
    update(z, fz);
  }
  if (!converged) {
    reg.converged = false;
    warn("rr_ignorance_region: coordinate refinement hit its sweep limit; returning the widest region found");
  }
  return reg;
}

struct BinaryRv {
  double rv = 0.0;
  bool robust = false;  // RR = 1 is never reached for r2 <= 1
};

/// Smallest r2 whose risk-ratio region contains 1, by bisection on r2.
inline BinaryRv binary_rv(const Contrast& c, const ConditionalConfounder& cc, const BinaryOutcome& bin,
                          const TreatmentMatrix& observed_T, const RrSearchOptions& opt = {},
                          double r2_tol = 1e-9) {
  auto contains_one = [&](double r2) {
    const RrRegion reg = rr_ignorance_region(c, cc, bin, observed_T, r2, opt);
    return reg.lower <= 1.0 && 1.0 <= reg.upper;
  };
  if (contains_one(0.0)) return {0.0, false};
  if (!contains_one(1.0)) return {1.0, true};
  double lo = 0.0, hi = 1.0;
  while (hi - lo > r2_tol) {
    const double mid = 0.5 * (lo + hi);
    if (contains_one(mid)) hi = mid; else lo = mid;
  }
  return {hi, false};
}

}  // namespace copsens

#endif  // COPSENS_BINARY_HPP
