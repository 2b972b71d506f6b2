#ifndef COPSENS_COPULA_HPP
#define COPSENS_COPULA_HPP

#include <copsens/detail/linalg.hpp>
#include <copsens/detail/normal.hpp>
#include <copsens/detail/parallel.hpp>
#include <copsens/detail/rng.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>
#include <copsens/outcome.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace copsens {

/// Sensitivity vector gamma on the standardized scale (the Gaussianized
/// outcome has unit residual variance given t), with its derived
/// (r2, direction) coordinates: gamma = sqrt(r2) * cov^{-1/2} direction.
struct SensitivitySpec {
  VectorXd gamma;
  double r2 = 0.0;
  VectorXd direction;  // unit vector, or zero when r2 == 0

  static SensitivitySpec from_gamma(VectorXd gamma, const MatrixXd& sigma_u_given_t) {
    detail::require_size(gamma.size(), sigma_u_given_t.rows(), "sensitivity vector");
    require(gamma.allFinite(), "non_finite", "sensitivity vector contains non-finite entries");
    SensitivitySpec s;
    s.r2 = gamma.dot(sigma_u_given_t * gamma);
    if (s.r2 > 1.0 + 1e-9) {
      throw InputError("domain", "gamma' Sigma gamma = " + std::to_string(s.r2) +
                                     " exceeds 1; the residual outcome variance would be negative");
    }
    s.r2 = std::max(s.r2, 0.0);
    s.direction = VectorXd::Zero(gamma.size());
    if (s.r2 > 0.0) s.direction = detail::sqrt_psd(sigma_u_given_t) * gamma / std::sqrt(s.r2);
    s.gamma = std::move(gamma);
    return s;
  }

  static SensitivitySpec zero(Index m) { return from_gamma(VectorXd::Zero(m), MatrixXd::Identity(m, m)); }

  Index m() const noexcept { return gamma.size(); }
};

/// Raw-scale gamma (outcome units per unit of U) from the standardized one.
inline VectorXd raw_gamma(const VectorXd& standardized, double sigma_y_given_t) {
  return sigma_y_given_t * standardized;
}

inline VectorXd standardized_gamma(const VectorXd& raw, double sigma_y_given_t) {
  require(sigma_y_given_t > 0.0, "domain", "sigma_y_given_t must be positive");
  return raw / sigma_y_given_t;
}

// ---------------------------------------------------------------------------
// Copula densities.

/// Copula density c(p, q) linking the outcome's margin p to the m confounder
/// margins q, all given t, taken relative to the joint law of q: a value of 1
/// means the outcome is independent of the confounder.
class CopulaSpec {
 public:
  using Density = std::function<double(double, const VectorXd&)>;

  /// Gaussian copula with covariance [[1, gamma' S], [S gamma, S]],
  /// normalized to a correlation matrix.
  static CopulaSpec gaussian(const VectorXd& gamma, const MatrixXd& sigma_u_given_t) {
    const Index m = gamma.size();
    detail::require_size(sigma_u_given_t.rows(), m, "confounder covariance");
    MatrixXd c(m + 1, m + 1);
    c(0, 0) = 1.0;
    c.block(1, 0, m, 1) = sigma_u_given_t * gamma;
    c.block(0, 1, 1, m) = c.block(1, 0, m, 1).transpose();
    c.block(1, 1, m, m) = sigma_u_given_t;
    VectorXd scale = c.diagonal();
    for (Index i = 0; i < scale.size(); ++i) {
      if (!(scale(i) > 0.0)) throw InputError("invalid_copula", "confounder margin has zero variance");
      scale(i) = 1.0 / std::sqrt(scale(i));
    }
    const MatrixXd r = scale.asDiagonal() * c * scale.asDiagonal();
    const Eigen::LLT<MatrixXd> llt(r);
    const double min_eig = detail::sym_eig_desc(r).values.minCoeff();
    if (llt.info() != Eigen::Success || !(min_eig > 1e-12)) {
      throw InputError("invalid_copula", "copula correlation matrix is not positive definite");
    }
    // Divide out the copula of the confounder margins among themselves, so
    // the density is that of the outcome margin given q.
    const Eigen::LLT<MatrixXd> llt_u(r.block(1, 1, m, m));
    CopulaSpec s;
    s.gaussian_ = true;
    s.gamma_ = gamma;
    s.precision_minus_i_ = llt.solve(MatrixXd::Identity(m + 1, m + 1));
    s.precision_minus_i_.block(1, 1, m, m) -= llt_u.solve(MatrixXd::Identity(m, m));
    s.precision_minus_i_(0, 0) -= 1.0;
    s.log_norm_ = -llt.matrixL().toDenseMatrix().diagonal().array().log().sum() +
                  llt_u.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return s;
  }

  static CopulaSpec custom(Density density) {
    require(static_cast<bool>(density), "invalid_copula", "custom copula needs a density callback");
    CopulaSpec s;
    s.custom_ = std::move(density);
    return s;
  }

  bool is_gaussian() const noexcept { return gaussian_; }
  const VectorXd& gamma() const noexcept { return gamma_; }

  double operator()(double p, const VectorXd& q) const {
    if (!gaussian_) {
      const double d = custom_(p, q);
      if (!(d >= 0.0)) throw NumericalError("invalid_copula", "custom copula density returned a negative value");
      return d;
    }
    VectorXd z(q.size() + 1);
    z(0) = detail::norm_quantile(p);
    for (Index i = 0; i < q.size(); ++i) z(i + 1) = detail::norm_quantile(q(i));
    return std::exp(log_norm_ - 0.5 * z.dot(precision_minus_i_ * z));
  }

 private:
  bool gaussian_ = false;
  VectorXd gamma_;
  MatrixXd precision_minus_i_;
  double log_norm_ = 0.0;
  Density custom_;
};

inline double gaussian_copula_density(const VectorXd& gamma, const MatrixXd& sigma_u_given_t, double p,
                                      const VectorXd& q) {
  require(p > 0.0 && p < 1.0, "domain", "copula argument p must lie in (0, 1)");
  for (Index i = 0; i < q.size(); ++i) require(q(i) > 0.0 && q(i) < 1.0, "domain", "copula argument q must lie in (0, 1)^m");
  return CopulaSpec::gaussian(gamma, sigma_u_given_t)(p, q);
}

// ---------------------------------------------------------------------------
// Gaussianization.

inline constexpr double kClampLo = 1e-15;
inline constexpr double kClampHi = 1.0 - 1e-15;

namespace detail {

template <class Law>
concept HasNormalShortcut = requires(const Law& law, double x) {
  { law.from_normal(x) } -> std::convertible_to<double>;
  { law.to_normal(x) } -> std::convertible_to<double>;
};

inline double clamp_unit(double p, bool& clamped) {
  clamped = p < kClampLo || p > kClampHi;
  return std::clamp(p, kClampLo, kClampHi);
}

/// y = F^{-1}(Phi(ytilde)); exact affine map for Gaussian laws.
template <class Law>
double degaussianize_law(const Law& law, double ytilde, bool& clamped) {
  if constexpr (HasNormalShortcut<Law>) {
    clamped = false;
    return law.from_normal(ytilde);
  } else {
    return law.quantile(clamp_unit(norm_cdf(ytilde), clamped));
  }
}

}  // namespace detail

template <class Outcome>
concept OutcomeLike = requires(const Outcome& o, const VectorXd& t) { o.law(t); };

template <OutcomeLike Outcome>
double gaussianize(const Outcome& outcome, const VectorXd& t, double y) {
  const auto law = outcome.law(t);
  if constexpr (detail::HasNormalShortcut<decltype(law)>) {
    return law.to_normal(y);
  } else {
    bool clamped = false;
    const double p = detail::clamp_unit(law.cdf(y), clamped);
    if (clamped) warn("gaussianize: conditional CDF reached 0 or 1 and was clamped");
    return detail::norm_quantile(p);
  }
}

template <OutcomeLike Outcome>
double degaussianize(const Outcome& outcome, const VectorXd& t, double ytilde) {
  bool clamped = false;
  const double y = detail::degaussianize_law(outcome.law(t), ytilde, clamped);
  if (clamped) warn("degaussianize: Phi(ytilde) reached 0 or 1 and was clamped");
  return y;
}

inline double gaussianize(const OutcomeModel& outcome, const VectorXd& t, double y) {
  return std::visit([&](const auto& o) { return gaussianize(o, t, y); }, outcome);
}

inline double degaussianize(const OutcomeModel& outcome, const VectorXd& t, double ytilde) {
  return std::visit([&](const auto& o) { return degaussianize(o, t, ytilde); }, outcome);
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators of intervention means.

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_draws = 0;
  std::size_t clamped = 0;
};

struct McOptions {
  std::size_t n_sim = 200;
  std::uint64_t seed = 0;
  std::size_t max_rows = 0;  // 0 keeps every observed row; otherwise a seeded subsample
  unsigned threads = detail::default_threads();
};

enum class TauFn { difference, ratio };

namespace detail {

inline std::vector<std::size_t> mc_rows(Index n, const McOptions& opt) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (opt.max_rows == 0 || opt.max_rows >= rows.size()) return rows;
  Stream s(opt.seed, 0x5b5a3D1eULL);
  rows = permutation(rows.size(), s);
  rows.resize(opt.max_rows);
  std::sort(rows.begin(), rows.end());
  return rows;
}

struct RowMoments {
  double s1 = 0, s2 = 0, q11 = 0, q22 = 0, q12 = 0;
  std::size_t clamped = 0;
};

inline void clamp_warning(std::size_t clamped, std::size_t total) {
  if (static_cast<double>(clamped) > 1e-3 * static_cast<double>(total)) {
    warn("Monte Carlo: " + std::to_string(clamped) + " of " + std::to_string(total) +
         " CDF values were clamped to [1e-15, 1 - 1e-15]");
  }
}

/// Gaussian-copula Monte Carlo core for one or two treatment values sharing every draw.
/// The draw for (row i, replicate j) is keyed by (seed, i, j).
template <class Outcome, class V>
std::vector<RowMoments> row_moments(const std::vector<VectorXd>& ts, const SensitivitySpec& spec,
                                   const ConditionalConfounder& cc, const Outcome& outcome,
                                   const TreatmentMatrix& T, const V& v, const McOptions& opt,
                                   const std::vector<std::size_t>& rows) {
  require(opt.n_sim >= 1, "domain", "n_sim must be at least 1");
  detail::require_size(spec.m(), cc.m(), "sensitivity vector");
  detail::require_size(T.k(), cc.k(), "observed treatments");
  const std::size_t nt = ts.size();
  std::vector<double> shift_t(nt);
  std::vector<decltype(outcome.law(ts[0]))> laws;
  for (std::size_t a = 0; a < nt; ++a) {
    shift_t[a] = spec.gamma.dot(cc.mean(ts[a]));
    laws.push_back(outcome.law(ts[a]));
  }
  const CounterRng rng(opt.seed);
  std::vector<RowMoments> out(rows.size());
  parallel_for(rows.size(), opt.threads, [&](std::size_t r) {
    const std::size_t i = rows[r];
    const double shift_i = spec.gamma.dot(cc.mean(T.row(static_cast<Index>(i))));
    RowMoments mom;
    for (std::size_t j = 0; j < opt.n_sim; ++j) {
      const double z = rng.normal(i, j);
      double val[2] = {0.0, 0.0};
      for (std::size_t a = 0; a < nt; ++a) {
        bool clamped = false;
        const double y = degaussianize_law(laws[a], shift_i - shift_t[a] + z, clamped);
        mom.clamped += clamped ? 1 : 0;
        val[a] = static_cast<double>(v(y));
      }
      mom.s1 += val[0];
      mom.s2 += val[1];
      mom.q11 += val[0] * val[0];
      mom.q22 += val[1] * val[1];
      mom.q12 += val[0] * val[1];
    }
    out[r] = mom;
  });
  return out;
}

/// Mean of row-level averages and the variance of that mean, treating rows
/// as fixed and replicates as independent within a row.
struct PairedSummary {
  double mean1 = 0, mean2 = 0, var11 = 0, var22 = 0, var12 = 0;
  std::size_t clamped = 0, draws = 0;
};

inline PairedSummary summarize(const std::vector<RowMoments>& rows, std::size_t n_sim) {
  PairedSummary s;
  const double nr = static_cast<double>(rows.size());
  const double ns = static_cast<double>(n_sim);
  double tot1 = 0, tot2 = 0, t11 = 0, t22 = 0, t12 = 0;
  for (const RowMoments& r : rows) {
    tot1 += r.s1;
    tot2 += r.s2;
    t11 += r.q11;
    t22 += r.q22;
    t12 += r.q12;
    s.clamped += r.clamped;
    if (n_sim > 1) {
      const double m1 = r.s1 / ns, m2 = r.s2 / ns;
      s.var11 += (r.q11 - ns * m1 * m1) / (ns - 1.0);
      s.var22 += (r.q22 - ns * m2 * m2) / (ns - 1.0);
      s.var12 += (r.q12 - ns * m1 * m2) / (ns - 1.0);
    }
  }
  const double total = nr * ns;
  s.mean1 = tot1 / total;
  s.mean2 = tot2 / total;
  s.draws = static_cast<std::size_t>(total);
  if (n_sim > 1) {
    s.var11 /= nr * nr * ns;
    s.var22 /= nr * nr * ns;
    s.var12 /= nr * nr * ns;
  } else if (total > 1) {
    s.var11 = (t11 - total * s.mean1 * s.mean1) / (total - 1.0) / total;
    s.var22 = (t22 - total * s.mean2 * s.mean2) / (total - 1.0) / total;
    s.var12 = (t12 - total * s.mean1 * s.mean2) / (total - 1.0) / total;
  }
  s.var11 = std::max(s.var11, 0.0);
  s.var22 = std::max(s.var22, 0.0);
  return s;
}

}  // namespace detail

/// E[v(Y) | do(t)] under a Gaussian copula: for each observed row t_i draw
/// ytilde ~ N(gamma'(mu_{u|t_i} - mu_{u|t}), 1) n_sim times, map through
/// F^{-1}_{Y|t}(Phi(.)) and average v.
template <OutcomeLike Outcome, class V>
McEstimate intervention_mean_gaussian(const VectorXd& t, const SensitivitySpec& spec,
                                      const ConditionalConfounder& cc, const Outcome& outcome,
                                      const TreatmentMatrix& observed_T, const V& v, const McOptions& opt = {}) {
  const auto rows = detail::mc_rows(observed_T.n(), opt);
  const auto mom = detail::row_moments({t}, spec, cc, outcome, observed_T, v, opt, rows);
  const auto s = detail::summarize(mom, opt.n_sim);
  detail::clamp_warning(s.clamped, s.draws);
  return {s.mean1, std::sqrt(s.var11), s.draws, s.clamped};
}

/// tau(E[v(Y)|do(t1)], E[v(Y)|do(t2)]) with both means sharing every draw.
template <OutcomeLike Outcome, class V>
McEstimate marginal_contrast(const Contrast& c, const SensitivitySpec& spec, const ConditionalConfounder& cc,
                             const Outcome& outcome, const TreatmentMatrix& observed_T, const V& v,
                             TauFn tau = TauFn::difference, const McOptions& opt = {}) {
  const auto rows = detail::mc_rows(observed_T.n(), opt);
  const auto mom = detail::row_moments({c.t1(), c.t2()}, spec, cc, outcome, observed_T, v, opt, rows);
  const auto s = detail::summarize(mom, opt.n_sim);
  detail::clamp_warning(s.clamped, 2 * s.draws);
  McEstimate est{0.0, 0.0, s.draws, s.clamped};
  if (tau == TauFn::difference) {
    est.value = s.mean1 - s.mean2;
    est.std_error = std::sqrt(std::max(s.var11 + s.var22 - 2.0 * s.var12, 0.0));
  } else {
    if (!(std::abs(s.mean2) >= 1e-12)) {
      throw NumericalError("degenerate_ratio", "ratio contrast denominator is below 1e-12");
    }
    const double a = s.mean1, b = s.mean2;
    est.value = a / b;
    const double var = s.var11 / (b * b) + a * a * s.var22 / (b * b * b * b) - 2.0 * a * s.var12 / (b * b * b);
    est.std_error = std::sqrt(std::max(var, 0.0));
  }
  return est;
}

template <class V>
McEstimate intervention_mean_gaussian(const VectorXd& t, const SensitivitySpec& spec,
                                      const ConditionalConfounder& cc, const OutcomeModel& outcome,
                                      const TreatmentMatrix& observed_T, const V& v, const McOptions& opt = {}) {
  return std::visit(
      [&](const auto& o) { return intervention_mean_gaussian(t, spec, cc, o, observed_T, v, opt); }, outcome);
}

template <class V>
McEstimate marginal_contrast(const Contrast& c, const SensitivitySpec& spec, const ConditionalConfounder& cc,
                             const OutcomeModel& outcome, const TreatmentMatrix& observed_T, const V& v,
                             TauFn tau = TauFn::difference, const McOptions& opt = {}) {
  return std::visit(
      [&](const auto& o) { return marginal_contrast(c, spec, cc, o, observed_T, v, tau, opt); }, outcome);
}

struct GeneralOptions {
  std::size_t M = 2000;  // outcome draws y_k ~ f(y | t)
  std::size_t N = 1;     // confounder draws per observed row
  std::uint64_t seed = 0;
  std::size_t max_rows = 0;
  unsigned threads = detail::default_threads();
};

struct GeneralEstimate : McEstimate {
  double weight_mean = 1.0;
  double weight_se = 0.0;
};

/// Importance-weighted intervention mean for an arbitrary copula:
/// y_k = F^{-1}_{Y|t}(p_k) with p_k uniform, u_ij ~ f(u | t_i), and
/// w_k = mean_ij c(p_k, F_{U|t}(u_ij)).
template <OutcomeLike Outcome, class V>
GeneralEstimate intervention_mean_general(const VectorXd& t, const CopulaSpec& copula,
                                          const ConditionalConfounder& cc, const Outcome& outcome,
                                          const TreatmentMatrix& observed_T, const V& v,
                                          const GeneralOptions& opt = {}) {
  require(opt.M >= 1 && opt.N >= 1, "domain", "M and N must be at least 1");
  detail::require_size(observed_T.k(), cc.k(), "observed treatments");
  const Index m = cc.m();
  const auto law = outcome.law(t);
  const VectorXd mu_t = cc.mean(t);
  const MatrixXd root = detail::sqrt_psd(cc.cov);
  VectorXd inv_sd(m);
  for (Index l = 0; l < m; ++l) {
    require(cc.cov(l, l) > 0.0, "invalid_copula", "confounder margin has zero conditional variance");
    inv_sd(l) = 1.0 / std::sqrt(cc.cov(l, l));
  }

  McOptions row_opt;
  row_opt.seed = opt.seed;
  row_opt.max_rows = opt.max_rows;
  const auto rows = detail::mc_rows(observed_T.n(), row_opt);

  // Confounder quantiles q_ij under f(u | t).
  const detail::CounterRng rng(opt.seed);
  const std::uint64_t u_stream = 0x10000000ULL;
  std::vector<VectorXd> q;
  q.reserve(rows.size() * opt.N);
  for (std::size_t i : rows) {
    const VectorXd mu_i = cc.mean(observed_T.row(static_cast<Index>(i)));
    for (std::size_t j = 0; j < opt.N; ++j) {
      VectorXd z(m);
      for (Index l = 0; l < m; ++l) {
        z(l) = rng.normal(u_stream + i, j * static_cast<std::size_t>(m) + static_cast<std::size_t>(l));
      }
      const VectorXd u = mu_i + root * z;
      VectorXd qi(m);
      for (Index l = 0; l < m; ++l) {
        bool clamped = false;
        qi(l) = detail::clamp_unit(detail::norm_cdf((u(l) - mu_t(l)) * inv_sd(l)), clamped);
      }
      q.push_back(std::move(qi));
    }
  }

  std::vector<double> vals(opt.M), weights(opt.M);
  detail::parallel_for(opt.M, opt.threads, [&](std::size_t kidx) {
    const double p = rng.uniform(0, kidx);
    const double y = law.quantile(p);
    double w = 0.0;
    for (const VectorXd& qi : q) w += copula(p, qi);
    w /= static_cast<double>(q.size());
    weights[kidx] = w;
    vals[kidx] = static_cast<double>(v(y));
  });

  const double M = static_cast<double>(opt.M);
  double sw = 0, sww = 0, sp = 0, spp = 0;
  for (std::size_t kidx = 0; kidx < opt.M; ++kidx) {
    const double prod = vals[kidx] * weights[kidx];
    sw += weights[kidx];
    sww += weights[kidx] * weights[kidx];
    sp += prod;
    spp += prod * prod;
  }
  GeneralEstimate est;
  est.value = sp / M;
  est.n_draws = opt.M;
  est.weight_mean = sw / M;
  if (opt.M > 1) {
    est.std_error = std::sqrt(std::max((spp - M * est.value * est.value) / (M - 1.0), 0.0) / M);
    est.weight_se = std::sqrt(std::max((sww - M * est.weight_mean * est.weight_mean) / (M - 1.0), 0.0) / M);
    if (std::abs(est.weight_mean - 1.0) > 5.0 * est.weight_se && est.weight_se > 0.0) {
      warn("intervention_mean_general: importance weights average " + std::to_string(est.weight_mean) +
           ", more than 5 standard errors from 1; the copula may be inconsistent");
    }
  }
  return est;
}

template <class V>
GeneralEstimate intervention_mean_general(const VectorXd& t, const CopulaSpec& copula,
                                          const ConditionalConfounder& cc, const OutcomeModel& outcome,
                                          const TreatmentMatrix& observed_T, const V& v,
                                          const GeneralOptions& opt = {}) {
  return std::visit(
      [&](const auto& o) { return intervention_mean_general(t, copula, cc, o, observed_T, v, opt); }, outcome);
}

/// Closed-form E[Y | do(t)] for a Gaussian outcome:
/// mu_{y|t} - sigma_{y|t} gamma'(mu_{u|t} - mean_i mu_{u|t_i}).
inline double intervention_mean_closed_form(const VectorXd& t, const SensitivitySpec& spec,
                                            const ConditionalConfounder& cc, const GaussianOutcome& outcome,
                                            const TreatmentMatrix& observed_T) {
  const VectorXd mean_u = cc.mean(observed_T.column_means());
  return outcome.mean(t) - outcome.sigma_y_given_t() * spec.gamma.dot(cc.mean(t) - mean_u);
}

}  // namespace copsens

#endif  // COPSENS_COPULA_HPP
