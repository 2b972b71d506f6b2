#ifndef COPSENS_MCC_HPP
#define COPSENS_MCC_HPP

#include <copsens/copula.hpp>
#include <copsens/detail/linalg.hpp>
#include <copsens/detail/rng.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>
#include <copsens/outcome.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace copsens {

/// K contrasts sharing one confounder model: row k of `deltas` is
/// mu_{u|dt_k}', and the implied effects are naive - sigma * deltas * gamma.
struct ContrastBank {
  MatrixXd deltas;  // K x m
  VectorXd naive;   // K
  double sigma_y_given_t = 1.0;
  std::vector<std::string> ids;

  Index size() const noexcept { return deltas.rows(); }
  Index m() const noexcept { return deltas.cols(); }
};

inline ContrastBank build_bank(const ConditionalConfounder& cc, const GaussianOutcome& outcome,
                               const std::vector<Contrast>& contrasts) {
  require(!contrasts.empty(), "dimension", "contrast bank needs at least one contrast");
  ContrastBank bank;
  const auto K = static_cast<Index>(contrasts.size());
  bank.deltas.resize(K, cc.m());
  bank.naive.resize(K);
  bank.sigma_y_given_t = outcome.sigma_y_given_t();
  for (Index r = 0; r < K; ++r) {
    const Contrast& c = contrasts[static_cast<std::size_t>(r)];
    bank.deltas.row(r) = mu_delta(cc, c).transpose();
    bank.naive(r) = outcome.tau_naive.dot(c.delta());
    bank.ids.push_back(c.id().empty() ? "c" + std::to_string(r + 1) : c.id());
  }
  return bank;
}

/// Unit-wise contrasts e_j versus 0 for each listed treatment (0-based). Row j
/// is column j of the confounder map.
inline ContrastBank build_bank_unitwise(const ConditionalConfounder& cc, const GaussianOutcome& outcome,
                                        const std::vector<Index>& treatment_indices) {
  require(!treatment_indices.empty(), "dimension", "contrast bank needs at least one treatment");
  detail::require_size(outcome.tau_naive.size(), cc.k(), "outcome coefficients");
  ContrastBank bank;
  const auto K = static_cast<Index>(treatment_indices.size());
  bank.deltas.resize(K, cc.m());
  bank.naive.resize(K);
  bank.sigma_y_given_t = outcome.sigma_y_given_t();
  for (Index r = 0; r < K; ++r) {
    const Index j = treatment_indices[static_cast<std::size_t>(r)];
    require(j >= 0 && j < cc.k(), "dimension", "treatment index out of range");
    bank.deltas.row(r) = cc.coef.col(j).transpose();
    bank.naive(r) = outcome.tau_naive(j);
    bank.ids.push_back("e" + std::to_string(j + 1));
  }
  return bank;
}

inline std::vector<Index> all_treatments(Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

inline VectorXd pate_vector(const ContrastBank& bank, const VectorXd& gamma) {
  detail::require_size(gamma.size(), bank.m(), "sensitivity vector");
  return bank.naive - bank.sigma_y_given_t * (bank.deltas * gamma);
}

inline VectorXd pate_vector(const ContrastBank& bank, const SensitivitySpec& spec) {
  return pate_vector(bank, spec.gamma);
}

enum class Norm { l1, l2, linf };

inline double norm_of(const VectorXd& x, Norm p) {
  switch (p) {
    case Norm::l1: return x.lpNorm<1>();
    case Norm::l2: return x.norm();
    case Norm::linf: return x.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

struct MccOptions {
  double tol = 1e-8;  // relative per-stage improvement below which the subgradient search stops
  int max_iter = 50000;
  std::uint64_t seed = 0;
  std::optional<VectorXd> start;  // starting gamma for the L1/Linf search
};

struct MccResult {
  VectorXd gamma_star;
  double achieved_norm = 0.0;
  double achieved_r2 = 0.0;
  double lambda = 0.0;  // L2 only: multiplier of (D'D + lambda Sigma) gamma = D' naive / sigma
  int iterations = 0;
};

/// Raised when the subgradient search exhausts max_iter; carries the last iterate.
class MccNonConvergence : public NumericalError {
 public:
  MccNonConvergence(const std::string& msg, MccResult last)
      : NumericalError("non_convergence", msg), last_(std::move(last)) {}
  const MccResult& last_iterate() const noexcept { return last_; }

 private:
  MccResult last_;
};

namespace detail {

struct Whitening {
  MatrixXd root;      // Sigma^{1/2}
  MatrixXd inv_root;  // Sigma^{-1/2}
};

inline Whitening whitening(const MatrixXd& sigma) {
  const SymEig e = sym_eig_desc(sigma);
  if (numerical_rank(e.values, 1e-10) < sigma.rows()) {
    throw InputError("rank_deficient", "norm minimization needs a full-rank conditional confounder covariance");
  }
  return {sqrt_psd(sigma), inv_sqrt_psd(sigma)};
}

inline MccResult finish(const ContrastBank& bank, const MatrixXd& sigma, const VectorXd& gamma, Norm p) {
  MccResult r;
  r.gamma_star = gamma;
  r.achieved_norm = norm_of(pate_vector(bank, gamma), p);
  r.achieved_r2 = gamma.dot(sigma * gamma);
  return r;
}

/// Exact L2 solution in whitened coordinates: minimize |b - A z| over |z|^2 <= cap.
inline MccResult mcc_l2(const ContrastBank& bank, const MatrixXd& sigma, double cap) {
  const Whitening w = whitening(sigma);
  const MatrixXd a = bank.sigma_y_given_t * bank.deltas * w.inv_root;
  const Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd s = svd.singularValues();
  const VectorXd ub = svd.matrixU().transpose() * bank.naive;
  const double smax = s.size() > 0 ? s(0) : 0.0;

  auto z_of = [&](double lambda) {
    VectorXd coeff(s.size());
    for (Index i = 0; i < s.size(); ++i) {
      const double den = s(i) * s(i) + lambda;
      coeff(i) = den > 0.0 && s(i) > 1e-12 * smax ? s(i) * ub(i) / den : 0.0;
    }
    return VectorXd(svd.matrixV() * coeff);
  };

  MccResult r;
  if (cap <= 0.0) {
    r = finish(bank, sigma, VectorXd::Zero(bank.m()), Norm::l2);
    r.lambda = std::numeric_limits<double>::infinity();
    return r;
  }
  VectorXd z = z_of(0.0);
  double lambda = 0.0;
  if (z.squaredNorm() > cap) {
    double lo = 0.0, hi = std::max(smax * smax, 1e-12);
    while (z_of(hi).squaredNorm() > cap) hi *= 2.0;
    int it = 0;
    for (; it < 400; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double excess = z_of(mid).squaredNorm() - cap;
      if (excess > 0.0) lo = mid; else hi = mid;
      if (excess == 0.0 || hi - lo <= 4e-16 * hi) break;
    }
    lambda = hi;  // feasible side of the bracket
    z = z_of(lambda);
    r.iterations = it;
  }
  const VectorXd gamma = w.inv_root * z;
  const double iters = r.iterations;
  r = finish(bank, sigma, gamma, Norm::l2);
  r.iterations = static_cast<int>(iters);
  // Whitened multiplier lambda maps to lambda / sigma^2 in the gamma-space system.
  r.lambda = lambda / (bank.sigma_y_given_t * bank.sigma_y_given_t);
  return r;
}

/// Restarted projected subgradient for the L1 or Linf objective on the ball
/// |z| <= radius. Each stage runs steps h / (|g| sqrt(t)) from the best point
/// so far, then halves h.
inline MccResult mcc_subgradient(const ContrastBank& bank, const MatrixXd& sigma, double cap, Norm p,
                                 const MccOptions& opt) {
  const Whitening w = whitening(sigma);
  const MatrixXd a = bank.sigma_y_given_t * bank.deltas * w.inv_root;
  const VectorXd& b = bank.naive;
  const double radius = std::sqrt(std::max(cap, 0.0));
  const Index m = a.cols();

  auto objective = [&](const VectorXd& z) { return norm_of(b - a * z, p); };
  auto subgradient = [&](const VectorXd& z) {
    const VectorXd r = b - a * z;
    VectorXd g = VectorXd::Zero(m);
    if (p == Norm::l1) {
      for (Index k = 0; k < r.size(); ++k) {
        if (r(k) > 0.0) g -= a.row(k).transpose();
        else if (r(k) < 0.0) g += a.row(k).transpose();
      }
    } else {
      Index kmax = 0;
      r.cwiseAbs().maxCoeff(&kmax);
      if (r(kmax) > 0.0) g = -a.row(kmax).transpose();
      else if (r(kmax) < 0.0) g = a.row(kmax).transpose();
    }
    return g;
  };

  VectorXd best = VectorXd::Zero(m);
  if (opt.start) best = project_ball(w.root * *opt.start, radius);
  double best_f = objective(best);
  if (radius == 0.0) return finish(bank, sigma, VectorXd::Zero(m), p);

  const int stage_len = 200;
  double h = radius;
  int iter = 0;
  bool converged = false;
  double stage_start_f = best_f;
  int quiet_stages = 0;
  while (iter < opt.max_iter) {
    VectorXd z = best;
    VectorXd avg = VectorXd::Zero(m);
    for (int t = 1; t <= stage_len && iter < opt.max_iter; ++t, ++iter) {
      const VectorXd g = subgradient(z);
      const double gn = g.norm();
      if (gn == 0.0) break;  // exact minimizer of the unconstrained objective
      z = project_ball(z - (h / (gn * std::sqrt(static_cast<double>(t)))) * g, radius);
      avg += (z - avg) / static_cast<double>(t);
      const double f = objective(z);
      if (f < best_f) {
        best_f = f;
        best = z;
      }
    }
    const VectorXd avg_p = project_ball(avg, radius);
    const double f_avg = objective(avg_p);
    if (f_avg < best_f) {
      best_f = f_avg;
      best = avg_p;
    }
    const double improvement = stage_start_f - best_f;
    stage_start_f = best_f;
    quiet_stages = improvement <= opt.tol * std::max(1.0, best_f) ? quiet_stages + 1 : 0;
    h *= 0.5;
    if (h < 1e-12 * std::max(radius, 1e-300) && quiet_stages >= 1) {
      converged = true;
      break;
    }
    if (subgradient(best).norm() == 0.0) {
      converged = true;
      break;
    }
  }
  MccResult r = finish(bank, sigma, w.inv_root * best, p);
  r.iterations = iter;
  if (!converged) throw MccNonConvergence("subgradient search reached max_iter without stabilizing", r);
  return r;
}

}  // namespace detail

/// Sensitivity vector minimizing the Lp norm of the implied effect vector
/// subject to gamma' Sigma gamma <= r2_cap.
inline MccResult mcc_minimize(const ContrastBank& bank, const MatrixXd& sigma_u_given_t, Norm p, double r2_cap,
                              const MccOptions& opt = {}) {
  require(r2_cap >= 0.0 && r2_cap <= 1.0, "domain", "r2_cap must lie in [0, 1]");
  require(bank.size() >= 1, "dimension", "contrast bank is empty");
  detail::require_size(sigma_u_given_t.rows(), bank.m(), "confounder covariance");
  if (p == Norm::l2) return detail::mcc_l2(bank, sigma_u_given_t, r2_cap);
  return detail::mcc_subgradient(bank, sigma_u_given_t, r2_cap, p, opt);
}

struct MccRow {
  std::string contrast_id;
  double naive = 0.0;
  double adjusted = 0.0;
  double shrinkage_ratio = 0.0;  // adjusted / naive (NaN when naive == 0)
};

inline std::vector<MccRow> mcc_report(const ContrastBank& bank, const VectorXd& gamma_star) {
  const VectorXd adj = pate_vector(bank, gamma_star);
  std::vector<MccRow> rows;
  rows.reserve(static_cast<std::size_t>(bank.size()));
  for (Index k = 0; k < bank.size(); ++k) {
    const double naive = bank.naive(k);
    const std::string id = static_cast<std::size_t>(k) < bank.ids.size() ? bank.ids[static_cast<std::size_t>(k)]
                                                                         : "c" + std::to_string(k + 1);
    rows.push_back({id, naive, adj(k),
                    naive != 0.0 ? adj(k) / naive : std::numeric_limits<double>::quiet_NaN()});
  }
  return rows;
}

/// Area under the ROC curve of `scores` for 0/1 `labels` (Mann-Whitney,
/// ties counted as one half).
inline double auc(const VectorXd& scores, const std::vector<int>& labels) {
  detail::require_size(static_cast<Index>(labels.size()), scores.size(), "labels");
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Index>(a)) < scores(static_cast<Index>(b));
  });
  double rank_sum = 0.0;
  std::size_t pos = 0, npos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores(static_cast<Index>(idx[j])) == scores(static_cast<Index>(idx[i]))) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t r = i; r < j; ++r) {
      if (labels[idx[r]] != 0) {
        rank_sum += mid_rank;
        ++pos;
      }
    }
    i = j;
  }
  npos = labels.size() - pos;
  require(pos > 0 && npos > 0, "one_class", "AUC needs both positive and negative labels");
  const double p = static_cast<double>(pos), q = static_cast<double>(npos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

}  // namespace copsens

#endif  // COPSENS_MCC_HPP
