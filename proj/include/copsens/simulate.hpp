#ifndef COPSENS_SIMULATE_HPP
#define COPSENS_SIMULATE_HPP

#include <copsens/bounds.hpp>
#include <copsens/detail/normal.hpp>
#include <copsens/detail/rng.hpp>
#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace copsens {

/// Ground truth attached to a simulated dataset. gamma_true is on the raw
/// outcome scale.
struct SimTruth {
  MatrixXd b_true;  // k x m
  double sigma2_t_given_u = 1.0;
  double sigma2_y_given_tu = 1.0;
  VectorXd gamma_true;
  VectorXd tau_true;       // linear presets; empty for the nonlinear response
  std::string response;    // "linear" or "nonlinear"
  bool binary_y = false;
  bool binary_t = false;
  VectorXd pate_true;      // PATE_{e_i, 0}, i = 1..k
  VectorXd rr_true;        // RR_{e_i, 0} for binary outcomes
  std::vector<int> non_null;  // 1 for large-effect treatments (GWAS)
  std::uint64_t seed = 0;

  Index k() const noexcept { return b_true.rows(); }
  Index m() const noexcept { return b_true.cols(); }
};

struct SimData {
  TreatmentMatrix T;
  VectorXd y;
  SimTruth truth;
};

namespace detail {

enum : std::uint64_t { kStreamU = 1, kStreamT = 2, kStreamY = 3, kStreamTau = 4, kStreamPick = 5, kStreamB = 6 };

inline MatrixXd draw_normal(Index rows, Index cols, std::uint64_t seed, std::uint64_t stream, double sd = 1.0) {
  Stream s(seed, stream);
  MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = sd * s.normal();
  return out;
}

}  // namespace detail

/// The response g(T) of the nonlinear preset.
inline double nonlinear_response(const VectorXd& t) {
  const double t3 = t(2);
  return 3.0 * t(0) - t(1) + (t3 > 0.0 ? t3 : 0.7 * t3) - 0.06 * t(3) - 4.0 * t(0) * t(0);
}

/// U ~ N(0, I_m), T = B U + eps_t, Y = tau' T + gamma' U + eps_y.
inline SimData gen_linear_gaussian(SimTruth truth, Index n) {
  require(n >= 2, "dimension", "simulation needs n >= 2");
  const Index k = truth.k(), m = truth.m();
  detail::require_size(truth.tau_true.size(), k, "tau_true");
  detail::require_size(truth.gamma_true.size(), m, "gamma_true");
  require(truth.sigma2_t_given_u > 0.0 && truth.sigma2_y_given_tu > 0.0, "domain", "variances must be positive");
  const MatrixXd u = detail::draw_normal(n, m, truth.seed, detail::kStreamU);
  const MatrixXd et = detail::draw_normal(n, k, truth.seed, detail::kStreamT, std::sqrt(truth.sigma2_t_given_u));
  const MatrixXd ey = detail::draw_normal(n, 1, truth.seed, detail::kStreamY, std::sqrt(truth.sigma2_y_given_tu));
  MatrixXd t = u * truth.b_true.transpose() + et;
  VectorXd y = t * truth.tau_true + u * truth.gamma_true + ey.col(0);
  truth.response = "linear";
  truth.pate_true = truth.tau_true;
  return {TreatmentMatrix(std::move(t)), std::move(y), std::move(truth)};
}

/// Parameters shared by the linear and nonlinear four-treatment presets.
inline SimTruth four_treatment_truth(std::uint64_t seed) {
  SimTruth truth;
  truth.b_true = MatrixXd(4, 1);
  truth.b_true << 2.0, 0.5, -0.4, 0.2;
  truth.sigma2_t_given_u = 1.0;
  truth.sigma2_y_given_tu = 1.0;
  truth.gamma_true = VectorXd::Constant(1, 2.8);
  truth.tau_true = VectorXd(4);
  truth.tau_true << 3.0, -1.0, 1.0, -0.06;
  truth.seed = seed;
  return truth;
}

/// Four treatments, one confounder, Ytilde = g(T) + gamma U + eps; Y = Ytilde or
/// I{Ytilde > 0}. Ground truth PATE_{e_i,0} = g(e_i) - g(0) and, for binary Y,
/// RR_{e_i,0} = Phi(g(e_i)/s) / Phi(g(0)/s) with s^2 = gamma^2 + sigma^2_{y|t,u}.
inline SimData gen_nonlinear(Index n, bool binary_y, std::uint64_t seed, double gamma = 2.8) {
  require(n >= 2, "dimension", "simulation needs n >= 2");
  SimTruth truth = four_treatment_truth(seed);
  truth.tau_true.resize(0);
  truth.response = "nonlinear";
  truth.binary_y = binary_y;
  truth.gamma_true = VectorXd::Constant(1, gamma);
  const Index k = 4;
  const MatrixXd u = detail::draw_normal(n, 1, seed, detail::kStreamU);
  const MatrixXd et = detail::draw_normal(n, k, seed, detail::kStreamT);
  const MatrixXd ey = detail::draw_normal(n, 1, seed, detail::kStreamY);
  MatrixXd t = u * truth.b_true.transpose() + et;
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    const double yt = nonlinear_response(t.row(i).transpose()) + gamma * u(i, 0) + ey(i, 0);
    y(i) = binary_y ? (yt > 0.0 ? 1.0 : 0.0) : yt;
  }
  const double g0 = nonlinear_response(VectorXd::Zero(k));
  const double s = std::sqrt(gamma * gamma + truth.sigma2_y_given_tu);
  truth.pate_true.resize(k);
  truth.rr_true.resize(k);
  for (Index j = 0; j < k; ++j) {
    const double gj = nonlinear_response(VectorXd::Unit(k, j));
    truth.pate_true(j) = gj - g0;
    truth.rr_true(j) = detail::norm_cdf(gj / s) / detail::norm_cdf(g0 / s);
  }
  return {TreatmentMatrix(std::move(t)), std::move(y), std::move(truth)};
}

struct GwasOptions {
  Index n = 1000;
  Index k = 100;
  Index m = 3;
  double frac_large = 0.1;
  double loading_sd = 0.5;       // B entries ~ N(0, loading_sd^2)
  double gamma_scale = 15.0;     // gamma entries ~ N(0, gamma_scale^2)
  double sigma2_t_given_u = 1.0;
  double sigma2_y_given_tu = 1.0;
  bool binary_treatments = true;  // false keeps the latent Gaussian treatments
};

/// Binary treatments T_j = I{Ttilde_j > 0} from a latent factor model, sparse
/// effects (ceil(frac_large k) drawn from U(-2, 2), the rest from U(-0.1, 0.1))
/// and a Gaussian outcome linear in T plus gamma' U.
inline SimData gen_gwas(const GwasOptions& opt, std::uint64_t seed) {
  require(opt.n >= 2 && opt.k >= 2 && opt.m >= 1, "dimension", "invalid GWAS dimensions");
  require(opt.frac_large >= 0.0 && opt.frac_large <= 1.0, "domain", "frac_large must lie in [0, 1]");
  SimTruth truth;
  truth.seed = seed;
  truth.binary_t = opt.binary_treatments;
  truth.response = "linear";
  truth.sigma2_t_given_u = opt.sigma2_t_given_u;
  truth.sigma2_y_given_tu = opt.sigma2_y_given_tu;
  truth.b_true = detail::draw_normal(opt.k, opt.m, seed, detail::kStreamB, opt.loading_sd);
  {
    detail::Stream gs(seed, detail::kStreamB + 100);
    truth.gamma_true.resize(opt.m);
    for (Index l = 0; l < opt.m; ++l) truth.gamma_true(l) = opt.gamma_scale * gs.normal();
  }
  const auto n_large = static_cast<std::size_t>(std::ceil(opt.frac_large * static_cast<double>(opt.k) - 1e-9));
  detail::Stream pick(seed, detail::kStreamPick);
  const auto perm = detail::permutation(static_cast<std::size_t>(opt.k), pick);
  truth.non_null.assign(static_cast<std::size_t>(opt.k), 0);
  for (std::size_t r = 0; r < n_large; ++r) truth.non_null[perm[r]] = 1;
  detail::Stream tau_stream(seed, detail::kStreamTau);
  truth.tau_true.resize(opt.k);
  for (Index j = 0; j < opt.k; ++j) {
    const double w = truth.non_null[static_cast<std::size_t>(j)] ? 2.0 : 0.1;
    truth.tau_true(j) = tau_stream.uniform(-w, w);
  }
  truth.pate_true = truth.tau_true;

  const MatrixXd u = detail::draw_normal(opt.n, opt.m, seed, detail::kStreamU);
  const MatrixXd et = detail::draw_normal(opt.n, opt.k, seed, detail::kStreamT, std::sqrt(opt.sigma2_t_given_u));
  const MatrixXd ey = detail::draw_normal(opt.n, 1, seed, detail::kStreamY, std::sqrt(opt.sigma2_y_given_tu));
  MatrixXd t = u * truth.b_true.transpose() + et;
  if (opt.binary_treatments) t = (t.array() > 0.0).cast<double>();
  VectorXd y = t * truth.tau_true + u * truth.gamma_true + ey.col(0);
  return {TreatmentMatrix(std::move(t)), std::move(y), std::move(truth)};
}

struct SweepPoint {
  double theta = 0.0;
  double bound = 0.0;
};

/// Worst-case bias along dt(theta) = cos(theta) u1 + sin(theta) n0 for theta
/// in [0, pi/2], where u1 is B's first left singular vector and n0 spans part
/// of null(B').
inline std::vector<SweepPoint> rotation_sweep(const FactorModel& fm_true, double sigma_y_given_t, double r2,
                                              std::size_t n_theta) {
  require(n_theta >= 2, "domain", "sweep needs at least 2 angles");
  const ContrastSweep sweep = contrast_bound_sweep(fm_true, sigma_y_given_t, r2);
  require(sweep.null_space_basis.cols() >= 1, "dimension", "loading matrix has no null space (m = k)");
  const ConditionalConfounder cc = conditional_confounder(fm_true);
  const VectorXd u1 = sweep.argmax_delta;
  const VectorXd n0 = sweep.null_space_basis.col(0);
  std::vector<SweepPoint> out;
  out.reserve(n_theta);
  for (std::size_t i = 0; i < n_theta; ++i) {
    double theta = std::numbers::pi / 2.0 * static_cast<double>(i) / static_cast<double>(n_theta - 1);
    const VectorXd dt = std::cos(theta) * u1 + std::sin(theta) * n0;
    const Contrast c(dt, VectorXd::Zero(dt.size()));
    out.push_back({theta, worst_case_bias(cc, sigma_y_given_t, r2, c).value});
  }
  return out;
}

/// Exact-parameter factor model of a simulation truth.
inline FactorModel true_factor_model(const SimTruth& truth) {
  FactorModel fm;
  fm.loadings = truth.b_true;
  fm.noise_variance = truth.sigma2_t_given_u;
  const Eigen::JacobiSVD<MatrixXd> svd(truth.b_true);
  fm.singular_values = svd.singularValues();
  fm.treatment_means = VectorXd::Zero(truth.k());
  return fm;
}

inline nlohmann::json to_json(const SimTruth& t) {
  nlohmann::json j = {{"k", t.k()},
                      {"m", t.m()},
                      {"b_true", detail::row_major(t.b_true)},
                      {"sigma2_t_given_u", t.sigma2_t_given_u},
                      {"sigma2_y_given_tu", t.sigma2_y_given_tu},
                      {"gamma_true", detail::to_std(t.gamma_true)},
                      {"response", t.response},
                      {"binary_y", t.binary_y},
                      {"binary_t", t.binary_t},
                      {"pate_true", detail::to_std(t.pate_true)},
                      {"seed", t.seed}};
  if (t.tau_true.size() > 0) j["tau_true"] = detail::to_std(t.tau_true);
  if (t.rr_true.size() > 0) j["rr_true"] = detail::to_std(t.rr_true);
  if (!t.non_null.empty()) j["non_null"] = t.non_null;
  return j;
}

}  // namespace copsens

#endif  // COPSENS_SIMULATE_HPP
