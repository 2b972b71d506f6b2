#ifndef COPSENS_MODEL_CORE_HPP
#define COPSENS_MODEL_CORE_HPP

#include <copsens/detail/linalg.hpp>
#include <copsens/detail/rng.hpp>
#include <copsens/errors.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace copsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Observed treatments: rows are units, columns are treatments.
class TreatmentMatrix {
 public:
  TreatmentMatrix() = default;

  explicit TreatmentMatrix(MatrixXd data, std::vector<std::string> column_names = {})
      : data_(std::move(data)), names_(std::move(column_names)) {
    require(data_.rows() >= 2, "dimension", "treatment matrix needs at least 2 rows");
    require(data_.cols() >= 1, "dimension", "treatment matrix needs at least 1 column");
    require(data_.allFinite(), "non_finite", "treatment matrix contains non-finite entries");
    if (names_.empty()) {
      names_.reserve(static_cast<std::size_t>(data_.cols()));
      for (Index j = 0; j < data_.cols(); ++j) names_.push_back("T" + std::to_string(j + 1));
    }
    require(static_cast<Index>(names_.size()) == data_.cols(), "dimension",
            "column_names must have one entry per treatment column");
  }

  const MatrixXd& data() const noexcept { return data_; }
  const std::vector<std::string>& column_names() const noexcept { return names_; }
  Index n() const noexcept { return data_.rows(); }
  Index k() const noexcept { return data_.cols(); }
  VectorXd row(Index i) const { return data_.row(i).transpose(); }

  VectorXd column_means() const { return data_.colwise().mean().transpose(); }

  /// Maximum-likelihood (1/n) sample covariance.
  MatrixXd covariance() const {
    const MatrixXd centered = data_.rowwise() - data_.colwise().mean();
    return (centered.transpose() * centered) / static_cast<double>(n());
  }

  TreatmentMatrix select_rows(const std::vector<std::size_t>& rows) const {
    MatrixXd out(static_cast<Index>(rows.size()), k());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = data_.row(static_cast<Index>(rows[r]));
    return TreatmentMatrix(std::move(out), names_);
  }

 private:
  MatrixXd data_;
  std::vector<std::string> names_;
};

/// Probabilistic-PCA treatment model T = B U + eps, U ~ N(0, I_m),
/// eps ~ N(0, sigma^2 I_k). `loadings` is B up to rotation.
struct FactorModel {
  MatrixXd loadings;          // k x m
  double noise_variance = 0;  // sigma^2_{t|u}
  VectorXd singular_values;   // m, descending
  VectorXd treatment_means;   // k; treatments are centred before use
  VectorXd eigenvalues;       // full k-spectrum of the sample covariance

  Index k() const noexcept { return loadings.rows(); }
  Index m() const noexcept { return loadings.cols(); }

  MatrixXd implied_covariance() const {
    return loadings * loadings.transpose() +
           noise_variance * MatrixXd::Identity(loadings.rows(), loadings.rows());
  }
};

/// f(u | t) = N(coef (t - treatment_means), cov), with cov independent of t.
struct ConditionalConfounder {
  MatrixXd coef;             // m x k
  MatrixXd cov;              // m x m, symmetric PSD
  int rank = 0;              // numerical rank of cov
  VectorXd treatment_means;  // k

  Index m() const noexcept { return coef.rows(); }
  Index k() const noexcept { return coef.cols(); }
  bool full_rank() const noexcept { return rank == m(); }

  VectorXd mean(const VectorXd& t) const {
    detail::require_size(t.size(), k(), "treatment vector");
    return coef * (t - treatment_means);
  }

  /// Linear map applied to a treatment difference (means cancel).
  VectorXd mean_shift(const VectorXd& delta) const {
    detail::require_size(delta.size(), k(), "treatment difference");
    return coef * delta;
  }
};

/// A treatment contrast t1 versus t2.
class Contrast {
 public:
  Contrast() = default;
  Contrast(VectorXd t1, VectorXd t2, std::string id = {})
      : t1_(std::move(t1)), t2_(std::move(t2)), id_(std::move(id)) {
    detail::require_size(t2_.size(), t1_.size(), "contrast t2");
    delta_ = t1_ - t2_;
  }

  /// The e_j versus 0 contrast (0-based j).
  static Contrast unit(Index k, Index j) {
    require(j >= 0 && j < k, "dimension", "unit contrast index out of range");
    VectorXd e = VectorXd::Zero(k);
    e(j) = 1.0;
    return Contrast(std::move(e), VectorXd::Zero(k), "e" + std::to_string(j + 1));
  }

  const VectorXd& t1() const noexcept { return t1_; }
  const VectorXd& t2() const noexcept { return t2_; }
  const VectorXd& delta() const noexcept { return delta_; }
  const std::string& id() const noexcept { return id_; }
  Index k() const noexcept { return delta_.size(); }

 private:
  VectorXd t1_, t2_, delta_;
  std::string id_;
};

/// PPCA maximum-likelihood solution from a covariance matrix: with
/// eigenpairs (lambda_i, v_i) descending, sigma^2 = mean(lambda_{m+1..k}) and
/// B = V_m (Lambda_m - sigma^2 I)^{1/2}.
inline FactorModel fit_ppca_covariance(const MatrixXd& covariance, Index m, VectorXd treatment_means) {
  const Index k = covariance.rows();
  require(covariance.cols() == k, "dimension", "covariance must be square");
  require(m >= 1, "dimension", "confounder dimension m must be at least 1");
  require(m < k, "dimension",
          "confounder dimension m=" + std::to_string(m) + " must be smaller than the number of treatments k=" +
              std::to_string(k) +
              ": with m >= k the noise variance cannot be separated from the loadings, so the "
              "conditional confounder distribution is not identified");
  detail::require_size(treatment_means.size(), k, "treatment means");

  const detail::SymEig eig = detail::sym_eig_desc(0.5 * (covariance + covariance.transpose()));
  const double sigma2 = eig.values.tail(k - m).mean();
  if (!(sigma2 > 0.0)) {
    throw NumericalError("degenerate_noise",
                         "estimated noise variance is not positive; trailing eigenvalues vanish");
  }

  FactorModel fm;
  fm.noise_variance = sigma2;
  fm.treatment_means = std::move(treatment_means);
  fm.eigenvalues = eig.values;
  fm.singular_values.resize(m);
  for (Index i = 0; i < m; ++i) {
    const double excess = eig.values(i) - sigma2;
    if (!(excess > 0.0)) {
      throw NumericalError("degenerate_loading",
                           "eigenvalue " + std::to_string(i + 1) +
                               " does not exceed the noise variance; loading column would be zero");
    }
    fm.singular_values(i) = std::sqrt(std::max(excess, 0.0));
  }
  MatrixXd v = eig.vectors.leftCols(m);
  detail::canonicalize_signs(v);
  fm.loadings = v * fm.singular_values.asDiagonal();
  return fm;
}

/// Fit the PPCA treatment model with m latent confounders. Columns are
/// centred internally and the means are kept on the returned model.
inline FactorModel fit_ppca(const TreatmentMatrix& T, Index m) {
  if (T.n() <= T.k()) {
    warn("fit_ppca: n=" + std::to_string(T.n()) + " <= k=" + std::to_string(T.k()) +
         "; the sample covariance is rank deficient");
  }
  return fit_ppca_covariance(T.covariance(), m, T.column_means());
}

enum class DimMethod { eigen_gap, holdout };

namespace detail {

inline void check_structure(const VectorXd& lambda, Index n) {
  const Index k = lambda.size();
  const double top = lambda(0);
  if (top <= 0.0 || (lambda.maxCoeff() - lambda.minCoeff()) <= 1e-9 * std::abs(top)) {
    throw InputError("no_structure", "all covariance eigenvalues coincide; no factor structure to select");
  }
  // Largest eigenvalue of a pure-noise sample covariance sits near the
  // Marchenko-Pastur edge sigma^2 (1 + sqrt(k/n))^2.
  const double noise = lambda.tail(k - 1).mean();
  const double ratio = std::sqrt(static_cast<double>(k) / static_cast<double>(n));
  const double edge = noise * (1.0 + ratio) * (1.0 + ratio) * 1.25;
  if (top <= edge) {
    throw InputError("no_structure",
                     "leading eigenvalue is within the pure-noise range; no factor structure to select");
  }
}

/// Mean held-out Gaussian negative log-likelihood per entry under the PPCA
/// covariance built from training eigenpairs.
inline double heldout_nll(const SymEig& train, Index m, const MatrixXd& centered_test) {
  const Index k = train.values.size();
  const double sigma2 = train.values.tail(k - m).mean();
  if (!(sigma2 > 0.0) || train.values(m - 1) <= sigma2) return std::numeric_limits<double>::infinity();
  double logdet = static_cast<double>(k - m) * std::log(sigma2);
  for (Index i = 0; i < m; ++i) logdet += std::log(train.values(i));
  const MatrixXd proj = centered_test * train.vectors;  // rows: y = V^T x
  double quad = 0.0;
  for (Index r = 0; r < proj.rows(); ++r) {
    for (Index i = 0; i < k; ++i) {
      const double var = i < m ? train.values(i) : sigma2;
      quad += proj(r, i) * proj(r, i) / var;
    }
  }
  const double rows = static_cast<double>(proj.rows());
  const double total = 0.5 * (rows * (static_cast<double>(k) * std::log(2.0 * std::numbers::pi) + logdet) + quad);
  return total / (rows * static_cast<double>(k));
}

}  // namespace detail

/// Choose the confounder dimension. eigen_gap maximises the relative gap
/// (lambda_i - lambda_{i+1}) / lambda_{i+1} over 1 <= i <= k-2; holdout
/// minimises 5-fold held-out per-entry negative log-likelihood over m < k.
inline Index select_dim(const TreatmentMatrix& T, DimMethod method, std::uint64_t seed = 0) {
  const Index k = T.k();
  require(k >= 3, "dimension", "dimension selection needs at least 3 treatments");
  const detail::SymEig eig = detail::sym_eig_desc(T.covariance());
  detail::check_structure(eig.values, T.n());

  if (method == DimMethod::eigen_gap) {
    Index best = 1;
    double best_gap = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i + 2 < k; ++i) {  // 1-based i = 1..k-2
      const double next = std::max(eig.values(i + 1), 1e-300);
      const double gap = (eig.values(i) - eig.values(i + 1)) / next;
      if (gap > best_gap) {
        best_gap = gap;
        best = i + 1;
      }
    }
    return best;
  }

  constexpr int kFolds = 5;
  require(T.n() >= 2 * kFolds, "dimension", "holdout selection needs at least 10 rows");
  detail::Stream stream(seed, 0x5e1ec7);
  const std::vector<std::size_t> order = detail::permutation(static_cast<std::size_t>(T.n()), stream);

  std::vector<double> score(static_cast<std::size_t>(k), 0.0);
  for (int fold = 0; fold < kFolds; ++fold) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t r = 0; r < order.size(); ++r) {
      (static_cast<int>(r % kFolds) == fold ? test_rows : train_rows).push_back(order[r]);
    }
    const TreatmentMatrix train = T.select_rows(train_rows);
    const TreatmentMatrix test = T.select_rows(test_rows);
    const detail::SymEig train_eig = detail::sym_eig_desc(train.covariance());
    const MatrixXd centered = test.data().rowwise() - train.column_means().transpose();
    for (Index m = 1; m < k; ++m) {
      score[static_cast<std::size_t>(m)] += detail::heldout_nll(train_eig, m, centered) / kFolds;
    }
  }
  Index best = 1;
  for (Index m = 2; m < k; ++m) {
    if (score[static_cast<std::size_t>(m)] < score[static_cast<std::size_t>(best)]) best = m;
  }
  if (!std::isfinite(score[static_cast<std::size_t>(best)])) {
    throw NumericalError("degenerate_loading", "no confounder dimension gives a valid held-out fit");
  }
  return best;
}

/// Conditional confounder law implied by a factor model with U ~ N(0, I):
/// coef = B^T (B B^T + sigma^2 I_k)^{-1} = (B^T B + sigma^2 I_m)^{-1} B^T and
/// Sigma_{u|t} = I_m - coef B = sigma^2 (B^T B + sigma^2 I_m)^{-1}. Only m x m
/// systems are solved.
inline ConditionalConfounder conditional_confounder(const FactorModel& fm) {
  if (!(fm.noise_variance > 0.0)) {
    throw InputError("invalid_model", "factor model noise variance must be positive");
  }
  const Index m = fm.m();
  const MatrixXd& b = fm.loadings;
  const MatrixXd inner = b.transpose() * b + fm.noise_variance * MatrixXd::Identity(m, m);
  const Eigen::LDLT<MatrixXd> ldlt(inner);
  ConditionalConfounder cc;
  cc.coef = ldlt.solve(b.transpose());
  MatrixXd cov = fm.noise_variance * ldlt.solve(MatrixXd::Identity(m, m));
  cc.cov = 0.5 * (cov + cov.transpose());
  cc.rank = detail::numerical_rank(detail::sym_eig_desc(cc.cov).values, 1e-10);
  cc.treatment_means =
      fm.treatment_means.size() == fm.k() ? fm.treatment_means : VectorXd::Zero(fm.k());
  return cc;
}

/// Difference in conditional confounder means for a contrast,
/// mu_{u|t1} - mu_{u|t2}.
inline VectorXd mu_delta(const ConditionalConfounder& cc, const Contrast& c) {
  detail::require_size(c.k(), cc.k(), "contrast");
  return cc.coef * c.delta();
}

/// Build a validated ConditionalConfounder from raw parts: the covariance is
/// symmetrised and eigenvalues below -1e-8 are rejected.
inline ConditionalConfounder make_confounder(MatrixXd coef, MatrixXd cov, VectorXd treatment_means) {
  const Index m = coef.rows();
  const Index k = coef.cols();
  require(m >= 1 && k >= 1, "dimension", "confounder map must be non-empty");
  require(cov.rows() == m && cov.cols() == m, "dimension", "sigma_u_given_t must be m x m");
  detail::require_size(treatment_means.size(), k, "treatment_means");
  require(coef.allFinite() && cov.allFinite() && treatment_means.allFinite(), "non_finite",
          "confounder parameters contain non-finite values");
  ConditionalConfounder cc;
  cc.coef = std::move(coef);
  cc.cov = 0.5 * (cov + cov.transpose());
  const detail::SymEig eig = detail::sym_eig_desc(cc.cov);
  if (eig.values(m - 1) < -1e-8) {
    std::ostringstream msg;
    msg << "sigma_u_given_t is not positive semi-definite (smallest eigenvalue " << eig.values(m - 1) << ")";
    throw InputError("non_psd", msg.str());
  }
  cc.rank = detail::numerical_rank(eig.values, 1e-10);
  cc.treatment_means = std::move(treatment_means);
  return cc;
}

namespace detail {

inline std::vector<double> row_major(const MatrixXd& a) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.push_back(a(i, j));
  return out;
}

inline MatrixXd from_row_major(const nlohmann::json& arr, Index rows, Index cols, const std::string& what) {
  if (!arr.is_array() || static_cast<Index>(arr.size()) != rows * cols) {
    throw InputError("malformed_file", what + " must be an array of " + std::to_string(rows * cols) + " numbers");
  }
  MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const auto& v = arr[static_cast<std::size_t>(i * cols + j)];
      if (!v.is_number()) throw InputError("malformed_file", what + " contains a non-numeric entry");
      out(i, j) = v.get<double>();
    }
  }
  return out;
}

inline VectorXd vector_from_json(const nlohmann::json& arr, Index n, const std::string& what) {
  return from_row_major(arr, n, 1, what).col(0);
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline nlohmann::json to_json(const ConditionalConfounder& cc) {
  return {{"m", cc.m()},
          {"k", cc.k()},
          {"coef", detail::row_major(cc.coef)},
          {"sigma_u_given_t", detail::row_major(cc.cov)},
          {"treatment_means", detail::to_std(cc.treatment_means)}};
}

inline ConditionalConfounder confounder_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("m") || !j.contains("k") || !j.contains("coef") ||
      !j.contains("sigma_u_given_t")) {
    throw InputError("malformed_file", "confounder file needs keys m, k, coef, sigma_u_given_t");
  }
  if (!j["m"].is_number_integer() || !j["k"].is_number_integer()) {
    throw InputError("malformed_file", "m and k must be integers");
  }
  const Index m = j["m"].get<Index>();
  const Index k = j["k"].get<Index>();
  require(m >= 1 && k >= 1, "malformed_file", "m and k must be positive");
  MatrixXd coef = detail::from_row_major(j["coef"], m, k, "coef");
  MatrixXd cov = detail::from_row_major(j["sigma_u_given_t"], m, m, "sigma_u_given_t");
  VectorXd means = j.contains("treatment_means") ? detail::vector_from_json(j["treatment_means"], k, "treatment_means")
                                                 : VectorXd::Zero(k);
  return make_confounder(std::move(coef), std::move(cov), std::move(means));
}

inline nlohmann::json to_json(const FactorModel& fm) {
  return {{"k", fm.k()},
          {"m", fm.m()},
          {"loadings", detail::row_major(fm.loadings)},
          {"noise_variance", fm.noise_variance},
          {"singular_values", detail::to_std(fm.singular_values)},
          {"treatment_means", detail::to_std(fm.treatment_means)},
          {"eigenvalues", detail::to_std(fm.eigenvalues)}};
}

inline FactorModel factor_model_from_json(const nlohmann::json& j) {
  try {
    const Index k = j.at("k").get<Index>();
    const Index m = j.at("m").get<Index>();
    FactorModel fm;
    fm.loadings = detail::from_row_major(j.at("loadings"), k, m, "loadings");
    fm.noise_variance = j.at("noise_variance").get<double>();
    fm.singular_values = detail::vector_from_json(j.at("singular_values"), m, "singular_values");
    fm.treatment_means = detail::vector_from_json(j.at("treatment_means"), k, "treatment_means");
    fm.eigenvalues = j.contains("eigenvalues") ? detail::vector_from_json(j["eigenvalues"], k, "eigenvalues")
                                               : VectorXd();
    require(fm.noise_variance > 0.0, "malformed_file", "noise_variance must be positive");
    return fm;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed_file", std::string("factor model file: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing_file", "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed_file", path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("io", "cannot write " + path);
  out << j.dump(2) << '\n';
}

/// Load an externally estimated conditional confounder distribution.
inline ConditionalConfounder load_confounder(const std::string& path) {
  return confounder_from_json(read_json_file(path));
}

inline void save_confounder(const ConditionalConfounder& cc, const std::string& path) {
  write_json_file(path, to_json(cc));
}

}  // namespace copsens

#endif  // COPSENS_MODEL_CORE_HPP
