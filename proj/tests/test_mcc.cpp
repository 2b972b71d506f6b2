#include "support.hpp"

#include <gtest/gtest.h>

using namespace copsens;
using namespace copsens::testing;

namespace {

struct Problem {
  ContrastBank bank;
  MatrixXd sigma;
};

Problem random_problem(std::uint64_t seed, Index K = 12, Index m = 3) {
  const ConditionalConfounder cc = conditional_confounder(random_factor_model(K, m, seed, 0.7));
  GaussianOutcome o;
  o.tau_naive = random_normal(K, 1, seed, 30).col(0);
  o.sigma2_y_given_t = 1.0 + 0.1 * static_cast<double>(seed % 5);
  return {build_bank_unitwise(cc, o, all_treatments(K)), cc.cov};
}

double kkt_residual(const Problem& p, const MccResult& r) {
  const MatrixXd& d = p.bank.deltas;
  const VectorXd lhs = (d.transpose() * d + r.lambda * p.sigma) * r.gamma_star;
  const VectorXd rhs = d.transpose() * p.bank.naive / p.bank.sigma_y_given_t;
  return (lhs - rhs).norm() / std::max(rhs.norm(), 1.0);
}

}  // namespace

TEST(ContrastBank, UnitwiseRowsAreConfounderMapColumns) {
  const SimData d = gen_gwas({}, 1);
  const ConditionalConfounder cc = conditional_confounder(fit_ppca(d.T, 3));
  const GaussianOutcome o = fit_linear(d.T, d.y);
  const ContrastBank bank = build_bank_unitwise(cc, o, all_treatments(d.T.k()));
  ASSERT_EQ(bank.size(), 100);
  for (Index j = 0; j < 100; ++j) {
    EXPECT_LT((bank.deltas.row(j).transpose() - cc.coef.col(j)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(bank.naive(j), o.tau_naive(j));
  }
  EXPECT_EQ(bank.ids[4], "e5");
}

TEST(ContrastBank, SingleContrastMatchesMuDelta) {
  const ConditionalConfounder cc = conditional_confounder(random_factor_model(5, 2, 3));
  GaussianOutcome o;
  o.tau_naive = VectorXd::LinSpaced(5, 0.0, 1.0);
  const Contrast c(VectorXd::Constant(5, 0.3), VectorXd::Unit(5, 1), "mine");
  const ContrastBank bank = build_bank(cc, o, {c});
  EXPECT_EQ((bank.deltas.row(0).transpose() - mu_delta(cc, c)).norm(), 0.0);
  EXPECT_NEAR(bank.naive(0), o.tau_naive.dot(c.delta()), 1e-15);
  EXPECT_EQ(bank.ids[0], "mine");
}

TEST(ContrastBank, ZeroMapLeavesNaiveEffects) {
  const ConditionalConfounder cc = make_confounder(MatrixXd::Zero(2, 6), MatrixXd::Identity(2, 2), VectorXd::Zero(6));
  GaussianOutcome o;
  o.tau_naive = VectorXd::LinSpaced(6, -1.0, 1.5);
  const ContrastBank bank = build_bank_unitwise(cc, o, all_treatments(6));
  EXPECT_EQ(bank.deltas.norm(), 0.0);
  for (Norm p : {Norm::l1, Norm::l2}) {
    const MccResult r = mcc_minimize(bank, cc.cov, p, 1.0);
    EXPECT_NEAR(r.achieved_norm, norm_of(o.tau_naive, p), 1e-12);
    EXPECT_LT((pate_vector(bank, r.gamma_star) - o.tau_naive).norm(), 1e-12);
  }
}

TEST(Mcc, ZeroCapKeepsNaive) {
  const Problem p = random_problem(1);
  for (Norm n : {Norm::l1, Norm::l2, Norm::linf}) {
    const MccResult r = mcc_minimize(p.bank, p.sigma, n, 0.0);
    EXPECT_EQ(r.gamma_star.norm(), 0.0);
    EXPECT_NEAR(r.achieved_norm, norm_of(p.bank.naive, n), 1e-12);
  }
}

TEST(Mcc, SingleContrastExplainedAwayAtItsRobustnessValue) {
  const ConditionalConfounder cc = conditional_confounder(random_factor_model(4, 2, 6));
  GaussianOutcome o;
  o.tau_naive = VectorXd::Constant(4, 0.2);
  o.sigma2_y_given_t = 1.0;
  const Contrast c = Contrast::unit(4, 1);
  const double rv = robustness_value(0.2, cc, 1.0, c).rv;
  ASSERT_LT(rv, 1.0);
  const ContrastBank bank = build_bank(cc, o, {c});
  EXPECT_NEAR(mcc_minimize(bank, cc.cov, Norm::l2, std::min(1.0, rv * (1.0 + 1e-9))).achieved_norm, 0.0, 1e-6);
  EXPECT_NEAR(mcc_minimize(bank, cc.cov, Norm::l2, std::min(1.0, rv * 1.5)).achieved_norm, 0.0, 1e-12);
  EXPECT_GT(mcc_minimize(bank, cc.cov, Norm::l2, rv * 0.5).achieved_norm, 0.05);
}

TEST(Mcc, L2SatisfiesKktAndFeasibility) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const Problem p = random_problem(seed);
    for (double cap : {0.05, 0.3, 1.0}) {
      const MccResult r = mcc_minimize(p.bank, p.sigma, Norm::l2, cap);
      EXPECT_LT(kkt_residual(p, r), 1e-8) << seed << " " << cap;
      EXPECT_LE(r.achieved_r2, cap + 1e-8);
      EXPECT_GE(r.lambda, 0.0);
      if (r.lambda > 0.0) EXPECT_NEAR(r.achieved_r2, cap, 1e-7 * cap);
    }
  }
}

TEST(Mcc, L2BeatsRandomFeasiblePoints) {
  const Problem p = random_problem(3);
  const MccResult r = mcc_minimize(p.bank, p.sigma, Norm::l2, 0.4);
  detail::Stream s(3, 31);
  const MatrixXd inv_root = detail::inv_sqrt_psd(p.sigma);
  for (int i = 0; i < 2000; ++i) {
    VectorXd z(3);
    for (Index l = 0; l < 3; ++l) z(l) = s.normal();
    z *= std::sqrt(0.4) * s.uniform() / z.norm();
    EXPECT_GE(norm_of(pate_vector(p.bank, inv_root * z), Norm::l2), r.achieved_norm - 1e-12);
  }
}

TEST(Mcc, L1RestartsAgreeAndBeatL2Solution) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Problem p = random_problem(seed, 30, 3);
    const double cap = 0.8;
    const MccResult l2 = mcc_minimize(p.bank, p.sigma, Norm::l2, cap);
    const double l2_as_l1 = norm_of(pate_vector(p.bank, l2.gamma_star), Norm::l1);
    std::vector<double> values;
    detail::Stream s(seed, 32);
    const MatrixXd inv_root = detail::inv_sqrt_psd(p.sigma);
    for (int restart = 0; restart < 10; ++restart) {
      MccOptions opt;
      VectorXd z(3);
      for (Index l = 0; l < 3; ++l) z(l) = s.normal();
      opt.start = VectorXd(inv_root * (std::sqrt(cap) * s.uniform() / z.norm()) * z);
      const MccResult r = mcc_minimize(p.bank, p.sigma, Norm::l1, cap, opt);
      EXPECT_LE(r.achieved_r2, cap + 1e-8);
      values.push_back(r.achieved_norm);
    }
    const double best = *std::min_element(values.begin(), values.end());
    for (double v : values) EXPECT_LE(v - best, 2e-5) << seed;
    EXPECT_LE(values.front(), l2_as_l1 + 1e-5) << seed;
  }
}

TEST(Mcc, LinfIsNoWorseThanL2Solution) {
  const Problem p = random_problem(9, 20, 2);
  const MccResult l2 = mcc_minimize(p.bank, p.sigma, Norm::l2, 0.6);
  const MccResult linf = mcc_minimize(p.bank, p.sigma, Norm::linf, 0.6);
  EXPECT_LE(linf.achieved_norm, norm_of(pate_vector(p.bank, l2.gamma_star), Norm::linf) + 1e-5);
}

TEST(Mcc, NonConvergenceCarriesLastIterate) {
  const Problem p = random_problem(2, 30, 3);
  MccOptions opt;
  opt.max_iter = 50;
  try {
    mcc_minimize(p.bank, p.sigma, Norm::l1, 1.0, opt);
    FAIL();
  } catch (const MccNonConvergence& e) {
    EXPECT_EQ(e.kind(), "non_convergence");
    EXPECT_EQ(e.last_iterate().iterations, 50);
    EXPECT_LE(e.last_iterate().achieved_r2, 1.0 + 1e-8);
  }
}

TEST(Mcc, RankDeficientCovarianceIsRejected) {
  Problem p = random_problem(4, 6, 2);
  p.sigma = MatrixXd::Zero(2, 2);
  p.sigma(0, 0) = 1.0;
  EXPECT_THROW(mcc_minimize(p.bank, p.sigma, Norm::l2, 0.5), InputError);
}

TEST(MccReport, RowsAndShrinkage) {
  const Problem p = random_problem(5, 4, 1);
  const MccResult r = mcc_minimize(p.bank, p.sigma, Norm::l2, 0.5);
  const auto rows = mcc_report(p.bank, r.gamma_star);
  ASSERT_EQ(rows.size(), 4u);
  const VectorXd adj = pate_vector(p.bank, r.gamma_star);
  for (Index k = 0; k < 4; ++k) {
    EXPECT_EQ(rows[static_cast<std::size_t>(k)].adjusted, adj(k));
    EXPECT_NEAR(rows[static_cast<std::size_t>(k)].shrinkage_ratio, adj(k) / p.bank.naive(k), 1e-15);
  }
}

TEST(Auc, HandValues) {
  VectorXd s(4);
  s << 0.1, 0.4, 0.35, 0.8;
  EXPECT_NEAR(auc(s, {0, 0, 1, 1}), 0.75, 1e-15);
  EXPECT_NEAR(auc(s, {0, 1, 0, 1}), 1.0, 1e-15);
  EXPECT_NEAR(auc(VectorXd::Ones(4), {0, 1, 0, 1}), 0.5, 1e-15);
  EXPECT_THROW(auc(s, {1, 1, 1, 1}), InputError);
}

TEST(Mcc, ObjectiveNonincreasingInCapAndSlackness) {
  const Problem p = random_problem(12, 25, 3);
  for (Norm n : {Norm::l1, Norm::l2}) {
    double prev = kInf;
    for (double cap : {0.0, 0.1, 0.3, 0.6, 1.0}) {
      const MccResult r = mcc_minimize(p.bank, p.sigma, n, cap);
      EXPECT_LE(r.achieved_norm, prev + 1e-6);
      prev = r.achieved_norm;
      if (n == Norm::l2 && std::isfinite(r.lambda)) EXPECT_LT(std::abs(r.lambda * (r.achieved_r2 - cap)), 1e-8);
    }
  }
}
