#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace copsens;
using namespace copsens::testing;

namespace {

double rel_frob(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(TreatmentMatrix, RejectsBadShapesAndValues) {
  EXPECT_THROW(TreatmentMatrix(MatrixXd::Zero(1, 3)), InputError);
  EXPECT_THROW(TreatmentMatrix(MatrixXd::Zero(4, 0)), InputError);
  MatrixXd bad = MatrixXd::Zero(3, 2);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(TreatmentMatrix{bad}, InputError);
  const TreatmentMatrix t(MatrixXd::Ones(3, 2));
  EXPECT_EQ(t.column_names()[1], "T2");
}

TEST(FitPpca, TwoByTwoCovarianceByHand) {
  MatrixXd s(2, 2);
  s << 5, 2, 2, 2;
  const FactorModel fm = fit_ppca_covariance(s, 1, VectorXd::Zero(2));
  EXPECT_NEAR(fm.eigenvalues(0), 6.0, 1e-12);
  EXPECT_NEAR(fm.eigenvalues(1), 1.0, 1e-12);
  EXPECT_NEAR(fm.noise_variance, 1.0, 1e-12);
  EXPECT_NEAR(fm.singular_values(0), std::sqrt(5.0), 1e-12);
  // v1 = (2, 1)/sqrt(5), positive largest entry.
  EXPECT_NEAR(fm.loadings(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(fm.loadings(1, 0), 1.0, 1e-12);
}

TEST(FitPpca, RecoversImpliedCovarianceAtLargeN) {
  SimTruth truth = four_treatment_truth(11);
  const SimData d = gen_linear_gaussian(truth, 50000);
  const FactorModel fm = fit_ppca(d.T, 1);
  const MatrixXd target = truth.b_true * truth.b_true.transpose() + MatrixXd::Identity(4, 4);
  EXPECT_LT(rel_frob(fm.implied_covariance(), target), 0.05);
  EXPECT_NEAR(fm.noise_variance, 1.0, 0.05);
}

TEST(FitPpca, NoFactorLoadingsShrinkWithN) {
  auto loading_norm = [](Index n) {
    const TreatmentMatrix t(random_normal(n, 5, 5));
    return fit_ppca(t, 1);
  };
  const FactorModel small = loading_norm(2000);
  const FactorModel large = loading_norm(80000);
  EXPECT_NEAR(large.noise_variance, 1.0, 0.02);
  EXPECT_LT(large.loadings.norm(), small.loadings.norm());
  EXPECT_LT(large.loadings.norm(), 0.25);
}

TEST(FitPpca, DimensionErrors) {
  const TreatmentMatrix t(random_normal(50, 3, 1));
  EXPECT_THROW(fit_ppca(t, 3), InputError);
  EXPECT_THROW(fit_ppca(t, 0), InputError);
  try {
    fit_ppca(t, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "dimension");
    EXPECT_NE(std::string(e.what()).find("not identified"), std::string::npos);
  }
}

TEST(FitPpca, WarnsWhenFewRows) {
  WarningCapture w;
  const TreatmentMatrix t(random_normal(4, 6, 2));
  try {
    fit_ppca(t, 1);
  } catch (const Error&) {
  }
  EXPECT_TRUE(w.any_contains("n=4"));
}

TEST(FitPpca, DegenerateLoadingWhenEigenvaluesTie) {
  // Top two eigenvalues equal: with m=2 the second loading column vanishes.
  MatrixXd s = MatrixXd::Identity(3, 3);
  s(0, 0) = 3.0;
  EXPECT_THROW(fit_ppca_covariance(s, 2, VectorXd::Zero(3)), NumericalError);
}

TEST(FitPpca, ReconstructionReplacesTrailingEigenvaluesByMean) {
  const TreatmentMatrix t(random_normal(300, 6, 9) * random_spd(6, 4));
  const FactorModel fm = fit_ppca(t, 2);
  const detail::SymEig sample = detail::sym_eig_desc(t.covariance());
  const detail::SymEig implied = detail::sym_eig_desc(fm.implied_covariance());
  for (Index i = 0; i < 2; ++i) {
    EXPECT_NEAR(implied.values(i), sample.values(i), 1e-10 * sample.values(0));
    EXPECT_NEAR(std::abs(implied.vectors.col(i).dot(sample.vectors.col(i))), 1.0, 1e-10);
  }
  const double tail = sample.values.tail(4).mean();
  for (Index i = 2; i < 6; ++i) EXPECT_NEAR(implied.values(i), tail, 1e-10 * sample.values(0));
}

TEST(FitPpca, SignConventionIsDeterministic) {
  const TreatmentMatrix t(random_normal(200, 5, 3) * random_spd(5, 8));
  const FactorModel fm = fit_ppca(t, 2);
  for (Index j = 0; j < 2; ++j) {
    Index arg = 0;
    fm.loadings.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(fm.loadings(arg, j), 0.0);
  }
}

TEST(SelectDim, EigenGapFindsOneFactor) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const SimData d = gen_linear_gaussian(four_treatment_truth(seed), 2000);
    EXPECT_EQ(select_dim(d.T, DimMethod::eigen_gap), 1);
  }
}

TEST(SelectDim, HoldoutFindsThreeFactorsInMostSeeds) {
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GwasOptions opt;
    opt.binary_treatments = false;
    const SimData d = gen_gwas(opt, seed);
    hits += select_dim(d.T, DimMethod::holdout, seed) == 3 ? 1 : 0;
  }
  EXPECT_GE(hits, 3);
}

TEST(SelectDim, EigenGapFindsThreeFactorsOnBinaryGwas) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) EXPECT_EQ(select_dim(gen_gwas({}, seed).T, DimMethod::eigen_gap), 3);
}

TEST(SelectDim, NoiseHasNoStructure) {
  const TreatmentMatrix t(random_normal(5000, 6, 4));
  try {
    select_dim(t, DimMethod::eigen_gap);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "no_structure");
  }
  EXPECT_THROW(select_dim(TreatmentMatrix(random_normal(100, 2, 1)), DimMethod::holdout), InputError);
}

TEST(ConditionalConfounder, ScalarCaseByHand) {
  FactorModel fm;
  fm.loadings = MatrixXd::Constant(1, 1, 2.0);
  fm.noise_variance = 1.0;
  const ConditionalConfounder cc = conditional_confounder(fm);
  EXPECT_NEAR(cc.coef(0, 0), 0.4, 1e-15);
  EXPECT_NEAR(cc.cov(0, 0), 0.2, 1e-15);
  EXPECT_EQ(cc.rank, 1);
  const Contrast c(VectorXd::Ones(1), VectorXd::Zero(1));
  EXPECT_NEAR(mu_delta(cc, c)(0), 0.4, 1e-15);
}

TEST(ConditionalConfounder, ZeroLoadingsGiveIdentity) {
  FactorModel fm;
  fm.loadings = MatrixXd::Zero(5, 2);
  fm.noise_variance = 0.7;
  const ConditionalConfounder cc = conditional_confounder(fm);
  EXPECT_EQ(cc.coef.norm(), 0.0);
  EXPECT_NEAR((cc.cov - MatrixXd::Identity(2, 2)).norm(), 0.0, 1e-15);
}

TEST(ConditionalConfounder, ShermanMorrisonValue) {
  const ConditionalConfounder cc = conditional_confounder(b61_model());
  EXPECT_NEAR(cc.cov(0, 0), 1.0 / 5.45, 1e-14);
}

TEST(ConditionalConfounder, RejectsNonPositiveNoise) {
  FactorModel fm = b61_model();
  fm.noise_variance = 0.0;
  EXPECT_THROW(conditional_confounder(fm), InputError);
}

TEST(ConditionalConfounder, WoodburyMatchesDirectInverse) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Index k = 2 + static_cast<Index>(seed % 19);
    const Index m = 1 + static_cast<Index>(seed % std::min<Index>(k - 1, 4));
    const FactorModel fm = random_factor_model(k, m, seed, 0.3 + 0.1 * static_cast<double>(seed % 5));
    const ConditionalConfounder cc = conditional_confounder(fm);
    const MatrixXd& b = fm.loadings;
    const MatrixXd kk = b * b.transpose() + fm.noise_variance * MatrixXd::Identity(k, k);
    const MatrixXd coef = b.transpose() * kk.inverse();
    const MatrixXd cov = MatrixXd::Identity(m, m) - coef * b;
    EXPECT_LT((cc.coef - coef).norm(), 1e-10 * coef.norm()) << "seed " << seed;
    EXPECT_LT((cc.cov - cov).norm(), 1e-10 * cov.norm()) << "seed " << seed;
    const VectorXd ev = detail::sym_eig_desc(cc.cov).values;
    EXPECT_LE(ev.maxCoeff(), 1.0 + 1e-12);
    EXPECT_GE(ev.minCoeff(), -1e-12);
  }
}

TEST(ConditionalConfounder, WhitenedShiftInvariantUnderReparameterization) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ConditionalConfounder cc = conditional_confounder(random_factor_model(8, 3, seed));
    const ConditionalConfounder tc = transform(cc, random_spd(3, seed + 100));
    const Contrast c(random_normal(8, 1, seed, 5).col(0), VectorXd::Zero(8));
    const double a = (detail::inv_sqrt_psd(cc.cov) * mu_delta(cc, c)).norm();
    const double b = (detail::inv_sqrt_psd(tc.cov) * mu_delta(tc, c)).norm();
    EXPECT_NEAR(a, b, 1e-8 * a);
  }
}

TEST(MuDelta, ZeroAndNullSpaceContrasts) {
  const FactorModel fm = b61_model();
  const ConditionalConfounder cc = conditional_confounder(fm);
  const Contrast same(VectorXd::Ones(4), VectorXd::Ones(4));
  EXPECT_EQ(mu_delta(cc, same).norm(), 0.0);
  VectorXd n0(4);
  n0 << 0.5, -2.0, 0.0, 0.0;  // orthogonal to B
  EXPECT_NEAR(mu_delta(cc, Contrast(n0, VectorXd::Zero(4)))(0), 0.0, 1e-15);
  EXPECT_THROW(mu_delta(cc, Contrast(VectorXd::Ones(3), VectorXd::Zero(3))), InputError);
}

TEST(ConfounderFile, RoundTripIsBitwise) {
  const ConditionalConfounder cc = conditional_confounder(random_factor_model(7, 2, 3));
  const auto path = std::filesystem::temp_directory_path() / "copsens_cc_roundtrip.json";
  save_confounder(cc, path.string());
  const ConditionalConfounder back = load_confounder(path.string());
  EXPECT_TRUE(back.coef == cc.coef);
  EXPECT_TRUE(back.cov == cc.cov);
  EXPECT_TRUE(back.treatment_means == cc.treatment_means);
  EXPECT_EQ(back.rank, cc.rank);
}

TEST(ConfounderFile, SymmetrizesTinyAsymmetry) {
  nlohmann::json j = {{"m", 2}, {"k", 2}, {"coef", {1, 0, 0, 1}},
                      {"sigma_u_given_t", {0.5, 0.1 + 1e-12, 0.1, 0.4}}, {"treatment_means", {0, 0}}};
  const ConditionalConfounder cc = confounder_from_json(j);
  EXPECT_EQ(cc.cov(0, 1), cc.cov(1, 0));
  EXPECT_NEAR(cc.cov(0, 1), 0.1 + 5e-13, 1e-15);
}

TEST(ConfounderFile, RejectsNegativeEigenvalue) {
  nlohmann::json j = {{"m", 1}, {"k", 2}, {"coef", {1, 0}}, {"sigma_u_given_t", {-0.1}}, {"treatment_means", {0, 0}}};
  try {
    confounder_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "non_psd");
  }
}

TEST(ConfounderFile, MalformedInputs) {
  EXPECT_THROW(confounder_from_json(nlohmann::json{{"m", 1}}), InputError);
  nlohmann::json j = {{"m", 1}, {"k", 2}, {"coef", {1}}, {"sigma_u_given_t", {0.2}}};
  EXPECT_THROW(confounder_from_json(j), InputError);
  EXPECT_THROW(load_confounder("/nonexistent/cc.json"), InputError);
}

TEST(FactorModelFile, RoundTrip) {
  const FactorModel fm = fit_ppca(TreatmentMatrix(random_normal(100, 4, 2) * random_spd(4, 1)), 1);
  const FactorModel back = factor_model_from_json(to_json(fm));
  EXPECT_TRUE(back.loadings == fm.loadings);
  EXPECT_EQ(back.noise_variance, fm.noise_variance);
}
