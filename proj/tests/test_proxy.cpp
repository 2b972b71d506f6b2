#include "support.hpp"

#include <gtest/gtest.h>

using namespace copsens;
using namespace copsens::testing;

namespace {

struct ProxyData {
  VectorXd y, t, z;
};

/// U ~ N(0, su2), Z = U + N(0, 1 - su2), T = beta U + N(0, st2), Y = tau T + gamma U + N(0, sy2).
ProxyData simulate_proxy(Index n, std::uint64_t seed, double beta = 1.0, double gamma = 1.0, double tau = 0.5,
                         double su2 = 0.5, double st2 = 1.0, double sy2 = 1.0) {
  detail::Stream s(seed, 80);
  ProxyData d{VectorXd(n), VectorXd(n), VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const double u = std::sqrt(su2) * s.normal();
    d.z(i) = u + std::sqrt(1.0 - su2) * s.normal();
    d.t(i) = beta * u + std::sqrt(st2) * s.normal();
    d.y(i) = tau * d.t(i) + gamma * u + std::sqrt(sy2) * s.normal();
  }
  return d;
}

ProxyFit example_fit() {
  ProxyFit f;
  f.tilde_beta = 0.5;
  f.tilde_gamma = 0.4;
  f.tilde_tau = 0.7;
  f.sigma2_T = 1.5;
  f.sigma2_T_given_Z = 1.25;
  f.sigma2_Y_given_TZ = 1.4;
  return f;
}

}  // namespace

TEST(ProxyFit, ReducedFormCoefficients) {
  const ProxyData d = simulate_proxy(50000, 1);
  const ProxyFit f = fit_proxy(d.y, d.t, d.z);
  EXPECT_NEAR(f.tilde_beta, 0.5, 3.0 * f.se_tilde_beta);
  EXPECT_NEAR(f.tilde_gamma, 0.4, 3.0 * f.se_tilde_gamma);
  EXPECT_NEAR(f.tilde_tau, 0.7, 3.0 * f.se_tilde_tau);
  EXPECT_NEAR(f.sigma2_T, 1.5, 0.05);
  EXPECT_NEAR(f.sigma2_T_given_Z, 1.25, 0.05);
  // Var(U | T, Z) = 1 / (1/0.5 + 1/0.5 + 1) = 0.2.
  EXPECT_NEAR(f.sigma2_Y_given_TZ, 1.2, 0.05);
  EXPECT_LE(f.sigma2_T_given_Z, f.sigma2_T);
}

TEST(ProxyFit, IndependentProxyAndPerfectProxy) {
  const ProxyData d = simulate_proxy(20000, 2);
  const VectorXd noise = random_normal(20000, 1, 2, 81).col(0);
  const ProxyFit f = fit_proxy(d.y, d.t, noise);
  EXPECT_LT(std::abs(f.tilde_beta), 3.0 * f.se_tilde_beta);
  EXPECT_LT(std::abs(f.tilde_gamma), 3.0 * f.se_tilde_gamma);
  const ProxyData perfect = simulate_proxy(20000, 3, 1.0, 1.0, 0.5, 1.0);
  const ProxyFit pf = fit_proxy(perfect.y, perfect.t, perfect.z);
  EXPECT_NEAR(pf.tilde_tau, 0.5, 3.0 * pf.se_tilde_tau);
}

TEST(ProxyFit, CollinearInputsAreRejected) {
  const VectorXd t = random_normal(50, 1, 4).col(0);
  try {
    fit_proxy(VectorXd::Ones(50) + t, t, 2.0 * t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "singular_fit");
  }
  EXPECT_THROW(fit_proxy(VectorXd::Ones(3), VectorXd::Ones(3), VectorXd::Ones(3)), InputError);
}

TEST(ProxyDomain, ExampleAndSpecialCases) {
  const ProxyDomain d = sigma_u2_domain(example_fit());
  EXPECT_NEAR(d.lo, 0.55 / 2.3, 1e-15);
  EXPECT_EQ(d.hi, 1.0);
  ProxyFit nb = example_fit();
  nb.tilde_beta = 0.0;
  const double a = 0.16 * 1.25;
  EXPECT_NEAR(sigma_u2_domain(nb).lo, a / (a + 1.5 * 1.4), 1e-15);
  ProxyFit none = example_fit();
  none.tilde_beta = none.tilde_gamma = 0.0;
  const ProxyDomain nd = sigma_u2_domain(none);
  EXPECT_EQ(nd.lo, 0.0);
  EXPECT_TRUE(nd.no_information);
}

TEST(ProxyDomain, CoversTrueVarianceShare) {
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const ProxyData d = simulate_proxy(2000, seed);
    const ProxyDomain dom = sigma_u2_domain(fit_proxy(d.y, d.t, d.z));
    covered += dom.lo <= 0.5 && 0.5 <= dom.hi ? 1 : 0;
  }
  EXPECT_GE(covered, 95);
}

TEST(TauAdjusted, IdentityAtFullShareAndExampleValue) {
  const ProxyFit f = example_fit();
  EXPECT_EQ(tau_adjusted(f, 1.0), f.tilde_tau);
  EXPECT_NEAR(tau_adjusted(f, 0.5), 0.5, 1e-14);
  ProxyFit zero = f;
  zero.tilde_gamma = 0.0;
  for (double s : {0.2, 0.6, 0.9}) EXPECT_EQ(tau_adjusted(zero, std::max(s, sigma_u2_domain(zero).lo + 1e-6)), 0.7);
  try {
    tau_adjusted(f, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "domain");
  }
}

TEST(TauAdjusted, PositivityAtLowerEndpointWithoutOutcomeLink) {
  ProxyFit f = example_fit();
  f.tilde_gamma = 0.0;
  const double lo = sigma_u2_domain(f).lo;
  EXPECT_NEAR(lo, 0.25 / 1.5, 1e-15);
  try {
    tau_adjusted(f, lo);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "positivity");
  }
}

TEST(TauAdjusted, MonotoneOverDomain) {
  for (double sign : {1.0, -1.0}) {
    ProxyFit f = example_fit();
    f.tilde_gamma *= sign;
    const ProxyDomain d = sigma_u2_domain(f);
    double prev = tau_adjusted(f, d.lo);
    for (int i = 1; i <= 50; ++i) {
      const double v = tau_adjusted(f, d.lo + (d.hi - d.lo) * i / 50.0);
      if (sign > 0) EXPECT_GE(v, prev - 1e-14); else EXPECT_LE(v, prev + 1e-14);
      prev = v;
    }
  }
}

TEST(TauAdjusted, RecoversTruthAtTrueShare) {
  std::vector<double> est;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ProxyData d = simulate_proxy(20000, seed + 200);
    est.push_back(tau_adjusted(fit_proxy(d.y, d.t, d.z), 0.5));
  }
  double mean = 0.0, var = 0.0;
  for (double v : est) mean += v / 20.0;
  for (double v : est) var += (v - mean) * (v - mean) / 19.0;
  EXPECT_NEAR(mean, 0.5, 3.0 * std::sqrt(var / 20.0));
}

TEST(TauBounds, ExampleRegionAndComposition) {
  const ProxyFit f = example_fit();
  const IgnoranceRegion r = tau_bounds(f);
  EXPECT_NEAR(r.lower, -0.7, 1e-14);
  EXPECT_EQ(r.upper, 0.7);
  EXPECT_TRUE(r.contains(0.5));
  const ProxyDomain d = sigma_u2_domain(f);
  EXPECT_NEAR(tau_adjusted(f, d.lo), r.lower, 1e-10);
  EXPECT_NEAR(tau_adjusted(f, d.hi), r.upper, 1e-10);
}

TEST(TauBounds, SignFlipOfProxySwapsEndpoint) {
  const ProxyData d = simulate_proxy(3000, 9);
  const IgnoranceRegion a = tau_bounds(fit_proxy(d.y, d.t, d.z));
  const IgnoranceRegion b = tau_bounds(fit_proxy(d.y, d.t, -d.z));
  EXPECT_NEAR(a.lower, b.lower, 1e-10);
  EXPECT_NEAR(a.upper, b.upper, 1e-10);
  ProxyFit neg = example_fit();
  neg.tilde_gamma = -0.4;
  const IgnoranceRegion r = tau_bounds(neg);
  EXPECT_EQ(r.lower, 0.7);
  EXPECT_NEAR(r.upper, 2.1, 1e-14);
  ProxyFit zero = example_fit();
  zero.tilde_beta = 0.0;
  EXPECT_EQ(tau_bounds(zero).lower, tau_bounds(zero).upper);
}

TEST(TauBounds, CompositionOnRandomFits) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const double beta = 0.3 + 0.1 * static_cast<double>(seed % 7);
    const double gamma = (seed % 2 ? 1.0 : -1.0) * (0.2 + 0.15 * static_cast<double>(seed % 5));
    const ProxyData d = simulate_proxy(1000, seed, beta, gamma, 0.3, 0.6);
    const ProxyFit f = fit_proxy(d.y, d.t, d.z);
    const ProxyDomain dom = sigma_u2_domain(f);
    const IgnoranceRegion r = tau_bounds(f);
    const double at_lo = tau_adjusted(f, dom.lo);
    EXPECT_NEAR(std::min(at_lo, f.tilde_tau), r.lower, 1e-10 * std::max(1.0, std::abs(r.lower)));
    EXPECT_NEAR(std::max(at_lo, f.tilde_tau), r.upper, 1e-10 * std::max(1.0, std::abs(r.upper)));
  }
}

TEST(TauBounds, CoverTrueEffect) {
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const ProxyData d = simulate_proxy(2000, seed + 1000);
    covered += tau_bounds(fit_proxy(d.y, d.t, d.z)).contains(0.5) ? 1 : 0;
  }
  EXPECT_GE(covered, 95);
}
