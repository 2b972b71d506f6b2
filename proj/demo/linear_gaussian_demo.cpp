// Four treatments, one latent confounder: fit, then report ignorance regions
// and robustness values for each e_j versus 0 contrast.
#include <copsens/copsens.hpp>

#include <cstdio>
#include <cstdlib>

using namespace copsens;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const SimData d = gen_linear_gaussian(four_treatment_truth(seed), 5000);

  const FactorModel fm = fit_ppca(d.T, select_dim(d.T, DimMethod::eigen_gap));
  const ConditionalConfounder cc = conditional_confounder(fm);
  const GaussianOutcome o = fit_linear(d.T, d.y);
  std::printf("m = %ld, sigma2_t|u = %.3f, sigma_y|t = %.3f\n\n", static_cast<long>(fm.m()), fm.noise_variance,
              o.sigma_y_given_t());

  std::printf("%-4s %8s %8s %8s  %-20s %-20s %6s\n", "", "true", "naive", "RV", "R2=0.25", "R2=1", "robust");
  for (Index j = 0; j < d.T.k(); ++j) {
    const Contrast c = Contrast::unit(d.T.k(), j);
    const double naive = o.tau_naive(j);
    const IgnoranceRegion quarter = ignorance_region(naive, cc, o.sigma_y_given_t(), 0.25, c);
    const IgnoranceRegion full = ignorance_region(naive, cc, o.sigma_y_given_t(), 1.0, c);
    const RobustnessValue rv = robustness_value(naive, cc, o.sigma_y_given_t(), c);
    std::printf("%-4s %8.3f %8.3f %8.4f  [%7.3f, %7.3f]   [%7.3f, %7.3f]   %6s\n", c.id().c_str(),
                d.truth.tau_true(j), naive, rv.rv, quarter.lower, quarter.upper, full.lower, full.upper,
                rv.robust ? "yes" : "no");
  }

  // The true confounding strength, for reference.
  const SensitivitySpec truth_spec =
      SensitivitySpec::from_gamma(standardized_gamma(d.truth.gamma_true, o.sigma_y_given_t()), cc.cov);
  std::printf("\nimplied R^2_{Y~U|T} of the simulating gamma: %.3f\n", truth_spec.r2);
  std::printf("adjusted at that gamma:");
  for (Index j = 0; j < d.T.k(); ++j) {
    const Contrast c = Contrast::unit(d.T.k(), j);
    std::printf(" %.3f", o.tau_naive(j) - bias_closed_form(truth_spec, cc, o.sigma_y_given_t(), c));
  }
  std::printf("\n");
  return 0;
}
