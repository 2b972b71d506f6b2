// copsens: command-line front end for the sensitivity-analysis library.
#include <copsens/copsens.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef COPSENS_VERSION
#define COPSENS_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace copsens;
using nlohmann::json;

namespace {

struct Provenance {
  std::string command;
  std::uint64_t seed = 0;

  json to_json() const { return {{"command", command}, {"seed", seed}, {"version", COPSENS_VERSION}}; }
  std::vector<std::string> lines() const {
    return {"command: " + command, "seed: " + std::to_string(seed), std::string("version: ") + COPSENS_VERSION};
  }
};

Provenance g_prov;

void emit_json(json j, const std::string& path) {
  j["provenance"] = g_prov.to_json();
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json_file(path, j);
  }
}

void write_tsv(const std::string& path, const std::vector<std::string>& names, const MatrixXd& values) {
  if (!path.empty()) write_csv(path, names, values, g_prov.lines(), '\t');
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

/// "0.5", "0,0.3,0.9" or "start:stop:count".
std::vector<double> parse_r2(const std::string& spec) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InputError("invalid_argument", "cannot parse r2 value '" + s + "'");
    }
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    require(parts.size() == 3, "invalid_argument", "r2 grid must look like start:stop:count");
    const double a = number(parts[0]), b = number(parts[1]);
    const int n = static_cast<int>(number(parts[2]));
    require(n >= 2, "invalid_argument", "r2 grid needs at least 2 points");
    for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / (n - 1));
  } else {
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  }
  require(!out.empty(), "invalid_argument", "no r2 values given");
  for (double r : out) require(r >= 0.0 && r <= 1.0, "domain", "r2 values must lie in [0, 1]");
  return out;
}

/// Treatments CSV with an optional outcome column removed.
TreatmentMatrix load_treatments(const std::string& path, const std::string& drop) {
  const Table t = read_csv(path);
  const Table kept = drop.empty() ? t : t.without({drop});
  return TreatmentMatrix(kept.values, kept.names);
}

/// Outcome from a named column of the treatments CSV, or a single-column CSV.
VectorXd load_outcome(const std::string& treatments_path, const std::string& outcome) {
  const Table t = read_csv(treatments_path);
  for (const auto& n : t.names)
    if (n == outcome) return t.column(outcome);
  if (!fs::exists(outcome)) {
    throw InputError("missing_column", "outcome '" + outcome + "' is neither a column of " + treatments_path +
                                           " nor a file");
  }
  const Table y = read_csv(outcome);
  require(y.values.cols() == 1, "malformed_file", "outcome file must have exactly one column");
  return y.values.col(0);
}

VectorXd read_vector_csv(const std::string& path, Index k) {
  const Table t = read_csv(path);
  require(t.values.rows() == 1 && t.values.cols() == k, "dimension",
          path + ": contrast file must hold one row of " + std::to_string(k) + " values");
  return t.values.row(0).transpose();
}

std::vector<Contrast> parse_contrasts(const std::vector<std::string>& specs, bool all_unitwise, Index k) {
  std::vector<Contrast> out;
  if (all_unitwise)
    for (Index j = 0; j < k; ++j) out.push_back(Contrast::unit(k, j));
  for (const auto& s : specs) {
    const auto comma = s.find(',');
    if (comma != std::string::npos) {
      out.emplace_back(read_vector_csv(s.substr(0, comma), k), read_vector_csv(s.substr(comma + 1), k), s);
      continue;
    }
    require(s.size() >= 2 && s[0] == 'e', "invalid_argument", "contrast must be eJ or t1.csv,t2.csv: '" + s + "'");
    Index j = 0;
    try {
      j = std::stol(s.substr(1));
    } catch (const std::exception&) {
      throw InputError("invalid_argument", "bad unit contrast '" + s + "'");
    }
    out.push_back(Contrast::unit(k, j - 1));
  }
  require(!out.empty(), "invalid_argument", "no contrast given (use --contrast or --all-unitwise)");
  return out;
}

struct Models {
  ConditionalConfounder cc;
  OutcomeModel outcome;
};

Models load_models(const std::string& dir, const std::string& confounder_override) {
  const fs::path d(dir);
  Models m{load_confounder(confounder_override.empty() ? (d / "confounder.json").string() : confounder_override),
           outcome_from_json(read_json_file((d / "outcome.json").string()))};
  return m;
}

double naive_effect(const OutcomeModel& o, const Contrast& c) {
  return outcome_mean(o, c.t1()) - outcome_mean(o, c.t2());
}

double sigma_of(const OutcomeModel& o) {
  if (const auto* g = std::get_if<GaussianOutcome>(&o)) return g->sigma_y_given_t();
  if (const auto* e = std::get_if<EmpiricalOutcome>(&o)) return e->sigma_y_given_t();
  throw InputError("invalid_model", "bounds and rv need a gaussian or empirical outcome; use 'rr' for probit");
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string treatments, outcome, kind = "gaussian", select, out_dir = ".";
  int m = 0, degree = 2;
};

int run_fit(const FitArgs& a) {
  const VectorXd y = load_outcome(a.treatments, a.outcome);
  const TreatmentMatrix T = load_treatments(a.treatments, a.outcome);
  require(y.size() == T.n(), "dimension", "outcome and treatments have different row counts");
  Index m = a.m;
  if (!a.select.empty()) {
    require(a.select == "eigen_gap" || a.select == "holdout", "invalid_argument", "--select-dim is eigen_gap or holdout");
    m = select_dim(T, a.select == "holdout" ? DimMethod::holdout : DimMethod::eigen_gap, g_prov.seed);
  }
  require(m >= 1, "invalid_argument", "give --m or --select-dim");
  const FactorModel fm = fit_ppca(T, m);
  const ConditionalConfounder cc = conditional_confounder(fm);
  OutcomeModel outcome;
  if (a.kind == "gaussian") {
    outcome = fit_linear(T, y);
  } else if (a.kind == "probit") {
    outcome = fit_probit(T, y);
  } else if (a.kind == "empirical") {
    outcome = fit_empirical(T, y, a.degree);
  } else {
    throw InputError("invalid_argument", "--outcome-kind is gaussian, probit or empirical");
  }
  fs::create_directories(a.out_dir);
  const fs::path d(a.out_dir);
  auto stamp = [](json j) {
    j["provenance"] = g_prov.to_json();
    return j;
  };
  write_json_file((d / "factor_model.json").string(), stamp(to_json(fm)));
  write_json_file((d / "confounder.json").string(), stamp(to_json(cc)));
  write_json_file((d / "outcome.json").string(), stamp(to_json(outcome)));
  json summary = {{"m", m},
                  {"k", T.k()},
                  {"n", T.n()},
                  {"sigma2_t_given_u", fm.noise_variance},
                  {"outcome_kind", a.kind},
                  {"eigenvalues", detail::to_std(fm.eigenvalues)},
                  {"treatment_names", T.column_names()}};
  if (a.kind != "probit") summary["sigma2_y_given_t"] = std::pow(sigma_of(outcome), 2);
  emit_json(summary, "");
  return 0;
}

struct ContrastArgs {
  std::string model_dir = ".", confounder, out, tsv;
  std::vector<std::string> contrasts;
  bool all_unitwise = false;
};

int run_bounds(const ContrastArgs& a, const std::string& r2_spec) {
  const Models md = load_models(a.model_dir, a.confounder);
  const double sigma = sigma_of(md.outcome);
  const auto grid = parse_r2(r2_spec);
  const auto contrasts = parse_contrasts(a.contrasts, a.all_unitwise, md.cc.k());
  json records = json::array();
  MatrixXd rows(static_cast<Index>(contrasts.size() * grid.size()), 5);
  Index r = 0;
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    const Contrast& c = contrasts[i];
    const double naive = naive_effect(md.outcome, c);
    for (double r2 : grid) {
      const IgnoranceRegion reg = ignorance_region(naive, md.cc, sigma, r2, c);
      records.push_back(region_record(c.id(), reg));
      rows.row(r++) << static_cast<double>(i + 1), r2, naive, reg.lower, reg.upper;
    }
  }
  write_tsv(a.tsv, {"contrast", "r2", "naive", "lower", "upper"}, rows);
  emit_json({{"regions", records}}, a.out);
  return 0;
}

int run_rv(const ContrastArgs& a, const std::string& treatments, const std::string& drop) {
  const Models md = load_models(a.model_dir, a.confounder);
  const auto contrasts = parse_contrasts(a.contrasts, a.all_unitwise, md.cc.k());
  json records = json::array();
  MatrixXd rows(static_cast<Index>(contrasts.size()), 3);
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    const Contrast& c = contrasts[i];
    if (const auto* bin = std::get_if<BinaryOutcome>(&md.outcome)) {
      require(!treatments.empty(), "invalid_argument", "a probit outcome needs --treatments for the risk ratio");
      const TreatmentMatrix T = load_treatments(treatments, drop);
      const BinaryRv rv = binary_rv(c, md.cc, *bin, T);
      const RrRegion reg = rr_ignorance_region(c, md.cc, *bin, T, rv.rv);
      json rec = {{"contrast_id", c.id()}, {"naive", reg.naive}, {"lower", reg.lower}, {"upper", reg.upper},
                  {"r2_cap", rv.rv},       {"rv", rv.rv},        {"robust", rv.robust}, {"bounded", true},
                  {"scale", "risk_ratio"}};
      records.push_back(rec);
      rows.row(static_cast<Index>(i)) << static_cast<double>(i + 1), reg.naive, rv.rv;
      continue;
    }
    const double sigma = sigma_of(md.outcome);
    const double naive = naive_effect(md.outcome, c);
    const RobustnessValue rv = robustness_value(naive, md.cc, sigma, c);
    const IgnoranceRegion reg = ignorance_region(naive, md.cc, sigma, rv.bounded ? rv.rv : 0.0, c);
    records.push_back(region_record(c.id(), reg, rv));
    rows.row(static_cast<Index>(i)) << static_cast<double>(i + 1), naive, rv.rv;
  }
  write_tsv(a.tsv, {"contrast", "naive", "rv"}, rows);
  emit_json({{"robustness", records}}, a.out);
  return 0;
}

int run_calibrate(const std::string& treatments, const std::string& outcome, const std::string& kind,
                  const std::string& out, const std::string& tsv) {
  const VectorXd y = load_outcome(treatments, outcome);
  const TreatmentMatrix T = load_treatments(treatments, outcome);
  require(kind == "gaussian" || kind == "probit", "invalid_argument", "--outcome-kind is gaussian or probit");
  std::optional<BinaryOutcome> bin;
  if (kind == "probit") bin = fit_probit(T, y);
  json table = json::array();
  MatrixXd rows(T.k(), 2);
  for (Index j = 0; j < T.k(); ++j) {
    const double r2 = bin ? implicit_r2(T, y, *bin, {j}) : partial_r2_treatment(T, y, {j});
    table.push_back({{"column", T.column_names()[static_cast<std::size_t>(j)]}, {"partial_r2", r2}});
    rows.row(j) << static_cast<double>(j + 1), r2;
  }
  write_tsv(tsv, {"column", "partial_r2"}, rows);
  emit_json({{"benchmarks", table}, {"scale", bin ? "implicit" : "partial"}}, out);
  return 0;
}

int run_mcc(const ContrastArgs& a, const std::string& norm_name, double cap) {
  const Models md = load_models(a.model_dir, a.confounder);
  const auto* g = std::get_if<GaussianOutcome>(&md.outcome);
  require(g != nullptr, "invalid_model", "mcc needs a gaussian outcome model");
  Norm norm = Norm::l1;
  if (norm_name == "l2") norm = Norm::l2;
  else if (norm_name == "linf") norm = Norm::linf;
  else require(norm_name == "l1", "invalid_argument", "--norm is l1, l2 or linf");
  const ContrastBank bank =
      a.contrasts.empty() ? build_bank_unitwise(md.cc, *g, all_treatments(md.cc.k()))
                          : build_bank(md.cc, *g, parse_contrasts(a.contrasts, a.all_unitwise, md.cc.k()));
  const MccResult r = mcc_minimize(bank, md.cc.cov, norm, cap);
  const auto report = mcc_report(bank, r.gamma_star);
  json rows_json = json::array();
  MatrixXd rows(static_cast<Index>(report.size()), 4);
  for (std::size_t i = 0; i < report.size(); ++i) {
    const MccRow& row = report[i];
    rows_json.push_back({{"contrast_id", row.contrast_id},
                         {"naive", row.naive},
                         {"adjusted", row.adjusted},
                         {"shrinkage_ratio", finite_or_null(row.shrinkage_ratio)}});
    rows.row(static_cast<Index>(i)) << static_cast<double>(i + 1), row.naive, row.adjusted, row.shrinkage_ratio;
  }
  write_tsv(a.tsv, {"contrast", "naive", "adjusted", "shrinkage_ratio"}, rows);
  emit_json({{"norm", norm_name},
             {"r2_cap", cap},
             {"gamma_star", detail::to_std(r.gamma_star)},
             {"achieved_norm", r.achieved_norm},
             {"naive_norm", norm_of(bank.naive, norm)},
             {"achieved_r2", r.achieved_r2},
             {"lambda", finite_or_null(r.lambda)},
             {"iterations", r.iterations},
             {"rows", rows_json}},
            a.out);
  return 0;
}

int run_rr(const ContrastArgs& a, const std::string& treatments, const std::string& drop, double cap, int points) {
  const Models md = load_models(a.model_dir, a.confounder);
  const auto* bin = std::get_if<BinaryOutcome>(&md.outcome);
  require(bin != nullptr, "invalid_model", "rr needs a probit outcome model");
  require(points >= 3, "invalid_argument", "--grid-points must be at least 3");
  const TreatmentMatrix T = load_treatments(treatments, drop);
  const auto contrasts = parse_contrasts(a.contrasts, a.all_unitwise, md.cc.k());
  RrSearchOptions opt;
  opt.seed = g_prov.seed;
  json regions = json::array();
  MatrixXd curve_rows(static_cast<Index>(contrasts.size()) * points, 3);
  Index r = 0;
  for (std::size_t i = 0; i < contrasts.size(); ++i) {
    const Contrast& c = contrasts[i];
    const RrRegion reg = rr_ignorance_region(c, md.cc, *bin, T, cap, opt);
    json rec = {{"contrast_id", c.id()}, {"naive", reg.naive},         {"lower", reg.lower},
                {"upper", reg.upper},    {"r2_cap", cap},              {"bounded", reg.bounded},
                {"converged", reg.converged}, {"gamma_lower", detail::to_std(reg.gamma_lower)},
                {"gamma_upper", detail::to_std(reg.gamma_upper)}};
    regions.push_back(rec);
    const VectorXd d = worst_case_direction(md.cc, c).defined ? worst_case_direction(md.cc, c).d
                                                              : VectorXd::Unit(md.cc.m(), 0);
    for (const RrPoint& p : rr_curve(c, md.cc, *bin, T, d, signed_r2_grid(static_cast<std::size_t>(points))))
      curve_rows.row(r++) << static_cast<double>(i + 1), p.signed_r2, p.rr;
  }
  write_tsv(a.tsv, {"contrast", "signed_r2", "rr"}, curve_rows);
  emit_json({{"regions", regions}}, a.out);
  return 0;
}

int run_proxy(const std::string& data, const std::vector<std::string>& columns, const std::string& out) {
  const Table t = read_csv(data);
  require(columns.size() == 3, "invalid_argument", "--columns takes y,t,z");
  const ProxyFit f = fit_proxy(t.column(columns[0]), t.column(columns[1]), t.column(columns[2]));
  const ProxyDomain d = sigma_u2_domain(f);
  const IgnoranceRegion reg = tau_bounds(f);
  emit_json({{"fit", to_json(f)},
             {"domain", {{"lo", d.lo}, {"hi", d.hi}, {"no_information", d.no_information}}},
             {"region", region_record("tau", reg)}},
            out);
  return 0;
}

int run_simulate(const std::string& preset, long n_arg, const std::string& out, std::string truth_path) {
  SimData d;
  const std::uint64_t seed = g_prov.seed;
  if (preset == "linear") {
    d = gen_linear_gaussian(four_treatment_truth(seed), n_arg > 0 ? n_arg : 2000);
  } else if (preset == "nonlinear" || preset == "nonlinear-binary") {
    d = gen_nonlinear(n_arg > 0 ? n_arg : 5000, preset == "nonlinear-binary", seed);
  } else if (preset == "gwas") {
    GwasOptions opt;
    if (n_arg > 0) opt.n = n_arg;
    d = gen_gwas(opt, seed);
  } else {
    throw InputError("invalid_argument", "--preset is linear, nonlinear, nonlinear-binary or gwas");
  }
  std::vector<std::string> names = d.T.column_names();
  names.push_back("y");
  MatrixXd values(d.T.n(), d.T.k() + 1);
  values << d.T.data(), d.y;
  write_csv(out, names, values, g_prov.lines());
  if (truth_path.empty()) truth_path = out + ".truth.json";
  json truth = to_json(d.truth);
  truth["provenance"] = g_prov.to_json();
  write_json_file(truth_path, truth);
  emit_json({{"data", out}, {"truth", truth_path}, {"n", d.T.n()}, {"k", d.T.k()}}, "");
  return 0;
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-copula sensitivity analysis for multiple treatments"};
  app.set_version_flag("--version", COPSENS_VERSION);
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  auto add_contrast_opts = [](CLI::App* sub, ContrastArgs& a) {
    sub->add_option("--model-dir", a.model_dir, "directory written by 'fit'")->capture_default_str();
    sub->add_option("--confounder", a.confounder, "external confounder JSON overriding the fitted one");
    sub->add_option("--contrast", a.contrasts, "eJ or t1.csv,t2.csv (repeatable)");
    sub->add_flag("--all-unitwise", a.all_unitwise, "every e_j versus 0 contrast");
    sub->add_option("--out", a.out, "JSON output file (stdout by default)");
    sub->add_option("--tsv", a.tsv, "plot-ready TSV output");
  };

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit the treatment factor model and the outcome model");
  fit_cmd->add_option("--treatments", fit.treatments, "treatments CSV")->required();
  fit_cmd->add_option("--outcome", fit.outcome, "outcome column name or single-column CSV")->required();
  fit_cmd->add_option("--m", fit.m, "number of latent confounders");
  fit_cmd->add_option("--select-dim", fit.select, "eigen_gap or holdout");
  fit_cmd->add_option("--outcome-kind", fit.kind, "gaussian, probit or empirical")->capture_default_str();
  fit_cmd->add_option("--degree", fit.degree, "polynomial degree for the empirical outcome")->capture_default_str();
  fit_cmd->add_option("--out-dir", fit.out_dir, "where to write model files")->capture_default_str();

  ContrastArgs bounds;
  std::string r2_spec = "1";
  auto* bounds_cmd = app.add_subcommand("bounds", "worst-case ignorance regions");
  add_contrast_opts(bounds_cmd, bounds);
  bounds_cmd->add_option("--r2", r2_spec, "value, list a,b,c or grid start:stop:count")->capture_default_str();

  ContrastArgs rv;
  std::string rv_treatments, drop = "y";
  auto* rv_cmd = app.add_subcommand("rv", "robustness values");
  add_contrast_opts(rv_cmd, rv);
  rv_cmd->add_option("--treatments", rv_treatments, "observed treatments CSV (probit outcomes)");
  rv_cmd->add_option("--drop", drop, "column of the treatments CSV to ignore")->capture_default_str();

  std::string cal_treatments, cal_outcome, cal_kind = "gaussian", cal_out, cal_tsv;
  auto* cal_cmd = app.add_subcommand("calibrate", "partial R^2 benchmarks of observed treatments");
  cal_cmd->add_option("--treatments", cal_treatments, "treatments CSV")->required();
  cal_cmd->add_option("--outcome", cal_outcome, "outcome column name or single-column CSV")->required();
  cal_cmd->add_option("--outcome-kind", cal_kind, "gaussian or probit")->capture_default_str();
  cal_cmd->add_option("--out", cal_out, "JSON output file");
  cal_cmd->add_option("--tsv", cal_tsv, "benchmark table TSV");

  ContrastArgs mcc;
  std::string norm = "l1";
  double cap = 1.0;
  auto* mcc_cmd = app.add_subcommand("mcc", "multiple contrast criteria");
  add_contrast_opts(mcc_cmd, mcc);
  mcc_cmd->add_option("--norm", norm, "l1, l2 or linf")->capture_default_str();
  mcc_cmd->add_option("--r2-cap", cap, "upper limit on R^2_{Y~U|T}")->capture_default_str();

  ContrastArgs rr;
  std::string rr_treatments;
  double rr_cap = 1.0;
  int points = 101;
  auto* rr_cmd = app.add_subcommand("rr", "risk-ratio regions and curves for binary outcomes");
  add_contrast_opts(rr_cmd, rr);
  rr_cmd->add_option("--treatments", rr_treatments, "observed treatments CSV")->required();
  rr_cmd->add_option("--drop", drop, "column of the treatments CSV to ignore")->capture_default_str();
  rr_cmd->add_option("--r2-cap", rr_cap, "upper limit on R^2")->capture_default_str();
  rr_cmd->add_option("--grid-points", points, "points on the signed-R^2 curve")->capture_default_str();

  std::string proxy_data, proxy_out;
  std::vector<std::string> proxy_columns{"y", "t", "z"};
  auto* proxy_cmd = app.add_subcommand("proxy", "single-treatment proxy-variable analysis");
  proxy_cmd->add_option("--data", proxy_data, "CSV with outcome, treatment and proxy columns")->required();
  proxy_cmd->add_option("--columns", proxy_columns, "y,t,z column names")->delimiter(',')->expected(3);
  proxy_cmd->add_option("--out", proxy_out, "JSON output file");

  std::string preset, sim_out, sim_truth;
  long sim_n = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "write a simulated dataset and its truth");
  sim_cmd->add_option("--preset", preset, "linear, nonlinear, nonlinear-binary or gwas")->required();
  sim_cmd->add_option("--n", sim_n, "rows (preset default when omitted)");
  sim_cmd->add_option("--out", sim_out, "CSV output")->required();
  sim_cmd->add_option("--truth", sim_truth, "truth JSON (default: <out>.truth.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", e.what(), 2);
  }

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);
  g_prov = {command, seed};

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*bounds_cmd) return run_bounds(bounds, r2_spec);
    if (*rv_cmd) return run_rv(rv, rv_treatments, drop);
    if (*cal_cmd) return run_calibrate(cal_treatments, cal_outcome, cal_kind, cal_out, cal_tsv);
    if (*mcc_cmd) return run_mcc(mcc, norm, cap);
    if (*rr_cmd) return run_rr(rr, rr_treatments, drop, rr_cap, points);
    if (*proxy_cmd) return run_proxy(proxy_data, proxy_columns, proxy_out);
    if (*sim_cmd) return run_simulate(preset, sim_n, sim_out, sim_truth);
  } catch (const InputError& e) {
    return report_error(e.kind(), e.what(), 2);
  } catch (const NumericalError& e) {
    return report_error(e.kind(), e.what(), 3);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), 2);
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), 2);
  }
  return 0;
}
