// Command-line front end. Talks to the library exclusively through the C API.

#include "htmle/htmle.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = HTMLE_ERR_CONFIG;

struct Handles {
  htmle_dataset* data = nullptr;
  htmle_policy* policy = nullptr;
  htmle_result* result = nullptr;
  htmle_study* study = nullptr;
  ~Handles() {
    htmle_result_free(result);
    htmle_study_free(study);
    htmle_policy_free(policy);
    htmle_dataset_free(data);
  }
};

int report_failure(htmle_status status) {
  std::cerr << "error: " << htmle_last_error() << '\n';
  return static_cast<int>(status);
}

int config_error(const std::string& message) {
  std::cerr << "error: config: " << message << '\n';
  return kExitConfig;
}

std::string take_string(char* text) {
  std::string out = text ? text : "";
  htmle_string_free(text);
  return out;
}

unsigned estimator_mask(const std::string& name) {
  if (name == "htmle") return HTMLE_EST_HTMLE;
  if (name == "tmle") return HTMLE_EST_TMLE;
  if (name == "aipw") return HTMLE_EST_AIPW;
  return HTMLE_EST_ALL;
}

unsigned basis_mask(const std::vector<std::string>& names) {
  unsigned mask = 0;
  for (const auto& b : names) {
    if (b == "intercept") mask |= HTMLE_BASIS_INTERCEPT;
    if (b == "main") mask |= HTMLE_BASIS_MAIN;
    if (b == "squares") mask |= HTMLE_BASIS_SQUARES;
    if (b == "quadratic") mask |= HTMLE_BASIS_QUADRATIC;
  }
  return mask;
}

int ratio_code(const std::string& name) {
  if (name == "analytic") return HTMLE_RATIO_ANALYTIC;
  if (name == "classification") return HTMLE_RATIO_CLASSIFICATION;
  return HTMLE_RATIO_AUTO;
}

// "off" or a positive number; returns NaN when unparseable.
double parse_cap(const std::string& text) {
  if (text == "off" || text == "none") return 0.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !(v > 0.0)) return std::nan("");
    return v;
  } catch (const std::exception&) {
    return std::nan("");
  }
}

template <class T>
std::string join(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
  return os.str();
}

struct LearnerFlags {
  std::vector<std::string> basis{"main", "squares"};
  std::vector<std::string> ratio_basis{"main", "squares", "quadratic"};
  int selector_folds = 5;
  std::string ratio = "auto";
  std::string odds_cap;
  int folds = 10;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string estimator;
};

void add_learner_flags(CLI::App* cmd, LearnerFlags& f) {
  cmd->add_option("--basis", f.basis, "outcome and propensity learner bases (intercept, main, squares, quadratic)")
      ->delimiter(',')
      ->check(CLI::IsMember({"intercept", "main", "squares", "quadratic"}))
      ->capture_default_str();
  cmd->add_option("--ratio-basis", f.ratio_basis, "density-ratio classifier bases")
      ->delimiter(',')
      ->check(CLI::IsMember({"intercept", "main", "squares", "quadratic"}))
      ->capture_default_str();
  cmd->add_option("--selector-folds", f.selector_folds, "folds for the cross-validated learner selector")
      ->check(CLI::Range(2, 100))
      ->capture_default_str();
  cmd->add_option("--ratio", f.ratio, "density ratio method")
      ->check(CLI::IsMember({"auto", "analytic", "classification"}))
      ->capture_default_str();
  cmd->add_option("--odds-cap", f.odds_cap, "cap on estimated density ratios, or 'off'")->capture_default_str();
  cmd->add_option("--folds", f.folds, "cross-fitting folds (1 disables cross-fitting)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "seed for every random stream")->capture_default_str();
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--estimator", f.estimator, "estimator")
      ->check(CLI::IsMember({"htmle", "tmle", "aipw", "all"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step TMLE for non-negative two-part outcomes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(htmle_version()));

  // fit
  auto* fit = app.add_subcommand("fit", "estimate a policy effect on a CSV dataset");
  std::string data_path, outcome = "y", treatment = "t", policy_text, variance = "bootstrap", output = "table";
  std::string dump_nuisance;
  std::vector<std::string> covariates;
  int bootstrap_b = 1000;
  double pad = 0.001;
  LearnerFlags fit_flags;
  fit_flags.estimator = "htmle";
  fit_flags.odds_cap = "1000";
  fit->add_option("--data", data_path, "input CSV with a header row")->required();
  fit->add_option("--outcome", outcome, "outcome column")->capture_default_str();
  fit->add_option("--treatment", treatment, "treatment column")->capture_default_str();
  fit->add_option("--covariates", covariates, "covariate columns")->delimiter(',')->required();
  fit->add_option("--policy", policy_text, "intervention, e.g. static:1, shift:+2,cap=col:u, ipsi-down:0.5")
      ->required();
  auto* variance_opt = fit->add_option("--variance", variance, "variance method")
                           ->check(CLI::IsMember({"eif", "bootstrap"}))
                           ->capture_default_str();
  auto* b_opt = fit->add_option("--bootstrap-b", bootstrap_b, "bootstrap replicates")
                    ->check(CLI::Range(2, 1000000))
                    ->capture_default_str();
  fit->add_option("--pad", pad, "outcome scaling pad fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  fit->add_option("--output", output, "output format")
      ->check(CLI::IsMember({"table", "json", "csv"}))
      ->capture_default_str();
  fit->add_option("--dump-nuisance", dump_nuisance, "write the cross-fitted nuisance table as CSV");
  add_learner_flags(fit, fit_flags);
  (void)variance_opt;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run the Monte Carlo study");
  std::vector<std::size_t> sizes{1000};
  std::vector<double> beta_ps{0.0}, alpha_deltas{0.0};
  int replicates = 100;
  std::size_t oracle_draws = 10000000;
  std::string sim_policy = "static:1", sim_output = "table", sim_csv;
  LearnerFlags sim_flags;
  sim_flags.estimator = "all";
  sim_flags.odds_cap = "off";
  simulate->add_option("--n", sizes, "sample sizes")->delimiter(',')->capture_default_str();
  simulate->add_option("--beta-p", beta_ps, "positivity knob values")->delimiter(',')->capture_default_str();
  simulate->add_option("--alpha-delta", alpha_deltas, "zero-frequency knob values")
      ->delimiter(',')
      ->capture_default_str();
  simulate->add_option("--replicates", replicates, "replicates per cell")->check(CLI::Range(2, 1000000))->capture_default_str();
  simulate->add_option("--policy", sim_policy, "intervention")->capture_default_str();
  simulate->add_option("--oracle-draws", oracle_draws, "Monte Carlo draws for the true value")->capture_default_str();
  simulate->add_option("--output", sim_output, "output format")
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();
  simulate->add_option("--csv", sim_csv, "also write the metrics CSV to this path");
  add_learner_flags(simulate, sim_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  Handles h;
  if (fit->parsed()) {
    if (variance == "eif" && b_opt->count() > 0) return config_error("--bootstrap-b requires --variance bootstrap");
    const double cap = parse_cap(fit_flags.odds_cap);
    if (std::isnan(cap)) return config_error("--odds-cap must be a positive number or 'off'");

    htmle_fit_options opts;
    htmle_fit_options_init(&opts);
    opts.estimators = estimator_mask(fit_flags.estimator);
    opts.folds = fit_flags.folds;
    opts.variance = variance == "eif" ? HTMLE_VAR_EIF : HTMLE_VAR_BOOTSTRAP;
    opts.bootstrap_b = bootstrap_b;
    opts.seed = fit_flags.seed;
    opts.bases = basis_mask(fit_flags.basis);
    opts.ratio_bases = basis_mask(fit_flags.ratio_basis);
    opts.selector_folds = fit_flags.selector_folds;
    opts.ratio_method = ratio_code(fit_flags.ratio);
    opts.odds_cap = cap;
    opts.pad = pad;
    opts.jobs = fit_flags.jobs;

    std::cerr << "config: subcommand=fit data=" << data_path << " outcome=" << outcome << " treatment=" << treatment
              << " covariates=" << join(covariates) << " policy=" << policy_text
              << " estimator=" << fit_flags.estimator << " folds=" << opts.folds << " variance=" << variance
              << " bootstrap_b=" << (variance == "bootstrap" ? std::to_string(bootstrap_b) : std::string("n/a"))
              << " seed=" << opts.seed << " basis=" << join(fit_flags.basis) << " ratio_basis=" << join(fit_flags.ratio_basis)
              << " selector_folds=" << opts.selector_folds << " ratio=" << fit_flags.ratio
              << " odds_cap=" << fit_flags.odds_cap << " pad=" << pad << " output=" << output
              << " jobs=" << opts.jobs << '\n';

    if (auto s = htmle_policy_parse(policy_text.c_str(), opts.seed, &h.policy); s != HTMLE_OK) return report_failure(s);
    const std::string aux = htmle_policy_required_column(h.policy);
    const std::string cov_list = join(covariates);
    if (auto s = htmle_dataset_read_csv(data_path.c_str(), outcome.c_str(), treatment.c_str(), cov_list.c_str(),
                                        aux.c_str(), &h.data);
        s != HTMLE_OK) {
      return report_failure(s);
    }
    if (auto s = htmle_fit(h.data, h.policy, &opts, &h.result); s != HTMLE_OK) return report_failure(s);
    const int format = output == "json" ? HTMLE_FORMAT_JSON : output == "csv" ? HTMLE_FORMAT_CSV : HTMLE_FORMAT_TABLE;
    char* text = nullptr;
    if (auto s = htmle_result_format(h.result, format, &text); s != HTMLE_OK) return report_failure(s);
    std::cout << take_string(text);
    if (!dump_nuisance.empty()) {
      if (auto s = htmle_result_nuisance_csv(h.result, &text); s != HTMLE_OK) return report_failure(s);
      std::ofstream out(dump_nuisance);
      if (!out) return config_error("cannot write " + dump_nuisance);
      out << take_string(text);
    }
    return 0;
  }

  // simulate
  const double cap = parse_cap(sim_flags.odds_cap);
  if (std::isnan(cap)) return config_error("--odds-cap must be a positive number or 'off'");
  htmle_simulate_options opts;
  htmle_simulate_options_init(&opts);
  opts.sizes = sizes.data();
  opts.sizes_count = sizes.size();
  opts.beta_ps = beta_ps.data();
  opts.beta_ps_count = beta_ps.size();
  opts.alpha_deltas = alpha_deltas.data();
  opts.alpha_deltas_count = alpha_deltas.size();
  opts.estimators = estimator_mask(sim_flags.estimator);
  opts.replicates = replicates;
  opts.folds = sim_flags.folds;
  opts.seed = sim_flags.seed;
  opts.oracle_draws = oracle_draws;
  opts.jobs = sim_flags.jobs;
  opts.bases = basis_mask(sim_flags.basis);
  opts.ratio_bases = basis_mask(sim_flags.ratio_basis);
  opts.selector_folds = sim_flags.selector_folds;
  opts.ratio_method = ratio_code(sim_flags.ratio);
  opts.odds_cap = cap;

  std::cerr << "config: subcommand=simulate n=" << join(sizes) << " beta_p=" << join(beta_ps)
            << " alpha_delta=" << join(alpha_deltas) << " replicates=" << replicates << " policy=" << sim_policy
            << " estimator=" << sim_flags.estimator << " folds=" << opts.folds << " variance=eif seed=" << opts.seed
            << " oracle_draws=" << oracle_draws << " basis=" << join(sim_flags.basis) << " ratio_basis=" << join(sim_flags.ratio_basis)
            << " selector_folds=" << opts.selector_folds << " ratio=" << sim_flags.ratio
            << " odds_cap=" << sim_flags.odds_cap << " output=" << sim_output << " jobs=" << opts.jobs << '\n';

  if (auto s = htmle_policy_parse(sim_policy.c_str(), opts.seed, &h.policy); s != HTMLE_OK) return report_failure(s);
  if (auto s = htmle_simulate(&opts, h.policy, &h.study); s != HTMLE_OK) return report_failure(s);
  char* text = nullptr;
  const int format = sim_output == "csv" ? HTMLE_FORMAT_CSV : HTMLE_FORMAT_TABLE;
  if (auto s = htmle_study_format(h.study, format, &text); s != HTMLE_OK) return report_failure(s);
  std::cout << take_string(text);
  if (!sim_csv.empty()) {
    if (auto s = htmle_study_format(h.study, HTMLE_FORMAT_CSV, &text); s != HTMLE_OK) return report_failure(s);
    std::ofstream out(sim_csv);
    if (!out) return config_error("cannot write " + sim_csv);
    out << take_string(text);
  }
  if (const auto failed = htmle_study_failures(h.study); failed > 0) {
    std::cerr << "warning: " << failed << " estimator runs failed and were excluded\n";
  }
  return 0;
}
