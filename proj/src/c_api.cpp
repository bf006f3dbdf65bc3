#include "htmle/htmle.h"

#include "htmle/data.hpp"
#include "htmle/error.hpp"
#include "htmle/estimators.hpp"
#include "htmle/nuisance.hpp"
#include "htmle/policy.hpp"
#include "htmle/report.hpp"
#include "htmle/sim.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

struct htmle_dataset {
  htmle::TwoPartDataset data;
};

struct htmle_policy {
  htmle::Policy policy;
  std::string required_column;
  std::string description;
};

struct htmle_result {
  std::vector<htmle::EstimateReport> reports;
  htmle::NuisanceTable table;
};

struct htmle_study {
  htmle::sim::StudyResult result;
};

namespace {

thread_local std::string last_error;

htmle_status fail(htmle_status status, const char* category, const std::string& message) {
  last_error = std::string(category) + ": " + message;
  return status;
}

template <class Fn>
htmle_status guarded(Fn&& fn) {
  try {
    fn();
    return HTMLE_OK;
  } catch (const htmle::ConfigError& e) {
    return fail(HTMLE_ERR_CONFIG, "config", e.what());
  } catch (const htmle::DataError& e) {
    return fail(HTMLE_ERR_DATA, "data", e.what());
  } catch (const htmle::NumericalError& e) {
    return fail(HTMLE_ERR_NUMERIC, "numerical", e.what());
  } catch (const std::bad_alloc&) {
    return fail(HTMLE_ERR_INTERNAL, "internal", "out of memory");
  } catch (const std::exception& e) {
    return fail(HTMLE_ERR_INTERNAL, "internal", e.what());
  } catch (...) {
    return fail(HTMLE_ERR_INTERNAL, "internal", "unknown failure");
  }
}

std::vector<std::string> split_list(const char* text) {
  std::vector<std::string> out;
  if (text == nullptr) return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<htmle::Method> methods_from_mask(unsigned mask) {
  std::vector<htmle::Method> out;
  if (mask & HTMLE_EST_HTMLE) out.push_back(htmle::Method::Htmle);
  if (mask & HTMLE_EST_TMLE) out.push_back(htmle::Method::Tmle);
  if (mask & HTMLE_EST_AIPW) out.push_back(htmle::Method::Aipw);
  if (out.empty()) throw htmle::ConfigError("no estimator selected");
  return out;
}

std::vector<htmle::GlmSpec> library_from_mask(unsigned mask) {
  using htmle::Basis;
  std::vector<htmle::GlmSpec> out;
  if (mask & HTMLE_BASIS_INTERCEPT) out.push_back({htmle::Family::BinomialLogit, Basis::InterceptOnly});
  if (mask & HTMLE_BASIS_MAIN) out.push_back({htmle::Family::BinomialLogit, Basis::MainEffects});
  if (mask & HTMLE_BASIS_SQUARES) out.push_back({htmle::Family::BinomialLogit, Basis::MainSquares});
  if (mask & HTMLE_BASIS_QUADRATIC) out.push_back({htmle::Family::BinomialLogit, Basis::Quadratic});
  if (out.empty()) throw htmle::ConfigError("no learner basis selected");
  return out;
}

htmle::NuisanceOptions nuisance_options(unsigned bases, unsigned ratio_bases, int selector_folds, int ratio_method,
                                        double odds_cap) {
  htmle::NuisanceOptions opts;
  const auto lib = library_from_mask(bases);
  opts.learners.hurdle = lib;
  opts.learners.intensity = lib;
  opts.learners.outcome = lib;
  opts.learners.ratio = library_from_mask(ratio_bases);
  opts.learners.propensity = lib;
  if (selector_folds < 2) throw htmle::ConfigError("selector folds must be at least 2");
  opts.learners.selector_folds = selector_folds;
  switch (ratio_method) {
    case HTMLE_RATIO_AUTO: opts.ratio = htmle::RatioMethod::Auto; break;
    case HTMLE_RATIO_ANALYTIC: opts.ratio = htmle::RatioMethod::Analytic; break;
    case HTMLE_RATIO_CLASSIFICATION: opts.ratio = htmle::RatioMethod::Classification; break;
    default: throw htmle::ConfigError("unknown ratio method");
  }
  if (odds_cap > 0.0) {
    opts.odds_cap = odds_cap;
  } else {
    opts.odds_cap.reset();
  }
  return opts;
}

int method_bit(htmle::Method m) {
  switch (m) {
    case htmle::Method::Htmle: return HTMLE_EST_HTMLE;
    case htmle::Method::Tmle: return HTMLE_EST_TMLE;
    case htmle::Method::Aipw: return HTMLE_EST_AIPW;
  }
  return 0;
}

template <class T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw htmle::ConfigError(std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* htmle_version(void) { return "1.0.0"; }

const char* htmle_last_error(void) { return last_error.c_str(); }

void htmle_string_free(char* text) { std::free(text); }

htmle_status htmle_dataset_read_csv(const char* path, const char* outcome, const char* treatment,
                                    const char* covariates, const char* aux, htmle_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(outcome, "outcome column");
    require(treatment, "treatment column");
    require(out, "output handle");
    htmle::CsvColumns cols{outcome, treatment, split_list(covariates), split_list(aux)};
    *out = new htmle_dataset{htmle::read_csv(path, cols)};
  });
}

htmle_status htmle_dataset_from_arrays(size_t n, size_t p, const double* x, const double* t, const double* y,
                                       htmle_dataset** out) {
  return guarded([&] {
    require(t, "t");
    require(y, "y");
    require(out, "output handle");
    if (p > 0) require(x, "x");
    const auto rows = static_cast<Eigen::Index>(n), cols = static_cast<Eigen::Index>(p);
    htmle::Matrix xm(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) xm(i, j) = x[i * cols + j];
    }
    *out = new htmle_dataset{htmle::TwoPartDataset(std::move(xm), Eigen::Map<const htmle::Vector>(t, rows),
                                                   Eigen::Map<const htmle::Vector>(y, rows))};
  });
}

htmle_status htmle_dataset_generate(size_t n, double beta_p, double alpha_delta, uint64_t seed, htmle_dataset** out) {
  return guarded([&] {
    require(out, "output handle");
    *out = new htmle_dataset{htmle::sim::generate({n, beta_p, alpha_delta, seed})};
  });
}

htmle_status htmle_dataset_write_csv(const htmle_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "dataset");
    require(path, "path");
    htmle::write_csv(path, data->data);
  });
}

size_t htmle_dataset_rows(const htmle_dataset* data) { return data ? data->data.rows() : 0; }

size_t htmle_dataset_covariates(const htmle_dataset* data) { return data ? data->data.covariates() : 0; }

double htmle_dataset_outcome_mean(const htmle_dataset* data) { return data ? data->data.y().mean() : 0.0; }

void htmle_dataset_free(htmle_dataset* data) { delete data; }

htmle_status htmle_policy_parse(const char* text, uint64_t seed, htmle_policy** out) {
  return guarded([&] {
    require(text, "policy text");
    require(out, "output handle");
    auto policy = htmle::parse_policy(text, seed);
    auto column = policy.required_column();
    auto description = policy.describe();
    *out = new htmle_policy{std::move(policy), std::move(column), std::move(description)};
  });
}

const char* htmle_policy_required_column(const htmle_policy* policy) {
  return policy ? policy->required_column.c_str() : "";
}

const char* htmle_policy_describe(const htmle_policy* policy) { return policy ? policy->description.c_str() : ""; }

void htmle_policy_free(htmle_policy* policy) { delete policy; }

void htmle_fit_options_init(htmle_fit_options* o) {
  if (o == nullptr) return;
  o->estimators = HTMLE_EST_HTMLE;
  o->folds = 10;
  o->variance = HTMLE_VAR_BOOTSTRAP;
  o->bootstrap_b = 1000;
  o->seed = 1;
  o->bases = HTMLE_BASIS_MAIN | HTMLE_BASIS_SQUARES;
  o->ratio_bases = HTMLE_BASIS_MAIN | HTMLE_BASIS_SQUARES | HTMLE_BASIS_QUADRATIC;
  o->selector_folds = 5;
  o->ratio_method = HTMLE_RATIO_AUTO;
  o->odds_cap = 1e3;
  o->pad = htmle::OutcomeScaler::kDefaultPad;
  o->jobs = 1;
}

htmle_status htmle_fit(const htmle_dataset* data, const htmle_policy* policy, const htmle_fit_options* o,
                       htmle_result** out) {
  return guarded([&] {
    require(data, "dataset");
    require(policy, "policy");
    require(o, "options");
    require(out, "output handle");
    htmle::EstimationOptions opts;
    opts.folds = o->folds;
    opts.no_crossfit = o->folds == 1;
    opts.seed = o->seed;
    opts.pad = o->pad;
    opts.nuisance = nuisance_options(o->bases, o->ratio_bases, o->selector_folds, o->ratio_method, o->odds_cap);
    if (o->variance != HTMLE_VAR_EIF && o->variance != HTMLE_VAR_BOOTSTRAP) throw htmle::ConfigError("unknown variance method");
    opts.variance.method = o->variance == HTMLE_VAR_BOOTSTRAP ? htmle::VarianceMethod::Bootstrap : htmle::VarianceMethod::Eif;
    opts.variance.bootstrap_b = o->bootstrap_b;
    opts.variance.jobs = o->jobs;
    if (opts.variance.method == htmle::VarianceMethod::Bootstrap && o->bootstrap_b < 2) {
      throw htmle::ConfigError("bootstrap needs at least 2 replicates");
    }
    const auto methods = methods_from_mask(o->estimators);
    auto result = std::make_unique<htmle_result>();
    result->reports = htmle::estimate(data->data, policy->policy, methods, opts, &result->table);
    *out = result.release();
  });
}

size_t htmle_result_count(const htmle_result* result) { return result ? result->reports.size() : 0; }

htmle_status htmle_result_get(const htmle_result* result, size_t index, htmle_estimate* out) {
  return guarded([&] {
    require(result, "result");
    require(out, "output");
    if (index >= result->reports.size()) throw htmle::ConfigError("result index out of range");
    const auto& r = result->reports[index];
    *out = htmle_estimate{method_bit(r.method), r.n,          r.psi,   r.std_err, r.ci_low, r.ci_high,
                          r.eif_std_err,        r.mean_eif,   r.eps_m, r.eps_q,   r.eps,    r.min_r,
                          r.max_r,              r.converged ? 1 : 0, r.degenerate_variance ? 1 : 0};
  });
}

htmle_status htmle_result_eif(const htmle_result* result, size_t index, const double** values, size_t* n) {
  return guarded([&] {
    require(result, "result");
    require(values, "values");
    require(n, "n");
    if (index >= result->reports.size()) throw htmle::ConfigError("result index out of range");
    *values = result->reports[index].eif.data();
    *n = static_cast<size_t>(result->reports[index].eif.size());
  });
}

htmle_status htmle_result_format(const htmle_result* result, int format, char** out) {
  return guarded([&] {
    require(result, "result");
    require(out, "output");
    switch (format) {
      case HTMLE_FORMAT_TABLE: *out = dup_string(htmle::reports_table(result->reports)); break;
      case HTMLE_FORMAT_JSON: *out = dup_string(htmle::reports_jsonl(result->reports)); break;
      case HTMLE_FORMAT_CSV: *out = dup_string(htmle::reports_csv(result->reports)); break;
      default: throw htmle::ConfigError("unknown output format");
    }
  });
}

htmle_status htmle_result_nuisance_csv(const htmle_result* result, char** out) {
  return guarded([&] {
    require(result, "result");
    require(out, "output");
    *out = dup_string(htmle::nuisance_csv(result->table));
  });
}

void htmle_result_free(htmle_result* result) { delete result; }

void htmle_simulate_options_init(htmle_simulate_options* o) {
  if (o == nullptr) return;
  static const size_t kSizes[] = {1000};
  static const double kZero[] = {0.0};
  o->sizes = kSizes;
  o->sizes_count = 1;
  o->beta_ps = kZero;
  o->beta_ps_count = 1;
  o->alpha_deltas = kZero;
  o->alpha_deltas_count = 1;
  o->estimators = HTMLE_EST_ALL;
  o->replicates = 100;
  o->folds = 10;
  o->seed = 1;
  o->oracle_draws = 10000000;
  o->jobs = 1;
  o->bases = HTMLE_BASIS_MAIN | HTMLE_BASIS_SQUARES;
  o->ratio_bases = HTMLE_BASIS_MAIN | HTMLE_BASIS_SQUARES | HTMLE_BASIS_QUADRATIC;
  o->selector_folds = 5;
  o->ratio_method = HTMLE_RATIO_AUTO;
  o->odds_cap = 0.0;
}

htmle_status htmle_simulate(const htmle_simulate_options* o, const htmle_policy* policy, htmle_study** out) {
  return guarded([&] {
    require(o, "options");
    require(policy, "policy");
    require(out, "output handle");
    if (o->sizes_count == 0 || o->beta_ps_count == 0 || o->alpha_deltas_count == 0) {
      throw htmle::ConfigError("simulation grid is empty");
    }
    htmle::sim::StudyConfig cfg;
    cfg.sizes.assign(o->sizes, o->sizes + o->sizes_count);
    cfg.beta_ps.assign(o->beta_ps, o->beta_ps + o->beta_ps_count);
    cfg.alpha_deltas.assign(o->alpha_deltas, o->alpha_deltas + o->alpha_deltas_count);
    cfg.methods = methods_from_mask(o->estimators);
    cfg.policy = policy->policy;
    cfg.replicates = o->replicates;
    cfg.seed = o->seed;
    cfg.oracle_draws = o->oracle_draws;
    cfg.jobs = o->jobs;
    cfg.estimation.folds = o->folds;
    cfg.estimation.no_crossfit = o->folds == 1;
    cfg.estimation.nuisance = nuisance_options(o->bases, o->ratio_bases, o->selector_folds, o->ratio_method, o->odds_cap);
    cfg.estimation.variance.method = htmle::VarianceMethod::Eif;
    *out = new htmle_study{htmle::sim::run_study(cfg)};
  });
}

htmle_status htmle_study_format(const htmle_study* study, int format, char** out) {
  return guarded([&] {
    require(study, "study");
    require(out, "output");
    switch (format) {
      case HTMLE_FORMAT_TABLE: *out = dup_string(htmle::sim::study_table(study->result)); break;
      case HTMLE_FORMAT_CSV: *out = dup_string(htmle::sim::study_csv(study->result)); break;
      default: throw htmle::ConfigError("study output supports table and csv");
    }
  });
}

size_t htmle_study_failures(const htmle_study* study) {
  if (study == nullptr) return 0;
  size_t total = 0;
  for (const auto& cell : study->result.cells) {
    for (const auto& m : cell.metrics) total += static_cast<size_t>(m.failures);
  }
  return total;
}

void htmle_study_free(htmle_study* study) { delete study; }

htmle_status htmle_true_psi(const htmle_policy* policy, double alpha_delta, size_t draws, uint64_t seed, double beta_p,
                            double* out) {
  return guarded([&] {
    require(policy, "policy");
    require(out, "output");
    *out = htmle::sim::true_psi(policy->policy, alpha_delta, draws, seed, beta_p);
  });
}

}  // extern "C"
