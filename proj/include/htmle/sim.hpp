#pragma once

#include "htmle/data.hpp"
#include "htmle/estimators.hpp"
#include "htmle/policy.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace htmle::sim {

// Simulation design with four standard-normal covariates, a logistic
// propensity (positivity knob beta_p), a logistic hurdle (zero-frequency
// knob alpha_delta) and an exponential-plus-Exp(1) intensity.
struct DgmConfig {
  std::size_t n = 1000;
  double beta_p = 0.0;
  double alpha_delta = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr int kCovariates = 4;

// Closed-form components; x points at kCovariates values.
double propensity(const double* x, double beta_p);
double hurdle(double t, const double* x, double alpha_delta);
// E[S | T = t, X = x] = exp(linear) + E[U] with U ~ Exp(1)
double intensity(double t, const double* x);

// Bit-reproducible given config. Covariates are named x1..x4.
TwoPartDataset generate(const DgmConfig& config);

// Monte Carlo average of q(T^d, X) m(T^d, X) over n_oracle draws of (X, T).
// beta_p only matters for policies that read the natural treatment.
double true_psi(const Policy& policy, double alpha_delta, std::size_t n_oracle, std::uint64_t seed,
                double beta_p = 0.0);

struct EstimatorMetrics {
  Method method = Method::Htmle;
  double abs_bias = 0.0;
  double mc_variance = 0.0;  // n - 1 denominator
  double mse = 0.0;
  double coverage = 0.0;
  double mean_psi = 0.0;
  double mean_std_err = 0.0;
  int successes = 0;
  int failures = 0;
};

struct StudyCell {
  DgmConfig dgm;  // seed unused
  double psi_true = 0.0;
  std::vector<EstimatorMetrics> metrics;
  std::vector<std::vector<double>> estimates;  // per method, successful replicates
  std::vector<std::string> failure_messages;
};

struct StudyResult {
  std::vector<StudyCell> cells;
  int replicates = 0;
  std::string policy;
};

struct StudyConfig {
  std::vector<std::size_t> sizes{1000};
  std::vector<double> beta_ps{0.0};
  std::vector<double> alpha_deltas{0.0};
  std::vector<Method> methods{Method::Htmle, Method::Tmle, Method::Aipw};
  Policy policy = Policy::static_value(1.0);
  int replicates = 100;
  std::uint64_t seed = 1;
  // Replicate b uses seed + b * seed_stride; a stride of 0 repeats one dataset.
  std::uint64_t seed_stride = 1;
  std::size_t oracle_draws = 10'000'000;
  int jobs = 1;
  EstimationOptions estimation;  // folds default to 10; seed is overridden per replicate
};

// Runs every (n, beta_p, alpha_delta) cell. Failed replicates are excluded from
// the metrics and counted per estimator.
StudyResult run_study(const StudyConfig& config);

// Aggregates estimates and standard errors against a known truth.
EstimatorMetrics summarize(Method method, const std::vector<double>& psi, const std::vector<double>& std_err,
                           double psi_true, int failures = 0);

std::string study_csv(const StudyResult& result);
// Text table laid out like the published simulation tables: one block of
// metric rows per (n, alpha_delta), one column per (estimator, beta_p).
std::string study_table(const StudyResult& result);

}  // namespace htmle::sim
