#pragma once

#include "htmle/data.hpp"
#include "htmle/learners.hpp"
#include "htmle/nuisance.hpp"
#include "htmle/policy.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace htmle {

enum class Method { Htmle, Tmle, Aipw };
enum class VarianceMethod { Eif, Bootstrap };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct VarianceOptions {
  VarianceMethod method = VarianceMethod::Eif;
  int bootstrap_b = 1000;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct EstimateReport {
  Method method = Method::Htmle;
  double psi = 0.0;  // outcome units
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Vector eif;  // at the final nuisances and psi

  // Tilt coefficients; NaN where not applicable.
  double eps_m = std::numeric_limits<double>::quiet_NaN();
  double eps_q = std::numeric_limits<double>::quiet_NaN();
  double eps = std::numeric_limits<double>::quiet_NaN();

  VarianceMethod variance_method = VarianceMethod::Eif;
  int bootstrap_b = 0;
  double eif_std_err = 0.0;  // always reported, whichever method drives the CI
  double mean_eif = 0.0;
  double min_r = 0.0;
  double max_r = 0.0;
  bool converged = true;
  bool degenerate_variance = false;
  std::size_t n = 0;
  std::string policy;
  std::vector<std::string> warnings;
};

// Inputs to the efficient influence function. Means are on the outcome scale.
struct EifInputs {
  std::span<const double> r;
  std::span<const double> q_nat;
  std::span<const double> m_nat;
  std::span<const double> q_shift;
  std::span<const double> m_shift;
  std::span<const double> y;
  std::span<const double> delta;
  std::span<const double> s;  // read only where delta = 1
};

// D = r (Y - q m) + q^d m^d - psi
Vector eif(const EifInputs& in, double psi);
// D = r m (delta - q) + delta r (S - m) + q^d m^d - psi
Vector eif_alt(const EifInputs& in, double psi);

// Convenience forms that unscale the table's intensity means.
Vector eif(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler, double psi);
Vector eif_alt(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler, double psi);

struct TiltResult {
  double epsilon = 0.0;
  Vector natural;  // updated on the (0, 1) scale
  Vector shifted;
  TiltFit fit;
};

// Intensity tilt among positives: weights r, offset logit(m_nat), response
// the scaled outcome. Updates both m_nat and m_shift.
TiltResult tilt_m(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler);
// Hurdle tilt over all rows: weights r * m_nat (tilted, scaled), offset
// logit(q_nat), response delta. Updates q_nat and q_shift.
TiltResult tilt_q(const NuisanceTable& table_after_m_tilt, const TwoPartDataset& data);

// Steps 2-6 on already-fitted nuisances. Shared by the full pipeline, the
// bootstrap and callers that supply their own nuisance table.
struct TwoStepResult {
  double psi = 0.0;
  TiltResult m;
  TiltResult q;
};
TwoStepResult two_step_update(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler);

struct StdErr {
  double std_err = 0.0;
  bool degenerate = false;
};

// sqrt(Var(D) / n) with the n - 1 sample variance.
StdErr variance_eif(const Vector& eif_values);

// Non-parametric bootstrap of the targeting steps with the nuisance table
// held fixed. Replicate b draws from its own stream seeded by (seed, b);
// resamples without positive outcomes are redrawn up to 10 times.
StdErr variance_bootstrap(Method method, const TwoPartDataset& data, const NuisanceTable& table,
                          const OutcomeScaler& scaler, int replicates, std::uint64_t seed, int jobs = 1);

// Same, with caller-supplied resample index sets.
StdErr variance_bootstrap(Method method, const TwoPartDataset& data, const NuisanceTable& table,
                          const OutcomeScaler& scaler, std::span<const std::vector<std::size_t>> resamples,
                          int jobs = 1);

// Point estimate of `method` on a (possibly resampled) table.
double point_estimate(Method method, const TwoPartDataset& data, const NuisanceTable& table,
                      const OutcomeScaler& scaler);

// Estimators on a fixed nuisance table.
EstimateReport htmle_from_nuisance(const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
                                   const VarianceOptions& variance);
EstimateReport tmle_from_nuisance(const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
                                  const VarianceOptions& variance);
EstimateReport aipw_from_nuisance(const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
                                  const VarianceOptions& variance);

struct EstimationOptions {
  int folds = 10;
  bool no_crossfit = false;
  std::uint64_t seed = 0;
  double pad = OutcomeScaler::kDefaultPad;
  NuisanceOptions nuisance;
  VarianceOptions variance;
};

// Fits the nuisance table once and runs each requested estimator on it.
// The cross-fit plan is seeded from options.seed.
std::vector<EstimateReport> estimate(const TwoPartDataset& data, const Policy& policy, std::span<const Method> methods,
                                     const EstimationOptions& options, NuisanceTable* table_out = nullptr);

EstimateReport htmle(const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                     const EstimationOptions& options);
EstimateReport tmle_standard(const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                             const EstimationOptions& options);
EstimateReport aipw(const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                    const EstimationOptions& options);

}  // namespace htmle
