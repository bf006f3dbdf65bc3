#pragma once

#include "htmle/data.hpp"
#include "htmle/learners.hpp"
#include "htmle/policy.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace htmle {

// Partition of 0..n-1 into J validation folds V_1..V_J. Training set for fold
// j is everything outside V_j.
class CrossFitPlan {
 public:
  CrossFitPlan(std::vector<std::vector<std::size_t>> folds, std::size_t n, std::uint64_t seed);

  std::size_t rows() const { return fold_of_.size(); }
  std::size_t fold_count() const { return folds_.size(); }
  const std::vector<std::size_t>& validation(std::size_t j) const { return folds_[j]; }
  // All rows when there is a single fold (no cross-fitting).
  std::vector<std::size_t> training(std::size_t j) const;
  std::size_t fold_of(std::size_t i) const { return fold_of_[i]; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<std::vector<std::size_t>> folds_;
  std::vector<std::size_t> fold_of_;
  std::uint64_t seed_;
};

// Shuffles 0..n-1 with the seed and deals rows round-robin, so fold sizes
// differ by at most one. J = 1 requires no_crossfit = true.
CrossFitPlan make_plan(std::size_t n, int folds, std::uint64_t seed, bool no_crossfit = false);

enum class RatioMethod {
  Auto,            // analytic for IPSI with binary treatment, else classification
  Analytic,
  Classification,
};

struct LearnerOptions {
  std::vector<GlmSpec> hurdle = binomial_library();     // q: delta on (t, x)
  std::vector<GlmSpec> intensity = binomial_library();  // m: scaled y on (t, x) among positives
  std::vector<GlmSpec> outcome = binomial_library();    // single E[Y | T, X] for TMLE / AIPW
  std::vector<GlmSpec> ratio = ratio_library();         // density-ratio classifier
  std::vector<GlmSpec> propensity = binomial_library(); // P(T = 1 | X) for analytic ratios
  int selector_folds = 5;
};

struct NuisanceOptions {
  LearnerOptions learners;
  RatioMethod ratio = RatioMethod::Auto;
  std::optional<double> odds_cap = 1e3;  // nullopt: uncapped
  bool two_part = true;                  // fit q and m
  bool single_outcome = true;            // fit the combined outcome regression
};

// Per-row cross-fitted predictions. Intensity and combined-outcome means are on
// the scaled (0, 1) outcome scale.
struct NuisanceTable {
  Vector t_shift;
  Vector r_hat;
  Vector q_nat, q_shift;
  Vector m_nat, m_shift;
  Vector outcome_nat, outcome_shift;  // empty when not fitted

  bool converged = true;
  std::string ratio_method;
  std::vector<std::string> notes;  // chosen learners and convergence warnings

  std::size_t rows() const { return static_cast<std::size_t>(r_hat.size()); }
  bool has_two_part() const { return q_nat.size() != 0; }
  bool has_outcome() const { return outcome_nat.size() != 0; }

  // Throws NumericalError if any entry is non-finite or out of range.
  void validate() const;
};

struct ShiftedPredictions {
  Vector natural;
  Vector shifted;
  bool converged = true;
  std::vector<std::string> notes;
};

// Intensity E[Y | T, X, delta = 1] on the scaled outcome. Each training fold
// must contain at least p + 2 positive outcomes.
ShiftedPredictions fit_m(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
                         const OutcomeScaler& scaler, const LearnerOptions& learners);

// Hurdle probability P(delta = 1 | T, X), clipped. Each training fold needs
// both classes.
ShiftedPredictions fit_q(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
                         const LearnerOptions& learners);

// Combined outcome regression E[Y | T, X] on the scaled outcome (all rows).
ShiftedPredictions fit_outcome(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
                               const OutcomeScaler& scaler, const LearnerOptions& learners);

// Density ratio by classification: stacks (T, X, label 0) and (T^d, X,
// label 1) per training fold and returns the classifier odds at the natural
// treatment, capped at odds_cap when set.
Vector fit_r(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
             const LearnerOptions& learners, std::optional<double> odds_cap, std::vector<std::string>* notes = nullptr);

// Cross-fitted P(T = 1 | X) for binary treatments.
Vector fit_propensity(const CrossFitPlan& plan, const TwoPartDataset& data, const LearnerOptions& learners);

// Full nuisance estimation for a policy. The shifted treatment is computed
// once and shared by every component.
NuisanceTable estimate_nuisance(const CrossFitPlan& plan, const TwoPartDataset& data, const Policy& policy,
                                const OutcomeScaler& scaler, const NuisanceOptions& options);

// Dumps the table as CSV (one row per observation).
std::string nuisance_csv(const NuisanceTable& table);

}  // namespace htmle
