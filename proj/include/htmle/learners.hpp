#pragma once

#include "htmle/data.hpp"

#include <span>
#include <string>
#include <vector>

namespace htmle {

enum class Family { BinomialLogit, GaussianIdentity, GaussianLog };

// Column expansion applied to the raw feature matrix before fitting. Every
// basis carries an intercept.
enum class Basis {
  InterceptOnly,  // intercept alone; features ignored
  MainEffects,    // intercept + features
  MainSquares,    // + squares of each non-binary feature
  Quadratic,      // main+squares + every pairwise product
};

enum class Loss { LogLoss, Mse };

struct GlmSpec {
  Family family = Family::BinomialLogit;
  Basis basis = Basis::MainEffects;
  double ridge = 1e-8;
  int max_iter = 100;
  double tol = 1e-8;

  std::string name() const;
};

// Probability clip applied to binomial predictions before any logit.
inline constexpr double kProbClip = 1e-5;

double expit(double x);
double logit(double p);
double clip_probability(double p);
Vector clip_probability(const Vector& p);

struct FeatureLayout {
  Eigen::Index input_width = 0;
  std::vector<Eigen::Index> squared;  // inputs that receive a square column
  bool products = false;              // append x_j * x_k for j < k
  Vector center;                      // per expanded non-intercept column
  Vector scale;
};

struct FitDiagnostics {
  bool converged = false;
  int iterations = 0;
  double max_score = 0.0;  // max |sum w * basis * (y - mu)| over raw columns
};

class FittedModel {
 public:
  FittedModel(GlmSpec spec, FeatureLayout layout, Vector coefficients, FitDiagnostics diagnostics);

  const GlmSpec& spec() const { return spec_; }
  const FeatureLayout& layout() const { return layout_; }
  // Coefficients on the standardized expanded basis; entry 0 is the intercept.
  const Vector& coefficients() const { return coef_; }
  // Coefficients on the raw expanded basis [1, features, squares, pairwise products].
  Vector raw_coefficients() const;
  const FitDiagnostics& diagnostics() const { return diag_; }

  Vector linear_predictor(const Matrix& features, const Vector* offset = nullptr) const;

 private:
  GlmSpec spec_;
  FeatureLayout layout_;
  Vector coef_;
  FitDiagnostics diag_;
};

// Weighted GLM with offset by IRLS, starting from zero coefficients, with
// step halving on the penalized deviance. Binomial responses may be
// fractional. Throws DataError on zero total weight, mismatched dimensions,
// or non-finite inputs.
FittedModel fit_glm(const GlmSpec& spec, const Matrix& features, const Vector& response, const Vector& weights,
                    const Vector& offset);
FittedModel fit_glm(const GlmSpec& spec, const Matrix& features, const Vector& response);

// Response-scale predictions; binomial output is clipped to
// [kProbClip, 1 - kProbClip]. Throws DataError on feature width mismatch.
Vector predict(const FittedModel& model, const Matrix& features, const Vector* offset = nullptr);

double weighted_loss(Loss loss, const Vector& response, const Vector& prediction, const Vector& weights);

struct Selection {
  std::size_t best = 0;
  std::vector<double> cv_loss;  // +inf for candidates that failed to fit
};

// Discrete cross-validated selector. Fold k holds rows with i % folds == k.
// Ties go to the earlier candidate; a single candidate is returned without
// fitting. Throws NumericalError when every candidate fails.
Selection cv_select_detail(std::span<const GlmSpec> candidates, const Matrix& features, const Vector& response,
                           const Vector& weights, int folds, Loss loss);
GlmSpec cv_select(std::span<const GlmSpec> candidates, const Matrix& features, const Vector& response,
                  const Vector& weights, int folds, Loss loss);

// Default libraries.
std::vector<GlmSpec> binomial_library();
// binomial_library() plus the quadratic basis, whose treatment products the
// stacked density-ratio classifier needs.
std::vector<GlmSpec> ratio_library();

struct TiltFit {
  double epsilon = 0.0;
  double score = 0.0;  // sum w * (y - expit(eps + offset)) at the solution
  int iterations = 0;
  bool converged = false;
  bool used_fallback = false;
};

// Intercept-only weighted logistic fit with offset: solves
// sum w_i (y_i - expit(eps + offset_i)) = 0. Falls back to golden-section
// search on the weighted log loss over eps in [-10, 10] when IRLS does not
// converge. Throws NumericalError if neither route yields a finite solution.
TiltFit solve_tilt(const Vector& response, const Vector& offset, const Vector& weights, double tol = 1e-8,
                   int max_iter = 100);

}  // namespace htmle
