#include "htmle/learners.hpp"

#include "htmle/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace htmle {

std::string GlmSpec::name() const {
  std::string out;
  switch (family) {
    case Family::BinomialLogit: out = "binomial-logit"; break;
    case Family::GaussianIdentity: out = "gaussian-identity"; break;
    case Family::GaussianLog: out = "gaussian-log"; break;
  }
  switch (basis) {
    case Basis::InterceptOnly: out += "/intercept"; break;
    case Basis::MainEffects: out += "/main"; break;
    case Basis::MainSquares: out += "/main+squares"; break;
    case Basis::Quadratic: out += "/quadratic"; break;
  }
  return out;
}

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double clip_probability(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

Vector clip_probability(const Vector& p) { return p.unaryExpr([](double v) { return clip_probability(v); }); }

namespace {

bool is_binary_column(const Matrix& x, Eigen::Index j) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double v = x(i, j);
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

FeatureLayout make_layout(Basis basis, const Matrix& features) {
  FeatureLayout layout;
  layout.input_width = features.cols();
  if (basis == Basis::MainSquares || basis == Basis::Quadratic) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (!is_binary_column(features, j)) layout.squared.push_back(j);
    }
  }
  layout.products = basis == Basis::Quadratic;
  return layout;
}

Eigen::Index expanded_width(Basis basis, const FeatureLayout& layout) {
  if (basis == Basis::InterceptOnly) return 0;
  const Eigen::Index p = layout.input_width;
  const Eigen::Index products = layout.products ? p * (p - 1) / 2 : 0;
  return layout.input_width + static_cast<Eigen::Index>(layout.squared.size()) + products;
}

// Non-intercept expanded columns, unstandardized.
Matrix expand_raw(Basis basis, const FeatureLayout& layout, const Matrix& features) {
  const Eigen::Index width = expanded_width(basis, layout);
  Matrix out(features.rows(), width);
  if (width == 0) return out;
  out.leftCols(layout.input_width) = features;
  for (std::size_t k = 0; k < layout.squared.size(); ++k) {
    const auto col = layout.input_width + static_cast<Eigen::Index>(k);
    out.col(col) = features.col(layout.squared[k]).array().square();
  }
  if (layout.products) {
    auto col = layout.input_width + static_cast<Eigen::Index>(layout.squared.size());
    for (Eigen::Index j = 0; j < layout.input_width; ++j) {
      for (Eigen::Index k = j + 1; k < layout.input_width; ++k) out.col(col++) = features.col(j).cwiseProduct(features.col(k));
    }
  }
  return out;
}

// [1 | standardized expansion]
Matrix design(const GlmSpec& spec, const FeatureLayout& layout, const Matrix& features) {
  Matrix raw = expand_raw(spec.basis, layout, features);
  Matrix out(features.rows(), raw.cols() + 1);
  out.col(0).setOnes();
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    out.col(j + 1) = (raw.col(j).array() - layout.center[j]) / layout.scale[j];
  }
  return out;
}

Vector inverse_link(Family family, const Vector& eta) {
  switch (family) {
    case Family::BinomialLogit: return eta.unaryExpr([](double v) { return expit(v); });
    case Family::GaussianIdentity: return eta;
    case Family::GaussianLog: return eta.unaryExpr([](double v) { return std::exp(std::min(v, 700.0)); });
  }
  return eta;
}

double deviance(Family family, const Vector& y, const Vector& mu, const Vector& w) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (w[i] == 0.0) continue;
    if (family == Family::BinomialLogit) {
      const double m = std::clamp(mu[i], 1e-300, 1.0 - 1e-16);
      double term = 0.0;
      if (y[i] > 0.0) term += y[i] * std::log(m);
      if (y[i] < 1.0) term += (1.0 - y[i]) * std::log1p(-m);
      dev -= 2.0 * w[i] * term;
    } else {
      const double r = y[i] - mu[i];
      dev += w[i] * r * r;
    }
  }
  return dev;
}

void check_inputs(const Matrix& features, const Vector& response, const Vector& weights, const Vector& offset) {
  const auto n = response.size();
  if (features.rows() != n || weights.size() != n || offset.size() != n) {
    throw DataError("fit_glm: dimension mismatch between features, response, weights and offset");
  }
  if (!features.allFinite()) throw DataError("fit_glm: non-finite design entry");
  if (!response.allFinite() || !offset.allFinite()) throw DataError("fit_glm: non-finite response or offset");
  if (!weights.allFinite() || (weights.array() < 0.0).any()) throw DataError("fit_glm: weights must be finite and non-negative");
  if (!(weights.sum() > 0.0)) throw DataError("fit_glm: zero total weight");
}

}  // namespace

FittedModel::FittedModel(GlmSpec spec, FeatureLayout layout, Vector coefficients, FitDiagnostics diagnostics)
    : spec_(spec), layout_(std::move(layout)), coef_(std::move(coefficients)), diag_(diagnostics) {}

Vector FittedModel::raw_coefficients() const {
  Vector raw(coef_.size());
  raw[0] = coef_[0];
  for (Eigen::Index j = 1; j < coef_.size(); ++j) {
    raw[j] = coef_[j] / layout_.scale[j - 1];
    raw[0] -= raw[j] * layout_.center[j - 1];
  }
  return raw;
}

Vector FittedModel::linear_predictor(const Matrix& features, const Vector* offset) const {
  if (features.cols() != layout_.input_width) {
    throw DataError("predict: model expects " + std::to_string(layout_.input_width) + " features, got " +
                    std::to_string(features.cols()));
  }
  Vector eta = design(spec_, layout_, features) * coef_;
  if (offset != nullptr) {
    if (offset->size() != eta.size()) throw DataError("predict: offset length mismatch");
    eta += *offset;
  }
  return eta;
}

FittedModel fit_glm(const GlmSpec& spec, const Matrix& features, const Vector& response, const Vector& weights,
                    const Vector& offset) {
  if (!(spec.tol > 0.0) || spec.max_iter < 1 || spec.ridge < 0.0) throw ConfigError("fit_glm: invalid GlmSpec");
  check_inputs(features, response, weights, offset);
  if (spec.family == Family::BinomialLogit && ((response.array() < 0.0).any() || (response.array() > 1.0).any())) {
    throw DataError("fit_glm: binomial response must lie in [0, 1]");
  }

  FeatureLayout layout = make_layout(spec.basis, features);
  const Matrix raw = expand_raw(spec.basis, layout, features);
  const auto n = static_cast<double>(raw.rows());
  layout.center = Vector::Zero(raw.cols());
  layout.scale = Vector::Ones(raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double mean = raw.col(j).mean();
    const double var = (raw.col(j).array() - mean).square().sum() / n;
    layout.center[j] = mean;
    layout.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  const Matrix z = design(spec, layout, features);
  const Eigen::Index k = z.cols();
  const double total_weight = weights.sum();

  Matrix penalty = Matrix::Zero(k, k);
  for (Eigen::Index j = 1; j < k; ++j) penalty(j, j) = spec.ridge;

  Vector beta = Vector::Zero(k);
  Vector eta = z * beta + offset;
  Vector mu = inverse_link(spec.family, eta);
  auto penalized = [&](const Vector& b, const Vector& m) {
    return deviance(spec.family, response, m, weights) + b.dot(penalty * b);
  };
  double dev = penalized(beta, mu);

  // Gradient of the penalized log likelihood, mapped back to the raw
  // (unstandardized) expanded columns. Equals the plain score when ridge = 0.
  auto raw_score = [&](const Vector& m) {
    Vector resid_w(response.size());
    for (Eigen::Index i = 0; i < response.size(); ++i) {
      double g = weights[i] * (response[i] - m[i]);
      if (spec.family == Family::GaussianLog) g *= m[i];  // d mu / d eta
      resid_w[i] = g;
    }
    const Vector sz = z.transpose() * resid_w - penalty * beta;
    double max_abs = std::abs(sz[0]);
    for (Eigen::Index j = 1; j < k; ++j) {
      max_abs = std::max(max_abs, std::abs(layout.scale[j - 1] * sz[j] + layout.center[j - 1] * sz[0]));
    }
    return max_abs;
  };

  FitDiagnostics diag;
  bool stalled = false;
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    diag.max_score = raw_score(mu);
    diag.iterations = iter;
    if (!std::isfinite(diag.max_score)) throw NumericalError("fit_glm: non-finite score");
    if (diag.max_score < spec.tol) {
      diag.converged = true;
      break;
    }
    if (stalled) break;

    Vector w_irls(response.size()), target(response.size());
    for (Eigen::Index i = 0; i < response.size(); ++i) {
      const double lin = eta[i] - offset[i];
      switch (spec.family) {
        case Family::BinomialLogit: {
          const double v = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
          w_irls[i] = weights[i] * v;
          target[i] = lin + (response[i] - mu[i]) / v;
          break;
        }
        case Family::GaussianIdentity:
          w_irls[i] = weights[i];
          target[i] = response[i] - offset[i];
          break;
        case Family::GaussianLog: {
          const double m = std::max(mu[i], 1e-12);
          w_irls[i] = weights[i] * m * m;
          target[i] = lin + (response[i] - mu[i]) / m;
          break;
        }
      }
    }
    const Matrix zw = z.array().colwise() * w_irls.array();
    Matrix gram = z.transpose() * zw + penalty;
    const Vector rhs = zw.transpose() * target;
    Eigen::LDLT<Matrix> solver(gram);
    Vector proposal = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !proposal.allFinite()) {
      // Rank trouble beyond what the ridge absorbs.
      gram.diagonal().array() += 1e-8 * std::max(1.0, gram.diagonal().maxCoeff());
      proposal = gram.ldlt().solve(rhs);
      if (!proposal.allFinite()) throw NumericalError("fit_glm: singular IRLS system");
    }

    // Step halving on the penalized deviance.
    const Vector step = proposal - beta;
    double scale = 1.0;
    bool improved = false;
    Vector next_beta, next_eta, next_mu;
    double next_dev = dev;
    for (int half = 0; half < 40; ++half) {
      next_beta = beta + scale * step;
      next_eta = z * next_beta + offset;
      next_mu = inverse_link(spec.family, next_eta);
      next_dev = penalized(next_beta, next_mu);
      if (std::isfinite(next_dev) && next_dev <= dev + 1e-12 * std::abs(dev)) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      stalled = true;
      continue;
    }
    const double change = (next_beta - beta).lpNorm<Eigen::Infinity>();
    beta = std::move(next_beta);
    eta = std::move(next_eta);
    mu = std::move(next_mu);
    dev = next_dev;
    if (change < 1e-13 * (1.0 + beta.lpNorm<Eigen::Infinity>())) stalled = true;
    diag.iterations = iter + 1;
  }
  if (!diag.converged) {
    diag.max_score = raw_score(mu);
    // At the floating-point floor the score cannot shrink further.
    diag.converged = diag.max_score < spec.tol || (stalled && diag.max_score < 1e-7 * std::max(1.0, total_weight));
  }
  return FittedModel(spec, std::move(layout), std::move(beta), diag);
}

FittedModel fit_glm(const GlmSpec& spec, const Matrix& features, const Vector& response) {
  return fit_glm(spec, features, response, Vector::Ones(response.size()), Vector::Zero(response.size()));
}

Vector predict(const FittedModel& model, const Matrix& features, const Vector* offset) {
  Vector mu = inverse_link(model.spec().family, model.linear_predictor(features, offset));
  if (model.spec().family == Family::BinomialLogit) mu = clip_probability(mu);
  return mu;
}

double weighted_loss(Loss loss, const Vector& response, const Vector& prediction, const Vector& weights) {
  double total = 0.0;
  double wsum = 0.0;
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    double term;
    if (loss == Loss::LogLoss) {
      const double p = clip_probability(prediction[i]);
      term = -(response[i] * std::log(p) + (1.0 - response[i]) * std::log1p(-p));
    } else {
      const double r = response[i] - prediction[i];
      term = r * r;
    }
    total += weights[i] * term;
    wsum += weights[i];
  }
  return wsum > 0.0 ? total / wsum : std::numeric_limits<double>::infinity();
}

Selection cv_select_detail(std::span<const GlmSpec> candidates, const Matrix& features, const Vector& response,
                           const Vector& weights, int folds, Loss loss) {
  if (candidates.empty()) throw ConfigError("cv_select: empty candidate list");
  Selection out;
  out.cv_loss.assign(candidates.size(), 0.0);
  if (candidates.size() == 1) return out;
  if (folds < 2) throw ConfigError("cv_select: need at least 2 folds");
  const auto n = response.size();
  if (n < folds) throw DataError("cv_select: fewer rows than folds");

  std::vector<std::vector<Eigen::Index>> train(static_cast<std::size_t>(folds)), valid(static_cast<std::size_t>(folds));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto f = static_cast<std::size_t>(i % folds);
    valid[f].push_back(i);
    for (int g = 0; g < folds; ++g) {
      if (static_cast<std::size_t>(g) != f) train[static_cast<std::size_t>(g)].push_back(i);
    }
  }
  auto take = [](const auto& src, const std::vector<Eigen::Index>& rows) {
    using T = std::decay_t<decltype(src)>;
    if constexpr (std::is_same_v<T, Matrix>) {
      return Matrix(src(rows, Eigen::all));
    } else {
      return Vector(src(rows));
    }
  };

  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double total = 0.0;
    double wsum = 0.0;
    try {
      for (std::size_t f = 0; f < valid.size(); ++f) {
        const Matrix xt = take(features, train[f]);
        const Vector yt = take(response, train[f]);
        const Vector wt = take(weights, train[f]);
        const auto model = fit_glm(candidates[c], xt, yt, wt, Vector::Zero(yt.size()));
        const Vector wv = take(weights, valid[f]);
        const Vector pred = predict(model, take(features, valid[f]));
        const double fold_weight = wv.sum();
        if (fold_weight > 0.0) {
          total += weighted_loss(loss, take(response, valid[f]), pred, wv) * fold_weight;
          wsum += fold_weight;
        }
      }
      out.cv_loss[c] = wsum > 0.0 ? total / wsum : std::numeric_limits<double>::infinity();
      if (!std::isfinite(out.cv_loss[c])) out.cv_loss[c] = std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      out.cv_loss[c] = std::numeric_limits<double>::infinity();
    }
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    if (out.cv_loss[c] < out.cv_loss[best]) best = c;
  }
  if (!std::isfinite(out.cv_loss[best])) throw NumericalError("cv_select: every candidate failed to fit");
  out.best = best;
  return out;
}

GlmSpec cv_select(std::span<const GlmSpec> candidates, const Matrix& features, const Vector& response,
                  const Vector& weights, int folds, Loss loss) {
  return candidates[cv_select_detail(candidates, features, response, weights, folds, loss).best];
}

std::vector<GlmSpec> binomial_library() {
  return {GlmSpec{Family::BinomialLogit, Basis::MainEffects}, GlmSpec{Family::BinomialLogit, Basis::MainSquares}};
}

std::vector<GlmSpec> ratio_library() {
  auto out = binomial_library();
  out.push_back(GlmSpec{Family::BinomialLogit, Basis::Quadratic});
  return out;
}

TiltFit solve_tilt(const Vector& response, const Vector& offset, const Vector& weights, double tol, int max_iter) {
  TiltFit out;
  const Matrix none(response.size(), 0);
  GlmSpec spec{Family::BinomialLogit, Basis::InterceptOnly, 0.0, max_iter, tol};
  auto score_at = [&](double eps) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < response.size(); ++i) s += weights[i] * (response[i] - expit(eps + offset[i]));
    return s;
  };
  try {
    const auto model = fit_glm(spec, none, response, weights, offset);
    out.epsilon = model.coefficients()[0];
    out.iterations = model.diagnostics().iterations;
    out.converged = model.diagnostics().converged;
  } catch (const NumericalError&) {
    out.converged = false;
  }
  if (out.converged && std::isfinite(out.epsilon)) {
    out.score = score_at(out.epsilon);
    return out;
  }

  // Golden-section search on the weighted log loss, which is convex in eps.
  auto loss_at = [&](double eps) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < response.size(); ++i) {
      const double eta = eps + offset[i];
      // -[y log p + (1-y) log(1-p)] = log(1 + e^eta) - y * eta
      const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      l += weights[i] * (softplus - response[i] * eta);
    }
    return l;
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = -10.0, b = 10.0;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = loss_at(c), fd = loss_at(d);
  int iter = 0;
  while (b - a > 1e-12 && iter < 200) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = loss_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = loss_at(d);
    }
    ++iter;
  }
  out.epsilon = 0.5 * (a + b);
  out.iterations += iter;
  out.used_fallback = true;
  out.score = score_at(out.epsilon);
  if (!std::isfinite(out.epsilon) || !std::isfinite(out.score)) {
    throw NumericalError("tilt: line search failed (score " + std::to_string(out.score) + ")");
  }
  const double wsum = weights.sum();
  out.converged = std::abs(out.score) < std::max(tol, 1e-7 * std::max(1.0, wsum)) && out.epsilon > -10.0 + 1e-9 &&
                  out.epsilon < 10.0 - 1e-9;
  if (!out.converged) {
    throw NumericalError("tilt: no root in [-10, 10]; score trace ended at eps=" + std::to_string(out.epsilon) +
                         " score=" + std::to_string(out.score));
  }
  return out;
}

}  // namespace htmle
