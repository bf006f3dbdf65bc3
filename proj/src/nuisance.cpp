#include "htmle/nuisance.hpp"

#include "htmle/error.hpp"
#include "htmle/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace htmle {

CrossFitPlan::CrossFitPlan(std::vector<std::vector<std::size_t>> folds, std::size_t n, std::uint64_t seed)
    : folds_(std::move(folds)), fold_of_(n, static_cast<std::size_t>(-1)), seed_(seed) {
  for (std::size_t j = 0; j < folds_.size(); ++j) {
    for (auto i : folds_[j]) {
      if (i >= n) throw ConfigError("cross-fit plan: index out of range");
      if (fold_of_[i] != static_cast<std::size_t>(-1)) throw ConfigError("cross-fit plan: folds overlap");
      fold_of_[i] = j;
    }
  }
  for (auto f : fold_of_) {
    if (f == static_cast<std::size_t>(-1)) throw ConfigError("cross-fit plan: folds do not cover every row");
  }
}

std::vector<std::size_t> CrossFitPlan::training(std::size_t j) const {
  std::vector<std::size_t> out;
  if (folds_.size() == 1) {
    out.resize(rows());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  out.reserve(rows() - folds_[j].size());
  for (std::size_t i = 0; i < rows(); ++i) {
    if (fold_of_[i] != j) out.push_back(i);
  }
  return out;
}

CrossFitPlan make_plan(std::size_t n, int folds, std::uint64_t seed, bool no_crossfit) {
  if (folds < 1) throw ConfigError("cross-fit plan: need at least one fold");
  if (folds == 1 && !no_crossfit) throw ConfigError("cross-fit plan: J = 1 requires the no-crossfit flag");
  if (static_cast<std::size_t>(folds) > n) {
    throw ConfigError("cross-fit plan: " + std::to_string(folds) + " folds exceed " + std::to_string(n) + " rows");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(stream_seed(seed, 0xf01d));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> parts(static_cast<std::size_t>(folds));
  for (std::size_t k = 0; k < n; ++k) parts[k % parts.size()].push_back(order[k]);
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return CrossFitPlan(std::move(parts), n, seed);
}

void NuisanceTable::validate() const {
  auto check = [](const Vector& v, const char* name, double lo, double hi) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i]) || v[i] < lo || v[i] > hi) {
        throw NumericalError(std::string("nuisance: ") + name + " out of range at row " + std::to_string(i));
      }
    }
  };
  const double inf = std::numeric_limits<double>::infinity();
  check(r_hat, "r_hat", 0.0, inf);
  check(q_nat, "q_nat", 0.0, 1.0);
  check(q_shift, "q_shift", 0.0, 1.0);
  check(m_nat, "m_nat", 0.0, 1.0);
  check(m_shift, "m_shift", 0.0, 1.0);
  check(outcome_nat, "outcome_nat", 0.0, 1.0);
  check(outcome_shift, "outcome_shift", 0.0, 1.0);
}

namespace {

Matrix treatment_features(const Vector& t, const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols() + 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    const auto r = static_cast<Eigen::Index>(k);
    out(r, 0) = t[i];
    out.row(r).tail(x.cols()) = x.row(i);
  }
  return out;
}

std::vector<Eigen::Index> gather_index(const std::vector<std::size_t>& rows) {
  return std::vector<Eigen::Index>(rows.begin(), rows.end());
}

Vector gather(const Vector& v, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(rows[k])];
  return out;
}

struct SelectedFit {
  FittedModel model;
  std::string note;
};

// Selects by cross-validation, fits the winner on all given rows and, when the
// winner does not converge, falls back through the remaining candidates in
// order of CV loss.
// Log loss needs predictions in (0, 1); gaussian candidates are compared by MSE.
Loss scaled_outcome_loss(const std::vector<GlmSpec>& candidates) {
  for (const auto& c : candidates) {
    if (c.family != Family::BinomialLogit) return Loss::Mse;
  }
  return Loss::LogLoss;
}

SelectedFit fit_selected(const std::vector<GlmSpec>& candidates, const Matrix& features, const Vector& response,
                         int selector_folds, Loss loss, bool require_convergence, const std::string& label) {
  const Vector weights = Vector::Ones(response.size());
  const auto selection = cv_select_detail(candidates, features, response, weights, selector_folds, loss);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return selection.cv_loss[a] < selection.cv_loss[b]; });
  std::optional<FittedModel> first;
  for (auto c : order) {
    if (!std::isfinite(selection.cv_loss[c]) && candidates.size() > 1) continue;
    try {
      auto model = fit_glm(candidates[c], features, response, weights, Vector::Zero(response.size()));
      if (model.diagnostics().converged) return {std::move(model), label + ": " + candidates[c].name()};
      if (!first) first = std::move(model);
    } catch (const Error&) {
    }
  }
  if (first && !require_convergence) {
    return {std::move(*first), label + ": " + first->spec().name() + " (not converged)"};
  }
  throw NumericalError(label + ": no candidate learner converged");
}

}  // namespace

ShiftedPredictions fit_m(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
                         const OutcomeScaler& scaler, const LearnerOptions& learners) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  ShiftedPredictions out{Vector(n), Vector(n), true, {}};
  const Vector y_scaled = scaler.scale(data.y());
  const std::size_t min_positive = data.covariates() + 3;  // p + 2 with the treatment column counted
  for (std::size_t j = 0; j < plan.fold_count(); ++j) {
    std::vector<std::size_t> train;
    for (auto i : plan.training(j)) {
      if (data.delta()[static_cast<Eigen::Index>(i)] == 1.0) train.push_back(i);
    }
    if (train.empty()) throw DataError("fit_m: training fold " + std::to_string(j + 1) + " has no positive outcomes");
    if (train.size() < min_positive) {
      throw DataError("fit_m: training fold " + std::to_string(j + 1) + " has only " + std::to_string(train.size()) +
                      " positive outcomes");
    }
    const auto fit = fit_selected(learners.intensity, treatment_features(data.t(), data.x(), train),
                                  gather(y_scaled, train), learners.selector_folds,
                                  scaled_outcome_loss(learners.intensity), false, "m fold " + std::to_string(j + 1));
    if (!fit.model.diagnostics().converged) out.converged = false;
    out.notes.push_back(fit.note);
    const auto& valid = plan.validation(j);
    const Vector nat = clip_probability(predict(fit.model, treatment_features(data.t(), data.x(), valid)));
    const Vector sh = clip_probability(predict(fit.model, treatment_features(t_shift, data.x(), valid)));
    for (std::size_t k = 0; k < valid.size(); ++k) {
      out.natural[static_cast<Eigen::Index>(valid[k])] = nat[static_cast<Eigen::Index>(k)];
      out.shifted[static_cast<Eigen::Index>(valid[k])] = sh[static_cast<Eigen::Index>(k)];
    }
  }
  return out;
}

ShiftedPredictions fit_q(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
                         const LearnerOptions& learners) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  ShiftedPredictions out{Vector(n), Vector(n), true, {}};
  for (std::size_t j = 0; j < plan.fold_count(); ++j) {
    const auto train = plan.training(j);
    const Vector label = gather(data.delta(), train);
    const double ones = label.sum();
    if (ones == 0.0 || ones == static_cast<double>(label.size())) {
      throw DataError("fit_q: training fold " + std::to_string(j + 1) + " contains a single outcome class");
    }
    const auto fit = fit_selected(learners.hurdle, treatment_features(data.t(), data.x(), train), label,
                                  learners.selector_folds, Loss::LogLoss, false, "q fold " + std::to_string(j + 1));
    if (!fit.model.diagnostics().converged) out.converged = false;
    out.notes.push_back(fit.note);
    const auto& valid = plan.validation(j);
    const Vector nat = predict(fit.model, treatment_features(data.t(), data.x(), valid));
    const Vector sh = predict(fit.model, treatment_features(t_shift, data.x(), valid));
    for (std::size_t k = 0; k < valid.size(); ++k) {
      out.natural[static_cast<Eigen::Index>(valid[k])] = nat[static_cast<Eigen::Index>(k)];
      out.shifted[static_cast<Eigen::Index>(valid[k])] = sh[static_cast<Eigen::Index>(k)];
    }
  }
  return out;
}

ShiftedPredictions fit_outcome(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
                               const OutcomeScaler& scaler, const LearnerOptions& learners) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  ShiftedPredictions out{Vector(n), Vector(n), true, {}};
  const Vector y_scaled = scaler.scale(data.y());
  for (std::size_t j = 0; j < plan.fold_count(); ++j) {
    const auto train = plan.training(j);
    const auto fit = fit_selected(learners.outcome, treatment_features(data.t(), data.x(), train),
                                  gather(y_scaled, train), learners.selector_folds,
                                  scaled_outcome_loss(learners.outcome), false, "outcome fold " + std::to_string(j + 1));
    if (!fit.model.diagnostics().converged) out.converged = false;
    out.notes.push_back(fit.note);
    const auto& valid = plan.validation(j);
    const Vector nat = clip_probability(predict(fit.model, treatment_features(data.t(), data.x(), valid)));
    const Vector sh = clip_probability(predict(fit.model, treatment_features(t_shift, data.x(), valid)));
    for (std::size_t k = 0; k < valid.size(); ++k) {
      out.natural[static_cast<Eigen::Index>(valid[k])] = nat[static_cast<Eigen::Index>(k)];
      out.shifted[static_cast<Eigen::Index>(valid[k])] = sh[static_cast<Eigen::Index>(k)];
    }
  }
  return out;
}

Vector fit_r(const CrossFitPlan& plan, const TwoPartDataset& data, const Vector& t_shift,
             const LearnerOptions& learners, std::optional<double> odds_cap, std::vector<std::string>* notes) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  if (t_shift.size() != n) throw DataError("fit_r: shifted treatment length mismatch");
  Vector r(n);
  for (std::size_t j = 0; j < plan.fold_count(); ++j) {
    const auto train = plan.training(j);
    const auto m = static_cast<Eigen::Index>(train.size());
    Matrix features(2 * m, data.x().cols() + 1);
    features.topRows(m) = treatment_features(data.t(), data.x(), train);
    features.bottomRows(m) = treatment_features(t_shift, data.x(), train);
    Vector label(2 * m);
    label.head(m).setZero();
    label.tail(m).setOnes();
    const auto fit = fit_selected(learners.ratio, features, label, learners.selector_folds, Loss::LogLoss, true,
                                  "r fold " + std::to_string(j + 1));
    if (notes) notes->push_back(fit.note);
    const auto& valid = plan.validation(j);
    const Vector p = predict(fit.model, treatment_features(data.t(), data.x(), valid));
    for (std::size_t k = 0; k < valid.size(); ++k) {
      const double pk = p[static_cast<Eigen::Index>(k)];
      double odds = pk / (1.0 - pk);
      if (odds_cap) odds = std::min(odds, *odds_cap);
      r[static_cast<Eigen::Index>(valid[k])] = odds;
    }
  }
  return r;
}

Vector fit_propensity(const CrossFitPlan& plan, const TwoPartDataset& data, const LearnerOptions& learners) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  Vector g(n);
  for (std::size_t j = 0; j < plan.fold_count(); ++j) {
    const auto train = plan.training(j);
    const Vector label = gather(data.t(), train);
    const double ones = label.sum();
    if (ones == 0.0 || ones == static_cast<double>(label.size())) {
      throw DataError("propensity: training fold " + std::to_string(j + 1) + " contains a single treatment level");
    }
    const auto fit = fit_selected(learners.propensity, data.x()(gather_index(train), Eigen::all), label,
                                  learners.selector_folds, Loss::LogLoss, false, "g fold " + std::to_string(j + 1));
    const auto& valid = plan.validation(j);
    const Vector p = predict(fit.model, data.x()(gather_index(valid), Eigen::all));
    for (std::size_t k = 0; k < valid.size(); ++k) g[static_cast<Eigen::Index>(valid[k])] = p[static_cast<Eigen::Index>(k)];
  }
  return g;
}

NuisanceTable estimate_nuisance(const CrossFitPlan& plan, const TwoPartDataset& data, const Policy& policy,
                                const OutcomeScaler& scaler, const NuisanceOptions& options) {
  if (plan.rows() != data.rows()) throw ConfigError("nuisance: plan and dataset sizes differ");
  const Policy resolved = policy.resolve(data);
  NuisanceTable table;
  table.t_shift = resolved.apply(data.t(), data.x());

  bool binary_t = true;
  for (Eigen::Index i = 0; i < data.t().size(); ++i) {
    if (data.t()[i] != 0.0 && data.t()[i] != 1.0) binary_t = false;
  }
  RatioMethod method = options.ratio;
  if (method == RatioMethod::Auto) {
    method = resolved.is_ipsi() && binary_t ? RatioMethod::Analytic : RatioMethod::Classification;
  }
  if (method == RatioMethod::Analytic) {
    const Vector g1 = fit_propensity(plan, data, options.learners);
    table.r_hat = analytic_ratio(resolved, data.t(), g1);
    if (options.odds_cap) table.r_hat = table.r_hat.cwiseMin(*options.odds_cap);
    table.ratio_method = "analytic";
  } else {
    table.r_hat = fit_r(plan, data, table.t_shift, options.learners, options.odds_cap, &table.notes);
    table.ratio_method = "classification";
  }

  auto absorb = [&](ShiftedPredictions& p, Vector& nat, Vector& sh) {
    nat = std::move(p.natural);
    sh = std::move(p.shifted);
    table.converged = table.converged && p.converged;
    table.notes.insert(table.notes.end(), p.notes.begin(), p.notes.end());
  };
  if (options.two_part) {
    auto q = fit_q(plan, data, table.t_shift, options.learners);
    absorb(q, table.q_nat, table.q_shift);
    auto m = fit_m(plan, data, table.t_shift, scaler, options.learners);
    absorb(m, table.m_nat, table.m_shift);
  }
  if (options.single_outcome) {
    auto o = fit_outcome(plan, data, table.t_shift, scaler, options.learners);
    absorb(o, table.outcome_nat, table.outcome_shift);
  }
  table.validate();
  return table;
}

std::string nuisance_csv(const NuisanceTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "row,t_shift,r_hat,q_nat,q_shift,m_nat,m_shift,outcome_nat,outcome_shift\n";
  auto cell = [&](const Vector& v, Eigen::Index i) {
    os << ',';
    if (v.size() != 0) os << v[i];
  };
  for (Eigen::Index i = 0; i < table.r_hat.size(); ++i) {
    os << i;
    cell(table.t_shift, i);
    cell(table.r_hat, i);
    cell(table.q_nat, i);
    cell(table.q_shift, i);
    cell(table.m_nat, i);
    cell(table.m_shift, i);
    cell(table.outcome_nat, i);
    cell(table.outcome_shift, i);
    os << '\n';
  }
  return os.str();
}

}  // namespace htmle
