#include "htmle/estimators.hpp"

#include "htmle/error.hpp"
#include "htmle/parallel.hpp"
#include "htmle/rng.hpp"

#include <algorithm>
#include <cmath>

namespace htmle {

namespace {

constexpr double kZ975 = 1.959963984540054;

std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void check_lengths(const EifInputs& in) {
  const auto n = in.y.size();
  if (in.r.size() != n || in.q_nat.size() != n || in.m_nat.size() != n || in.q_shift.size() != n ||
      in.m_shift.size() != n || in.delta.size() != n || in.s.size() != n) {
    throw DataError("eif: input lengths differ");
  }
}

Vector logit_of(const Vector& p) {
  return p.unaryExpr([](double v) { return logit(v); });
}

Vector expit_shift(const Vector& p, double eps) {
  return p.unaryExpr([eps](double v) { return expit(eps + logit(v)); });
}

EifInputs two_part_inputs(const NuisanceTable& t, const TwoPartDataset& d, const Vector& m_nat, const Vector& m_shift) {
  return EifInputs{view(t.r_hat), view(t.q_nat),   view(m_nat), view(t.q_shift),
                   view(m_shift), view(d.y()),     view(d.delta()), view(d.s())};
}

void require_two_part(const NuisanceTable& table) {
  if (!table.has_two_part()) throw ConfigError("hTMLE needs hurdle and intensity predictions in the nuisance table");
}

void require_outcome(const NuisanceTable& table) {
  if (!table.has_outcome()) throw ConfigError("TMLE/AIPW need the combined outcome regression in the nuisance table");
}

NuisanceTable subset_table(const NuisanceTable& table, const std::vector<std::size_t>& rows) {
  auto take = [&](const Vector& v) {
    if (v.size() == 0) return Vector{};
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(rows[k])];
    return out;
  };
  NuisanceTable out;
  out.t_shift = take(table.t_shift);
  out.r_hat = take(table.r_hat);
  out.q_nat = take(table.q_nat);
  out.q_shift = take(table.q_shift);
  out.m_nat = take(table.m_nat);
  out.m_shift = take(table.m_shift);
  out.outcome_nat = take(table.outcome_nat);
  out.outcome_shift = take(table.outcome_shift);
  return out;
}

struct SingleTilt {
  double psi = 0.0;
  TiltResult tilt;
};

SingleTilt single_tilt(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler) {
  require_outcome(table);
  SingleTilt out;
  out.tilt.fit = solve_tilt(scaler.scale(data.y()), logit_of(table.outcome_nat), table.r_hat);
  out.tilt.epsilon = out.tilt.fit.epsilon;
  out.tilt.natural = expit_shift(table.outcome_nat, out.tilt.epsilon);
  out.tilt.shifted = expit_shift(table.outcome_shift, out.tilt.epsilon);
  out.psi = scaler.unscale(out.tilt.shifted.mean());
  return out;
}

double aipw_point(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler) {
  require_outcome(table);
  const Vector m_nat = scaler.unscale(table.outcome_nat);
  const Vector m_shift = scaler.unscale(table.outcome_shift);
  return (table.r_hat.cwiseProduct(data.y() - m_nat) + m_shift).mean();
}

void finish(EstimateReport& rep, const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
            const VarianceOptions& variance) {
  rep.n = data.rows();
  rep.mean_eif = rep.eif.mean();
  rep.min_r = table.r_hat.minCoeff();
  rep.max_r = table.r_hat.maxCoeff();
  rep.converged = rep.converged && table.converged;
  const auto by_eif = variance_eif(rep.eif);
  rep.eif_std_err = by_eif.std_err;
  rep.variance_method = variance.method;
  StdErr se = by_eif;
  if (variance.method == VarianceMethod::Bootstrap) {
    se = variance_bootstrap(rep.method, data, table, scaler, variance.bootstrap_b, variance.seed, variance.jobs);
    rep.bootstrap_b = variance.bootstrap_b;
  }
  rep.std_err = se.std_err;
  rep.degenerate_variance = se.degenerate;
  if (se.degenerate) rep.warnings.push_back("standard error is zero; interval is degenerate");
  rep.ci_low = rep.psi - kZ975 * rep.std_err;
  rep.ci_high = rep.psi + kZ975 * rep.std_err;
  if (!rep.converged) rep.warnings.push_back("a nuisance or tilting fit did not converge");
  if (!std::isfinite(rep.psi) || !rep.eif.allFinite()) throw NumericalError(method_name(rep.method) + ": non-finite estimate");
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Htmle: return "htmle";
    case Method::Tmle: return "tmle";
    case Method::Aipw: return "aipw";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "htmle") return Method::Htmle;
  if (name == "tmle") return Method::Tmle;
  if (name == "aipw") return Method::Aipw;
  throw ConfigError("unknown estimator '" + name + "'");
}

Vector eif(const EifInputs& in, double psi) {
  check_lengths(in);
  const auto n = static_cast<Eigen::Index>(in.y.size());
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    d[i] = in.r[k] * (in.y[k] - in.q_nat[k] * in.m_nat[k]) + in.q_shift[k] * in.m_shift[k] - psi;
  }
  return d;
}

Vector eif_alt(const EifInputs& in, double psi) {
  check_lengths(in);
  const auto n = static_cast<Eigen::Index>(in.y.size());
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double positive_part = in.delta[k] == 1.0 ? in.r[k] * (in.s[k] - in.m_nat[k]) : 0.0;
    d[i] = in.r[k] * in.m_nat[k] * (in.delta[k] - in.q_nat[k]) + positive_part + in.q_shift[k] * in.m_shift[k] - psi;
  }
  return d;
}

Vector eif(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler, double psi) {
  require_two_part(table);
  const Vector m_nat = scaler.unscale(table.m_nat), m_shift = scaler.unscale(table.m_shift);
  return eif(two_part_inputs(table, data, m_nat, m_shift), psi);
}

Vector eif_alt(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler, double psi) {
  require_two_part(table);
  const Vector m_nat = scaler.unscale(table.m_nat), m_shift = scaler.unscale(table.m_shift);
  return eif_alt(two_part_inputs(table, data, m_nat, m_shift), psi);
}

TiltResult tilt_m(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler) {
  require_two_part(table);
  std::vector<Eigen::Index> pos;
  for (Eigen::Index i = 0; i < data.delta().size(); ++i) {
    if (data.delta()[i] == 1.0) pos.push_back(i);
  }
  if (pos.empty()) throw DataError("tilt_m: no positive outcomes");
  const Vector y_scaled = scaler.scale(Vector(data.y()(pos)));
  TiltResult out;
  out.fit = solve_tilt(y_scaled, logit_of(table.m_nat(pos)), table.r_hat(pos));
  out.epsilon = out.fit.epsilon;
  out.natural = expit_shift(table.m_nat, out.epsilon);
  out.shifted = expit_shift(table.m_shift, out.epsilon);
  return out;
}

TiltResult tilt_q(const NuisanceTable& table, const TwoPartDataset& data) {
  require_two_part(table);
  TiltResult out;
  const Vector weights = table.r_hat.cwiseProduct(table.m_nat);
  out.fit = solve_tilt(data.delta(), logit_of(table.q_nat), weights);
  out.epsilon = out.fit.epsilon;
  out.natural = expit_shift(table.q_nat, out.epsilon);
  out.shifted = expit_shift(table.q_shift, out.epsilon);
  return out;
}

TwoStepResult two_step_update(const NuisanceTable& table, const TwoPartDataset& data, const OutcomeScaler& scaler) {
  TwoStepResult out;
  out.m = tilt_m(table, data, scaler);
  NuisanceTable updated = table;
  updated.m_nat = out.m.natural;
  updated.m_shift = out.m.shifted;
  out.q = tilt_q(updated, data);
  out.psi = scaler.unscale(out.q.shifted.cwiseProduct(out.m.shifted).mean());
  return out;
}

namespace {

// Sum of squared deviations, shifted by the first value so that identical
// inputs give exactly zero.
double centered_ss(std::span<const double> v) {
  const double ref = v[0];
  double mean = 0.0;
  for (double x : v) mean += x - ref;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - ref - mean) * (x - ref - mean);
  return ss;
}

}  // namespace

StdErr variance_eif(const Vector& eif_values) {
  const auto n = static_cast<double>(eif_values.size());
  if (n < 2) return {0.0, true};
  const double var = centered_ss(std::span<const double>(eif_values.data(), eif_values.size())) / (n - 1.0);
  const double se = std::sqrt(var / n);
  return {se, !(se > 0.0)};
}

double point_estimate(Method method, const TwoPartDataset& data, const NuisanceTable& table,
                      const OutcomeScaler& scaler) {
  switch (method) {
    case Method::Htmle: return two_step_update(table, data, scaler).psi;
    case Method::Tmle: return single_tilt(table, data, scaler).psi;
    case Method::Aipw: return aipw_point(table, data, scaler);
  }
  return 0.0;
}

StdErr variance_bootstrap(Method method, const TwoPartDataset& data, const NuisanceTable& table,
                          const OutcomeScaler& scaler, std::span<const std::vector<std::size_t>> resamples, int jobs) {
  if (resamples.size() < 2) throw ConfigError("bootstrap: need at least 2 replicates");
  std::vector<double> psi(resamples.size());
  parallel_for(resamples.size(), jobs, [&](std::size_t b) {
    const auto& rows = resamples[b];
    psi[b] = point_estimate(method, data.subset(rows), subset_table(table, rows), scaler);
  });
  const double se = std::sqrt(centered_ss(psi) / static_cast<double>(psi.size() - 1));
  return {se, !(se > 0.0)};
}

StdErr variance_bootstrap(Method method, const TwoPartDataset& data, const NuisanceTable& table,
                          const OutcomeScaler& scaler, int replicates, std::uint64_t seed, int jobs) {
  if (replicates < 2) throw ConfigError("bootstrap: need at least 2 replicates");
  const std::size_t n = data.rows();
  std::vector<std::vector<std::size_t>> resamples(static_cast<std::size_t>(replicates));
  for (std::size_t b = 0; b < resamples.size(); ++b) {
    Rng rng(stream_seed(seed, 0xb007 + b));
    auto& rows = resamples[b];
    for (int attempt = 0;; ++attempt) {
      rows.resize(n);
      bool any_positive = false;
      for (auto& r : rows) {
        r = rng.below(n);
        any_positive = any_positive || data.delta()[static_cast<Eigen::Index>(r)] == 1.0;
      }
      if (any_positive || method == Method::Aipw) break;
      if (attempt == 10) throw NumericalError("bootstrap: resample without positive outcomes after 10 retries");
    }
  }
  return variance_bootstrap(method, data, table, scaler, resamples, jobs);
}

EstimateReport htmle_from_nuisance(const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
                                   const VarianceOptions& variance) {
  require_two_part(table);
  EstimateReport rep;
  rep.method = Method::Htmle;
  const auto fit = two_step_update(table, data, scaler);
  rep.psi = fit.psi;
  rep.eps_m = fit.m.epsilon;
  rep.eps_q = fit.q.epsilon;
  rep.converged = fit.m.fit.converged && fit.q.fit.converged;
  if (fit.m.fit.used_fallback || fit.q.fit.used_fallback) rep.warnings.push_back("tilt used line-search fallback");

  NuisanceTable tilted = table;
  tilted.m_nat = fit.m.natural;
  tilted.m_shift = fit.m.shifted;
  tilted.q_nat = fit.q.natural;
  tilted.q_shift = fit.q.shifted;
  rep.eif = eif(tilted, data, scaler, rep.psi);
  finish(rep, data, table, scaler, variance);
  return rep;
}

EstimateReport tmle_from_nuisance(const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
                                  const VarianceOptions& variance) {
  EstimateReport rep;
  rep.method = Method::Tmle;
  const auto fit = single_tilt(table, data, scaler);
  rep.psi = fit.psi;
  rep.eps = fit.tilt.epsilon;
  rep.converged = fit.tilt.fit.converged;
  if (fit.tilt.fit.used_fallback) rep.warnings.push_back("tilt used line-search fallback");
  const Vector m_nat = scaler.unscale(fit.tilt.natural);
  const Vector m_shift = scaler.unscale(fit.tilt.shifted);
  rep.eif = (table.r_hat.cwiseProduct(data.y() - m_nat) + m_shift).array() - rep.psi;
  finish(rep, data, table, scaler, variance);
  return rep;
}

EstimateReport aipw_from_nuisance(const TwoPartDataset& data, const NuisanceTable& table, const OutcomeScaler& scaler,
                                  const VarianceOptions& variance) {
  EstimateReport rep;
  rep.method = Method::Aipw;
  rep.psi = aipw_point(table, data, scaler);
  const Vector m_nat = scaler.unscale(table.outcome_nat);
  const Vector m_shift = scaler.unscale(table.outcome_shift);
  rep.eif = (table.r_hat.cwiseProduct(data.y() - m_nat) + m_shift).array() - rep.psi;
  if (rep.psi < 0.0) rep.warnings.push_back("negative estimate for a non-negative outcome (extreme weights)");
  finish(rep, data, table, scaler, variance);
  return rep;
}

std::vector<EstimateReport> estimate(const TwoPartDataset& data, const Policy& policy, std::span<const Method> methods,
                                     const EstimationOptions& options, NuisanceTable* table_out) {
  if (methods.empty()) throw ConfigError("no estimator requested");
  const auto plan = make_plan(data.rows(), options.folds, stream_seed(options.seed, 0x91a7), options.no_crossfit);
  const auto scaler = fit_scaler(data.y(), data.delta(), options.pad);
  NuisanceOptions nuisance = options.nuisance;
  nuisance.two_part = std::find(methods.begin(), methods.end(), Method::Htmle) != methods.end();
  nuisance.single_outcome = std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::Htmle; });
  NuisanceTable table = estimate_nuisance(plan, data, policy, scaler, nuisance);

  VarianceOptions variance = options.variance;
  variance.seed = stream_seed(options.seed, 0xb0b0);
  std::vector<EstimateReport> out;
  for (auto m : methods) {
    EstimateReport rep;
    switch (m) {
      case Method::Htmle: rep = htmle_from_nuisance(data, table, scaler, variance); break;
      case Method::Tmle: rep = tmle_from_nuisance(data, table, scaler, variance); break;
      case Method::Aipw: rep = aipw_from_nuisance(data, table, scaler, variance); break;
    }
    rep.policy = policy.describe();
    if (scaler.clamped() > 0) rep.warnings.push_back("outcome values above the scaling bound were clamped");
    out.push_back(std::move(rep));
  }
  if (table_out) *table_out = std::move(table);
  return out;
}

namespace {

EstimateReport run_one(Method m, const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                       const EstimationOptions& options) {
  if (plan.rows() != data.rows()) throw ConfigError("plan and dataset sizes differ");
  const auto scaler = fit_scaler(data.y(), data.delta(), options.pad);
  NuisanceOptions nuisance = options.nuisance;
  nuisance.two_part = m == Method::Htmle;
  nuisance.single_outcome = m != Method::Htmle;
  const auto table = estimate_nuisance(plan, data, policy, scaler, nuisance);
  EstimateReport rep;
  switch (m) {
    case Method::Htmle: rep = htmle_from_nuisance(data, table, scaler, options.variance); break;
    case Method::Tmle: rep = tmle_from_nuisance(data, table, scaler, options.variance); break;
    case Method::Aipw: rep = aipw_from_nuisance(data, table, scaler, options.variance); break;
  }
  rep.policy = policy.describe();
  return rep;
}

}  // namespace

EstimateReport htmle(const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                     const EstimationOptions& options) {
  return run_one(Method::Htmle, data, policy, plan, options);
}

EstimateReport tmle_standard(const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                             const EstimationOptions& options) {
  return run_one(Method::Tmle, data, policy, plan, options);
}

EstimateReport aipw(const TwoPartDataset& data, const Policy& policy, const CrossFitPlan& plan,
                    const EstimationOptions& options) {
  return run_one(Method::Aipw, data, policy, plan, options);
}

}  // namespace htmle
