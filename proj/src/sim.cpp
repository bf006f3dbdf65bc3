#include "htmle/sim.hpp"

#include "htmle/error.hpp"
#include "htmle/learners.hpp"
#include "htmle/parallel.hpp"
#include "htmle/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace htmle::sim {

double propensity(const double* x, double beta_p) {
  return expit(beta_p - x[0] + 0.5 * x[1] - 0.25 * x[2] - 0.1 * x[3]);
}

double hurdle(double t, const double* x, double alpha_delta) {
  return expit(alpha_delta - 0.4 * x[0] * x[0] + 0.1 * x[1] + 0.8 * x[2] - 0.3 * x[3] + 2.0 * t);
}

namespace {

double intensity_linear(double t, const double* x) {
  return 0.1 + 0.2 * x[0] + 0.4 * x[1] + 0.8 * x[2] + 0.3 * x[3] + 2.0 * t;
}

}  // namespace

double intensity(double t, const double* x) { return std::exp(intensity_linear(t, x)) + 1.0; }

TwoPartDataset generate(const DgmConfig& config) {
  if (config.n < 1) throw ConfigError("generate: n must be at least 1");
  const auto n = static_cast<Eigen::Index>(config.n);
  Rng rng(stream_seed(config.seed, 0xd6a));
  Matrix x(n, kCovariates);
  Vector t(n), y(n);
  double row[kCovariates];
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < kCovariates; ++j) {
      row[j] = rng.normal();
      x(i, j) = row[j];
    }
    t[i] = rng.bernoulli(propensity(row, config.beta_p)) ? 1.0 : 0.0;
    const bool positive = rng.bernoulli(hurdle(t[i], row, config.alpha_delta));
    const double u = rng.exponential(1.0);
    const double s = std::exp(intensity_linear(t[i], row)) + u;
    y[i] = positive ? s : 0.0;
  }
  return TwoPartDataset(std::move(x), std::move(t), std::move(y));
}

double true_psi(const Policy& policy, double alpha_delta, std::size_t n_oracle, std::uint64_t seed, double beta_p) {
  if (n_oracle < 1) throw ConfigError("true_psi: need at least one draw");
  Rng rng(stream_seed(seed, 0x0a11));
  constexpr std::size_t kChunk = 1 << 16;
  double total = 0.0;
  Matrix x(static_cast<Eigen::Index>(std::min(kChunk, n_oracle)), kCovariates);
  Vector t(x.rows());
  for (std::size_t start = 0; start < n_oracle; start += kChunk) {
    const std::size_t len = std::min(kChunk, n_oracle - start);
    const auto m = static_cast<Eigen::Index>(len);
    if (x.rows() != m) {
      x.resize(m, kCovariates);
      t.resize(m);
    }
    double row[kCovariates];
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int j = 0; j < kCovariates; ++j) {
        row[j] = rng.normal();
        x(i, j) = row[j];
      }
      t[i] = rng.bernoulli(propensity(row, beta_p)) ? 1.0 : 0.0;
    }
    const Vector td = policy.apply(t, x, start);
    double chunk = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (int j = 0; j < kCovariates; ++j) row[j] = x(i, j);
      chunk += hurdle(td[i], row, alpha_delta) * intensity(td[i], row);
    }
    total += chunk;
  }
  return total / static_cast<double>(n_oracle);
}

EstimatorMetrics summarize(Method method, const std::vector<double>& psi, const std::vector<double>& std_err,
                           double psi_true, int failures) {
  EstimatorMetrics out;
  out.method = method;
  out.failures = failures;
  out.successes = static_cast<int>(psi.size());
  if (psi.empty()) {
    out.abs_bias = out.mc_variance = out.mse = out.coverage = out.mean_psi = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double r = static_cast<double>(psi.size());
  double mean = 0.0, se_mean = 0.0, sq_err = 0.0, covered = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    mean += psi[k];
    se_mean += std_err[k];
    sq_err += (psi[k] - psi_true) * (psi[k] - psi_true);
    const double half = 1.959963984540054 * std_err[k];
    if (psi[k] - half <= psi_true && psi_true <= psi[k] + half) covered += 1.0;
  }
  mean /= r;
  double ss = 0.0;
  for (double v : psi) ss += (v - mean) * (v - mean);
  out.mean_psi = mean;
  out.mean_std_err = se_mean / r;
  out.abs_bias = std::abs(mean - psi_true);
  out.mc_variance = psi.size() > 1 ? ss / (r - 1.0) : 0.0;
  out.mse = sq_err / r;
  out.coverage = covered / r;
  return out;
}

StudyResult run_study(const StudyConfig& config) {
  if (config.replicates < 2) throw ConfigError("run_study: need at least 2 replicates");
  if (config.methods.empty()) throw ConfigError("run_study: no estimators");
  StudyResult result;
  result.replicates = config.replicates;
  result.policy = config.policy.describe();

  // Oracle values depend only on (alpha_delta, beta_p) for a fixed policy.
  std::map<std::pair<double, double>, double> truth;
  for (double alpha : config.alpha_deltas) {
    for (double beta : config.beta_ps) {
      auto key = std::make_pair(alpha, beta);
      if (!truth.contains(key)) truth[key] = true_psi(config.policy, alpha, config.oracle_draws, config.seed, beta);
    }
  }

  struct Outcome {
    std::vector<double> psi, se;
    std::vector<bool> ok;
    std::string error;
  };

  for (std::size_t n : config.sizes) {
    for (double alpha : config.alpha_deltas) {
      for (double beta : config.beta_ps) {
        StudyCell cell;
        cell.dgm = DgmConfig{n, beta, alpha, 0};
        cell.psi_true = truth.at({alpha, beta});
        std::vector<Outcome> outcomes(static_cast<std::size_t>(config.replicates));
        parallel_for(outcomes.size(), config.jobs, [&](std::size_t b) {
          Outcome& o = outcomes[b];
          o.psi.assign(config.methods.size(), 0.0);
          o.se.assign(config.methods.size(), 0.0);
          o.ok.assign(config.methods.size(), false);
          const std::uint64_t seed = config.seed + b * config.seed_stride;
          try {
            const auto data = generate(DgmConfig{n, beta, alpha, seed});
            EstimationOptions opts = config.estimation;
            opts.seed = seed;
            opts.variance.jobs = 1;
            const auto reports = estimate(data, config.policy, config.methods, opts);
            for (std::size_t k = 0; k < reports.size(); ++k) {
              if (std::isfinite(reports[k].psi) && std::isfinite(reports[k].std_err)) {
                o.psi[k] = reports[k].psi;
                o.se[k] = reports[k].std_err;
                o.ok[k] = true;
              }
            }
          } catch (const std::exception& e) {
            o.error = "replicate " + std::to_string(b) + ": " + e.what();
          }
        });
        for (std::size_t k = 0; k < config.methods.size(); ++k) {
          std::vector<double> psi, se;
          int failures = 0;
          for (const auto& o : outcomes) {
            if (o.ok[k]) {
              psi.push_back(o.psi[k]);
              se.push_back(o.se[k]);
            } else {
              ++failures;
            }
          }
          cell.metrics.push_back(summarize(config.methods[k], psi, se, cell.psi_true, failures));
          cell.estimates.push_back(std::move(psi));
        }
        for (const auto& o : outcomes) {
          if (!o.error.empty()) cell.failure_messages.push_back(o.error);
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

std::string study_csv(const StudyResult& result) {
  std::ostringstream os;
  os << "n,beta_p,alpha_delta,estimator,psi_true,abs_bias,mc_variance,mse,coverage,mean_psi,mean_std_err,replicates,"
        "failures\n";
  os << std::setprecision(10);
  for (const auto& cell : result.cells) {
    for (const auto& m : cell.metrics) {
      os << cell.dgm.n << ',' << cell.dgm.beta_p << ',' << cell.dgm.alpha_delta << ',' << method_name(m.method) << ','
         << cell.psi_true << ',' << m.abs_bias << ',' << m.mc_variance << ',' << m.mse << ',' << m.coverage << ','
         << m.mean_psi << ',' << m.mean_std_err << ',' << m.successes << ',' << m.failures << '\n';
    }
  }
  return os.str();
}

std::string study_table(const StudyResult& result) {
  std::vector<std::size_t> sizes;
  std::vector<double> alphas, betas;
  std::vector<Method> methods;
  for (const auto& c : result.cells) {
    if (std::find(sizes.begin(), sizes.end(), c.dgm.n) == sizes.end()) sizes.push_back(c.dgm.n);
    if (std::find(alphas.begin(), alphas.end(), c.dgm.alpha_delta) == alphas.end()) alphas.push_back(c.dgm.alpha_delta);
    if (std::find(betas.begin(), betas.end(), c.dgm.beta_p) == betas.end()) betas.push_back(c.dgm.beta_p);
    for (const auto& m : c.metrics) {
      if (std::find(methods.begin(), methods.end(), m.method) == methods.end()) methods.push_back(m.method);
    }
  }
  auto find = [&](std::size_t n, double a, double b, Method m) -> const EstimatorMetrics* {
    for (const auto& c : result.cells) {
      if (c.dgm.n == n && c.dgm.alpha_delta == a && c.dgm.beta_p == b) {
        for (const auto& x : c.metrics) {
          if (x.method == m) return &x;
        }
      }
    }
    return nullptr;
  };
  auto truth = [&](double a) {
    for (const auto& c : result.cells) {
      if (c.dgm.alpha_delta == a) return c.psi_true;
    }
    return 0.0;
  };

  std::ostringstream os;
  os << std::fixed;
  constexpr int kCol = 10;
  for (double a : alphas) {
    os << "alpha_delta = " << std::setprecision(2) << a << "; policy " << result.policy << "; psi ~ "
       << std::setprecision(2) << truth(a) << "; " << result.replicates << " replicates\n";
    os << std::setw(7) << "n" << std::setw(10) << "";
    for (auto m : methods) {
      for (double b : betas) {
        std::ostringstream h;
        h << method_name(m) << "(" << std::setprecision(0) << std::fixed << b << ")";
        os << std::setw(kCol + 4) << h.str();
      }
    }
    os << '\n';
    for (std::size_t n : sizes) {
      const char* labels[] = {"|Bias|", "Var.", "MSE", "Coverage"};
      for (int row = 0; row < 4; ++row) {
        os << std::setw(7) << (row == 0 ? std::to_string(n) : std::string{}) << std::setw(10) << labels[row];
        for (auto m : methods) {
          for (double b : betas) {
            const auto* x = find(n, a, b, m);
            os << std::setw(kCol + 4) << std::setprecision(2);
            if (!x) {
              os << "-";
              continue;
            }
            const double v[] = {x->abs_bias, x->mc_variance, x->mse, x->coverage};
            os << v[row];
          }
        }
        os << '\n';
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace htmle::sim
