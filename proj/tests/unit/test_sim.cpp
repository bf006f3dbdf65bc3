#include <doctest.h>

#include "htmle/sim.hpp"
#include "oracle.hpp"

#include <cmath>

using namespace htmle;

namespace {

double row_mu(const TwoPartDataset& d, Eigen::Index i) {
  const double x[4] = {d.x()(i, 0), d.x()(i, 1), d.x()(i, 2), d.x()(i, 3)};
  return oracle::mu(d.t()[i], x);
}

sim::StudyConfig small_study() {
  sim::StudyConfig cfg;
  cfg.sizes = {300};
  cfg.replicates = 3;
  cfg.oracle_draws = 100000;
  cfg.estimation.folds = 3;
  return cfg;
}

}  // namespace

TEST_CASE("generation is reproducible and non-negative") {
  const auto a = sim::generate({2000, 0.0, -2.0, 5});
  const auto b = sim::generate({2000, 0.0, -2.0, 5});
  const auto c = sim::generate({2000, 0.0, -2.0, 6});
  CHECK((a.x().array() == b.x().array()).all());
  CHECK((a.y().array() == b.y().array()).all());
  CHECK((a.t().array() == b.t().array()).all());
  CHECK_FALSE((a.y().array() == c.y().array()).all());
  CHECK(a.y().minCoeff() >= 0.0);
  CHECK(a.covariates() == 4);
}

TEST_CASE("treatment frequency matches the propensity model") {
  const auto data = sim::generate({1'000'000, 0.0, 0.0, 7});
  const auto truth = oracle::over_x([](const double* x) { return oracle::g1(x, 0.0); }, 2'000'000, 3);
  CHECK(std::abs(data.t().mean() - truth.mean) < 0.005);
}

TEST_CASE("hurdle frequency among the treated matches the hurdle model") {
  const auto data = sim::generate({1'000'000, 0.0, 0.0, 8});
  double pos = 0.0, treated = 0.0;
  for (Eigen::Index i = 0; i < data.t().size(); ++i) {
    if (data.t()[i] == 1.0) {
      treated += 1.0;
      pos += data.delta()[i];
    }
  }
  const auto num = oracle::over_x([](const double* x) { return oracle::g1(x, 0.0) * oracle::q(1.0, x, 0.0); },
                                  4'000'000, 4);
  const auto den = oracle::over_x([](const double* x) { return oracle::g1(x, 0.0); }, 4'000'000, 4);
  CHECK(std::abs(pos / treated - num.mean / den.mean) < 0.005);
}

TEST_CASE("intensity noise has unit mean") {
  const auto data = sim::generate({100000, 0.0, 0.0, 9});
  double sum = 0.0, count = 0.0;
  for (Eigen::Index i = 0; i < data.y().size(); ++i) {
    if (data.delta()[i] == 1.0) {
      const double u = data.y()[i] - row_mu(data, i);
      CHECK(u >= 0.0);
      sum += u;
      count += 1.0;
    }
  }
  CHECK(std::abs(sum / count - 1.0) < 0.02);
}

TEST_CASE("component functions match the model formulas") {
  const double x[4] = {0.3, -1.2, 0.8, 2.0};
  CHECK(sim::propensity(x, -3.0) == doctest::Approx(oracle::g1(x, -3.0)).epsilon(1e-14));
  CHECK(sim::hurdle(1.0, x, -2.0) == doctest::Approx(oracle::q(1.0, x, -2.0)).epsilon(1e-14));
  CHECK(sim::intensity(0.0, x) == doctest::Approx(oracle::m(0.0, x)).epsilon(1e-14));
}

TEST_CASE("true value under treating everyone") {
  const double psi0 = sim::true_psi(Policy::static_value(1.0), 0.0, 2'000'000, 1);
  const double psi2 = sim::true_psi(Policy::static_value(1.0), -2.0, 2'000'000, 1);
  CHECK(std::abs(psi0 - 11.99) < 0.05);
  CHECK(std::abs(psi2 - 7.45) < 0.05);

  const auto ref = oracle::over_x([](const double* x) { return oracle::q(1.0, x, 0.0) * oracle::m(1.0, x); },
                                  2'000'000, 5);
  CHECK(std::abs(psi0 - ref.mean) < 0.05);
}

TEST_CASE("identity-policy truth equals the population mean of Y") {
  const double psi = sim::true_psi(Policy::identity(), 0.0, 2'000'000, 2);
  double sum = 0.0, sum2 = 0.0, n = 0.0;
  for (std::uint64_t chunk = 0; chunk < 10; ++chunk) {
    const auto data = sim::generate({1'000'000, 0.0, 0.0, 100 + chunk});
    sum += data.y().sum();
    sum2 += data.y().squaredNorm();
    n += static_cast<double>(data.rows());
  }
  const double mean = sum / n;
  const double se_sample = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(psi - mean) < 4.0 * se_sample + 0.02);
}

TEST_CASE("metrics satisfy the MSE decomposition") {
  const std::vector<double> psi{10.0, 12.5, 11.5, 13.0, 9.5};
  const std::vector<double> se{1.0, 1.0, 0.1, 2.0, 1.0};
  const auto m = sim::summarize(Method::Htmle, psi, se, 11.0);
  const double r = static_cast<double>(psi.size());
  CHECK(m.mean_psi == doctest::Approx(11.3));
  CHECK(m.abs_bias == doctest::Approx(0.3));
  CHECK(m.mse == doctest::Approx(m.abs_bias * m.abs_bias + m.mc_variance * (r - 1.0) / r).epsilon(1e-12));
  // |psi - 11| <= 1.96 se: rows 0, 1, 3, 4 cover; row 2 misses.
  CHECK(m.coverage == doctest::Approx(0.8));
  CHECK(m.successes == 5);
}

TEST_CASE("identical replicate seeds give zero Monte Carlo variance") {
  auto cfg = small_study();
  cfg.replicates = 2;
  cfg.seed_stride = 0;
  const auto res = sim::run_study(cfg);
  REQUIRE(res.cells.size() == 1);
  for (const auto& m : res.cells[0].metrics) {
    CHECK(m.successes == 2);
    CHECK(m.mc_variance == 0.0);
  }
}

TEST_CASE("study output is reproducible and independent of worker count") {
  auto cfg = small_study();
  const auto a = sim::study_csv(sim::run_study(cfg));
  cfg.jobs = 3;
  const auto b = sim::study_csv(sim::run_study(cfg));
  CHECK(a == b);
  CHECK(a.rfind("n,beta_p,alpha_delta,estimator", 0) == 0);
}

TEST_CASE("study table lists every metric") {
  auto cfg = small_study();
  cfg.beta_ps = {0.0, -3.0};
  const auto res = sim::run_study(cfg);
  CHECK(res.cells.size() == 2);
  const auto table = sim::study_table(res);
  for (const char* label : {"|Bias|", "Var.", "MSE", "Coverage", "htmle(0)", "aipw(-3)"}) {
    CHECK(table.find(label) != std::string::npos);
  }
}

TEST_CASE("failed replicates are counted rather than aborting the study") {
  auto cfg = small_study();
  cfg.estimation.nuisance.learners.hurdle.clear();
  const auto res = sim::run_study(cfg);
  for (const auto& m : res.cells[0].metrics) {
    CHECK(m.failures == cfg.replicates);
    CHECK(m.successes == 0);
  }
  CHECK_FALSE(res.cells[0].failure_messages.empty());
}
