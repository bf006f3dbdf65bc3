#include <doctest.h>

#include "htmle/error.hpp"
#include "htmle/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace htmle;

namespace {

// Score of the fit on the raw expanded basis: X' W (y - mu).
Vector raw_score(const FittedModel& model, const Matrix& features, const Vector& y, const Vector& w,
                 const Vector& offset) {
  const Vector mu = model.spec().family == Family::BinomialLogit
                        ? model.linear_predictor(features, &offset).unaryExpr([](double v) { return expit(v); })
                        : Vector(model.linear_predictor(features, &offset));
  const Vector resid = w.cwiseProduct(y - mu);
  const auto& layout = model.layout();
  const Eigen::Index p = features.cols();
  const auto squares = static_cast<Eigen::Index>(layout.squared.size());
  Matrix basis(features.rows(), 1 + p + squares);
  basis.col(0).setOnes();
  basis.middleCols(1, p) = features;
  for (Eigen::Index k = 0; k < squares; ++k) basis.col(1 + p + k) = features.col(layout.squared[k]).array().square();
  return basis.transpose() * resid;
}

}  // namespace

TEST_CASE("intercept-only binomial on a constant half response gives zero") {
  const Eigen::Index n = 50;
  const auto m = fit_glm({Family::BinomialLogit, Basis::InterceptOnly}, Matrix::Zero(n, 2), Vector::Constant(n, 0.5));
  CHECK(std::abs(m.coefficients()[0]) < 1e-12);
  CHECK(m.diagnostics().converged);
}

TEST_CASE("gaussian identity recovers exact linear coefficients") {
  std::mt19937_64 eng(1);
  std::normal_distribution<double> z;
  const Eigen::Index n = 40;
  Matrix x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = z(eng);
  }
  const Vector y = (1.5 + 2.0 * x.col(0).array() - 0.75 * x.col(1).array() + 0.1 * x.col(2).array()).matrix();
  GlmSpec spec{Family::GaussianIdentity, Basis::MainEffects};
  spec.ridge = 0.0;
  const auto m = fit_glm(spec, x, y);
  const Vector b = m.raw_coefficients();
  CHECK(std::abs(b[0] - 1.5) < 1e-8);
  CHECK(std::abs(b[1] - 2.0) < 1e-8);
  CHECK(std::abs(b[2] + 0.75) < 1e-8);
  CHECK(std::abs(b[3] - 0.1) < 1e-8);
}

TEST_CASE("binomial fit recovers simulated logistic coefficients") {
  std::mt19937_64 eng(2);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const Eigen::Index n = 100000;
  Matrix x(n, 1);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = z(eng);
    y[i] = u(eng) < 1.0 / (1.0 + std::exp(-(0.3 - 0.7 * x(i, 0)))) ? 1.0 : 0.0;
  }
  const auto m = fit_glm({Family::BinomialLogit, Basis::MainEffects}, x, y);
  const Vector b = m.raw_coefficients();
  CHECK(std::abs(b[0] - 0.3) < 0.05);
  CHECK(std::abs(b[1] + 0.7) < 0.05);
}

TEST_CASE("gaussian log fit recovers an exponential mean") {
  std::mt19937_64 eng(3);
  std::normal_distribution<double> z;
  const Eigen::Index n = 2000;
  Matrix x(n, 1);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = z(eng);
    y[i] = std::exp(0.5 + 0.3 * x(i, 0)) + 0.1 * z(eng);
  }
  const auto m = fit_glm({Family::GaussianLog, Basis::MainEffects}, x, y);
  const Vector b = m.raw_coefficients();
  CHECK(std::abs(b[0] - 0.5) < 0.02);
  CHECK(std::abs(b[1] - 0.3) < 0.02);
}

TEST_CASE("predictions with an offset") {
  const Eigen::Index n = 4;
  GlmSpec spec{Family::BinomialLogit, Basis::InterceptOnly};
  const auto zero = fit_glm(spec, Matrix::Zero(n, 1), Vector::Constant(n, 0.5));
  const Vector off = Vector::Constant(1, logit(0.3));
  CHECK(predict(zero, Matrix::Zero(1, 1), &off)[0] == doctest::Approx(0.3).epsilon(1e-12));

  Matrix x(6, 1);
  x << -1, 0, 1, 2, -2, 0.5;
  Vector y(6);
  y << 0.1, 0.4, 0.6, 0.9, 0.05, 0.5;
  const auto m = fit_glm({Family::BinomialLogit, Basis::MainEffects}, x, y);
  const Vector b = m.raw_coefficients();
  Vector offs(6);
  offs << 0.3, -0.2, 1.0, 0.0, -1.5, 2.0;
  const Vector p = predict(m, x, &offs);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double hand = 1.0 / (1.0 + std::exp(-(b[0] + b[1] * x(i, 0) + offs[i])));
    CHECK(p[i] == doctest::Approx(hand).epsilon(1e-12));
  }

  double last = 0.0;
  for (double o = -5.0; o <= 5.0; o += 0.5) {
    const Vector oo = Vector::Constant(1, o);
    const double v = predict(m, x.topRows(1), &oo)[0];
    CHECK(v > last);
    last = v;
  }
}

TEST_CASE("binomial predictions are clipped") {
  Matrix x(4, 1);
  x << 0, 1, 2, 3;
  Vector y(4);
  y << 0.2, 0.4, 0.6, 0.8;
  const auto m = fit_glm({Family::BinomialLogit, Basis::MainEffects}, x, y);
  Matrix far(2, 1);
  far << -1e3, 1e3;
  const Vector p = predict(m, far);
  CHECK(p[0] == kProbClip);
  CHECK(p[1] == 1.0 - kProbClip);
}

TEST_CASE("fit and predict errors") {
  const Matrix x = Matrix::Ones(3, 2);
  const Vector y = Vector::Constant(3, 0.5);
  CHECK_THROWS_AS(fit_glm({}, x, y, Vector::Zero(3), Vector::Zero(3)), DataError);
  Matrix bad = x;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit_glm({}, bad, y), DataError);
  CHECK_THROWS_AS(fit_glm({}, x, Vector::Constant(2, 0.5)), DataError);
  const auto m = fit_glm({}, x, y);
  CHECK_THROWS_AS(predict(m, Matrix::Ones(3, 3)), DataError);
}

TEST_CASE("unpenalized IRLS solves its score equations") {
  std::mt19937_64 eng(4);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const Eigen::Index n = 3000;
  Matrix x(n, 3);
  Vector yb(n), yg(n), w(n), off(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = z(eng);
    x(i, 2) = u(eng) < 0.5 ? 1.0 : 0.0;
    const double eta = -0.2 + 0.5 * x(i, 0) - 0.4 * x(i, 1) * x(i, 1) + x(i, 2);
    yb[i] = u(eng) < expit(eta) ? 1.0 : 0.0;
    yg[i] = eta + z(eng);
    w[i] = 0.5 + u(eng);
    off[i] = 0.3 * z(eng);
  }
  for (const auto basis : {Basis::MainEffects, Basis::MainSquares}) {
    GlmSpec b{Family::BinomialLogit, basis, 0.0};
    const auto mb = fit_glm(b, x, yb, w, off);
    REQUIRE(mb.diagnostics().converged);
    CHECK(raw_score(mb, x, yb, w, off).cwiseAbs().maxCoeff() < b.tol);

    GlmSpec g{Family::GaussianIdentity, basis, 0.0};
    const auto mg = fit_glm(g, x, yg, w, off);
    REQUIRE(mg.diagnostics().converged);
    CHECK(raw_score(mg, x, yg, w, off).cwiseAbs().maxCoeff() < g.tol);
  }
}

TEST_CASE("squares are added only for non-binary columns") {
  Matrix x(6, 2);
  x << 0.1, 0, 0.5, 1, -0.3, 1, 2.0, 0, 1.1, 1, -1.0, 0;
  const Vector y = Vector::Constant(6, 0.5);
  const auto m = fit_glm({Family::BinomialLogit, Basis::MainSquares}, x, y);
  CHECK(m.layout().squared.size() == 1);
  CHECK(m.coefficients().size() == 4);
  const auto q = fit_glm({Family::BinomialLogit, Basis::Quadratic}, x, y);
  CHECK(q.coefficients().size() == 5);
}

TEST_CASE("predictions do not depend on training row order") {
  std::mt19937_64 eng(5);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const Eigen::Index n = 500;
  Matrix x(n, 2);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = z(eng);
    x(i, 1) = z(eng);
    y[i] = u(eng) < expit(x(i, 0) - x(i, 1) * x(i, 1)) ? 1.0 : 0.0;
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), eng);
  const Matrix xp = x(perm, Eigen::all);
  const Vector yp = y(perm);
  for (const auto basis : {Basis::MainEffects, Basis::MainSquares, Basis::Quadratic}) {
    const auto a = fit_glm({Family::BinomialLogit, basis}, x, y);
    const auto b = fit_glm({Family::BinomialLogit, basis}, xp, yp);
    CHECK((predict(a, x) - predict(b, x)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("selector picks the squared basis for a quadratic signal") {
  std::mt19937_64 eng(6);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const auto lib = binomial_library();
  int picked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 400;
    Matrix x(n, 1);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = z(eng);
      y[i] = u(eng) < expit(1.0 - 1.5 * x(i, 0) * x(i, 0)) ? 1.0 : 0.0;
    }
    const auto best = cv_select(lib, x, y, Vector::Ones(n), 5, Loss::LogLoss);
    if (best.basis == Basis::MainSquares) ++picked;
  }
  CHECK(picked >= 95);
}

TEST_CASE("selector returns the argmin of the cross-validated loss") {
  std::mt19937_64 eng(7);
  std::normal_distribution<double> z;
  const Eigen::Index n = 300;
  Matrix x(n, 2);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = z(eng);
    x(i, 1) = z(eng);
    y[i] = 0.2 * x(i, 0) + 5.0 * z(eng);
  }
  const std::vector<GlmSpec> lib{{Family::GaussianIdentity, Basis::InterceptOnly},
                                 {Family::GaussianIdentity, Basis::MainEffects},
                                 {Family::GaussianIdentity, Basis::MainSquares}};
  const auto sel = cv_select_detail(lib, x, y, Vector::Ones(n), 5, Loss::Mse);
  for (double loss : sel.cv_loss) CHECK(sel.cv_loss[sel.best] <= loss);
}

TEST_CASE("selector ties go to the earlier candidate") {
  const Eigen::Index n = 20;
  const Matrix x = Matrix::Zero(n, 1);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 0.2 : 0.8;
  const std::vector<GlmSpec> lib{{Family::BinomialLogit, Basis::MainEffects},
                                 {Family::BinomialLogit, Basis::MainEffects}};
  const auto sel = cv_select_detail(lib, x, y, Vector::Ones(n), 4, Loss::LogLoss);
  CHECK(sel.cv_loss[0] == sel.cv_loss[1]);
  CHECK(sel.best == 0);
}

TEST_CASE("single candidate is returned unchanged") {
  GlmSpec only{Family::GaussianLog, Basis::MainSquares, 0.5, 7, 1e-3};
  const std::vector<GlmSpec> lib{only};
  const auto got = cv_select(lib, Matrix::Zero(3, 1), Vector::Zero(3), Vector::Ones(3), 2, Loss::Mse);
  CHECK(got.family == only.family);
  CHECK(got.basis == only.basis);
  CHECK(got.ridge == only.ridge);
  CHECK(got.max_iter == only.max_iter);
}

TEST_CASE("selector errors when every candidate fails") {
  const Vector y = Vector::Constant(10, 2.0);  // not a valid binomial response
  CHECK_THROWS_AS(cv_select(binomial_library(), Matrix::Ones(10, 1), y, Vector::Ones(10), 2, Loss::LogLoss),
                  NumericalError);
}

TEST_CASE("tilt solves its weighted score") {
  std::mt19937_64 eng(8);
  std::uniform_real_distribution<double> u;
  const Eigen::Index n = 1000;
  Vector y(n), off(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = u(eng);
    off[i] = logit(0.05 + 0.9 * u(eng));
    w[i] = 3.0 * u(eng);
  }
  const auto fit = solve_tilt(y, off, w);
  double score = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) score += w[i] * (y[i] - expit(fit.epsilon + off[i]));
  CHECK(fit.converged);
  CHECK_FALSE(fit.used_fallback);
  CHECK(std::abs(score) < 1e-8);
}

TEST_CASE("tilt with a constant offset has a closed form") {
  Vector y(5), w(5);
  y << 0.1, 0.3, 0.2, 0.6, 0.4;
  w << 1, 2, 1, 3, 1;
  const Vector off = Vector::Constant(5, logit(0.25));
  const double ybar = w.dot(y) / w.sum();
  const auto fit = solve_tilt(y, off, w);
  CHECK(fit.epsilon == doctest::Approx(logit(ybar) - logit(0.25)).epsilon(1e-9));
}

TEST_CASE("tilt falls back to a line search when IRLS is cut short") {
  Vector y(4), off(4), w(4);
  y << 0.9, 0.95, 0.8, 0.99;
  off << -3, -2, -4, -3;
  w << 1, 1, 1, 1;
  const auto full = solve_tilt(y, off, w);
  const auto cut = solve_tilt(y, off, w, 1e-8, 1);
  CHECK(cut.used_fallback);
  CHECK(cut.epsilon == doctest::Approx(full.epsilon).epsilon(1e-6));
}
