#include <doctest.h>

#include <drate/dgp.hpp>
#include <drate/error.hpp>
#include <drate/glm.hpp>

#include <cmath>

using namespace drate;

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index n, Eigen::Index p, Rng& rng) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
  return x;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

}  // namespace

TEST_CASE("ols recovers an exact affine map") {
  Rng rng(41);
  const auto x = normal_matrix(50, 3, rng);
  const Eigen::Vector3d b(1.5, -2.0, 0.25);
  const Eigen::VectorXd y = (x * b).array() + 0.7;
  const auto m = fit_ols(x, y);
  CHECK((m.coefficients - b).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(m.intercept - 0.7) < 1e-8);
}

TEST_CASE("ols on Example 2 arm 0 within 4 SE") {
  const auto spec = make_dgp(DgpKind::Example2, 10);
  Rng rng(42);
  const auto data = generate(spec, 100000, rng);
  const auto m = fit_ols(data.x, *data.y0);
  const Eigen::MatrixXd z = with_intercept(data.x);
  Eigen::VectorXd coef(11);
  coef << m.intercept, m.coefficients;
  const Eigen::VectorXd resid = *data.y0 - z * coef;
  const double s2 = resid.squaredNorm() / (100000 - 11);
  const Eigen::VectorXd se = (s2 * (z.transpose() * z).inverse()).diagonal().cwiseSqrt();
  CHECK(std::abs(m.intercept) < 4 * se(0));
  for (int j = 0; j < 10; ++j) CHECK(std::abs(m.coefficients(j) - spec.beta0(j)) < 4 * se(j + 1));
}

TEST_CASE("ols residuals are orthogonal to the design") {
  Rng rng(43);
  const auto x = normal_matrix(500, 4, rng);
  Eigen::VectorXd y(500);
  for (int i = 0; i < 500; ++i) y(i) = std::exp(x(i, 0)) + rng.normal();
  const auto m = fit_ols(x, y);
  const Eigen::VectorXd r = y - predict_linear(m, x);
  const Eigen::MatrixXd z = with_intercept(x);
  for (int j = 0; j < z.cols(); ++j) CHECK(std::abs(z.col(j).dot(r)) <= 1e-6 * z.col(j).norm() * y.norm());
}

TEST_CASE("ols errors") {
  Rng rng(44);
  Eigen::MatrixXd x = normal_matrix(30, 3, rng);
  x.col(2) = x.col(0);
  const Eigen::VectorXd y = x.col(1);
  CHECK_THROWS_AS(fit_ols(x, y), SingularDesign);
  try {
    fit_ols(x, y);
  } catch (const SingularDesign& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(fit_ols(normal_matrix(4, 3, rng), Eigen::VectorXd::Zero(4)), InvalidInput);
  CHECK_THROWS_AS(fit_ols(normal_matrix(10, 2, rng), Eigen::VectorXd::Zero(9)), InvalidInput);
}

TEST_CASE("logistic recovers gamma within 4 SE") {
  const auto spec = make_dgp(DgpKind::Example2, 10);
  Rng rng(45);
  const auto data = generate(spec, 100000, rng);
  const auto m = fit_logistic(data.x, data.d);
  CHECK(m.converged);
  CHECK_FALSE(m.degenerate);
  const Eigen::MatrixXd z = with_intercept(data.x);
  Eigen::VectorXd truth(11);
  truth << 0.0, spec.gamma;
  const Eigen::ArrayXd pr = 1.0 / (1.0 + (-(z * truth).array()).exp());
  const Eigen::MatrixXd info = z.transpose() * (pr * (1 - pr)).matrix().asDiagonal() * z;
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
  CHECK(std::abs(m.intercept) < 4 * se(0));
  for (int j = 0; j < 10; ++j) CHECK(std::abs(m.coefficients(j) - spec.gamma(j)) < 4 * se(j + 1));
}

TEST_CASE("logistic log-likelihood never decreases") {
  Rng rng(46);
  const auto x = normal_matrix(2000, 3, rng);
  Eigen::VectorXi d(2000);
  for (int i = 0; i < 2000; ++i) d(i) = rng.bernoulli(1.0 / (1.0 + std::exp(-(2 * x(i, 0) - x(i, 2)))));
  const auto m = fit_logistic(x, d);
  REQUIRE(m.loglik_trace.size() >= 2);
  for (std::size_t k = 1; k < m.loglik_trace.size(); ++k) CHECK(m.loglik_trace[k] >= m.loglik_trace[k - 1]);
  CHECK(m.loglik_trace.back() == doctest::Approx(logistic_loglik(x, d, m.coefficients, m.intercept)));
}

TEST_CASE("logistic optimum beats random parameters") {
  Eigen::MatrixXd x(6, 1);
  x << -2, -1, 0, 0.5, 1, 2;
  Eigen::VectorXi d(6);
  d << 0, 1, 0, 1, 0, 1;
  const auto m = fit_logistic(x, d);
  CHECK(m.converged);
  const double best = logistic_loglik(x, d, m.coefficients, m.intercept);
  Rng rng(47);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd c(1);
    c << 3 * rng.normal();
    CHECK(best >= logistic_loglik(x, d, c, 3 * rng.normal()));
  }
}

TEST_CASE("logistic degenerate cases are flagged") {
  Rng rng(48);
  const auto x = normal_matrix(40, 2, rng);
  const auto all_one = fit_logistic(x, Eigen::VectorXi::Ones(40));
  CHECK(all_one.degenerate);
  CHECK(all_one.coefficients.isZero());

  Eigen::VectorXi sep(40);
  for (int i = 0; i < 40; ++i) sep(i) = x(i, 0) > 0;
  const auto s = fit_logistic(x, sep);
  CHECK(s.degenerate);
  CHECK_FALSE(s.converged);
  const auto p = predict_proba(s, x);
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.maxCoeff() < 1.0);
}

TEST_CASE("predictions") {
  LinearModel lm{Eigen::VectorXd::Zero(2), 1.25};
  Rng rng(49);
  const auto x = normal_matrix(5, 2, rng);
  CHECK((predict_linear(lm, x).array() == 1.25).all());
  LogisticModel gm;
  gm.coefficients = Eigen::VectorXd::Zero(2);
  gm.intercept = 0.4;
  CHECK(predict_proba(gm, x)(0) == doctest::Approx(1.0 / (1.0 + std::exp(-0.4))));

  gm.coefficients << 50, -50;
  const auto p = predict_proba(gm, x * 100);
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.maxCoeff() < 1.0);

  // appended zero feature with zero coefficient changes nothing
  LinearModel wide{Eigen::Vector3d(0.5, -1, 0), 0.2};
  LinearModel narrow{Eigen::Vector2d(0.5, -1), 0.2};
  Eigen::MatrixXd xw(5, 3);
  xw << x, Eigen::VectorXd::Zero(5);
  CHECK(predict_linear(wide, xw) == predict_linear(narrow, x));

  CHECK_THROWS_AS(predict_linear(lm, normal_matrix(3, 3, rng)), InvalidInput);
  CHECK_THROWS_AS(predict_proba(gm, normal_matrix(3, 1, rng)), InvalidInput);
}

TEST_CASE("fits are deterministic and export to json") {
  Rng rng(50);
  const auto x = normal_matrix(300, 2, rng);
  Eigen::VectorXi d(300);
  for (int i = 0; i < 300; ++i) d(i) = rng.bernoulli(0.4);
  const auto a = fit_logistic(x, d), b = fit_logistic(x, d);
  CHECK(a.coefficients == b.coefficients);
  const auto j = logistic_to_json(a);
  CHECK(j.at("coefficients").size() == 2);
  CHECK(j.contains("converged"));
  CHECK(linear_to_json(fit_ols(x, x.col(0) + x.col(1))).at("coefficients").size() == 2);
}

TEST_CASE("no intercept option") {
  Rng rng(51);
  const auto x = normal_matrix(200, 2, rng);
  const Eigen::VectorXd y = x.col(0) * 2.0;
  const auto m = fit_ols(x, y, false);
  CHECK(m.intercept == 0.0);
  CHECK(m.coefficients(0) == doctest::Approx(2.0));
}
