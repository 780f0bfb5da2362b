#include <doctest.h>

#include <drate/aipw.hpp>
#include <drate/error.hpp>

#include <algorithm>
#include <cmath>
#include <set>

using namespace drate;

namespace {

// Phi^-1 by bisection on 0.5 * erfc(-x / sqrt 2).
double bisect_quantile(double p) {
  double lo = -40, hi = 40;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

NuisanceFit constant_fit(double mu0, double mu1, double pi) {
  NuisanceFit f;
  f.mu0 = [mu0](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.rows(), mu0); };
  f.mu1 = [mu1](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.rows(), mu1); };
  f.pi1 = [pi](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.rows(), pi); };
  f.provenance = "constant";
  return f;
}

}  // namespace

TEST_CASE("make_folds partitions evenly and deterministically") {
  Rng rng(61);
  const auto plan = make_folds(10, 2, rng);
  const auto folds = plan.folds();
  REQUIRE(folds.size() == 2);
  CHECK(folds[0].size() == 5);
  CHECK(folds[1].size() == 5);
  std::set<int> all;
  for (const auto& f : folds) all.insert(f.begin(), f.end());
  CHECK(all.size() == 10);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);

  Rng a(5), b(5);
  CHECK(make_folds(101, 3, a).fold_assignment == make_folds(101, 3, b).fold_assignment);
  Rng c(5);
  const auto three = make_folds(101, 3, c).folds();
  std::vector<std::size_t> sizes;
  for (const auto& f : three) sizes.push_back(f.size());
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);

  CHECK_THROWS_AS(make_folds(3, 2, rng), InvalidInput);
  CHECK_THROWS_AS(make_folds(10, 1, rng), InvalidInput);
}

TEST_CASE("aipw_score worked cases") {
  const ClipBounds clip;
  // zero residual leaves the regression term
  CHECK(aipw_score(3.0, 1, 1.0, 3.0, 0.3, clip).psi == doctest::Approx(2.0));
  CHECK(aipw_score(1.0, 0, 1.0, 3.0, 0.3, clip).psi == doctest::Approx(2.0));
  // Horvitz-Thompson form
  CHECK(aipw_score(1.7, 1, 0, 0, 0.5, clip).psi == doctest::Approx(3.4));
  CHECK(aipw_score(1.7, 0, 0, 0, 0.5, clip).psi == doctest::Approx(-3.4));
  // clipping
  const auto t = aipw_score(1.0, 1, 0, 0, 0.001, clip);
  CHECK(t.clipped);
  CHECK(t.psi == doctest::Approx(0.99 * 1.0 / (0.01 * 0.99)));
  CHECK_FALSE(aipw_score(1.0, 1, 0, 0, 0.5, clip).clipped);
  // pieces add up
  const auto s = aipw_score(2.0, 0, 0.5, 1.25, 0.4, clip);
  CHECK(s.regression == doctest::Approx(0.75));
  CHECK(s.correction == doctest::Approx((0 - 0.4) * (2.0 - 0.5) / (0.4 * 0.6)));
  CHECK(s.psi == doctest::Approx(s.regression + s.correction));
  // displayed residual y - pi_d
  CHECK(aipw_score(2.0, 0, 0.5, 1.25, 0.4, clip, true).correction ==
        doctest::Approx((0 - 0.4) * (2.0 - 0.6) / (0.4 * 0.6)));
  CHECK(aipw_score(2.0, 1, 0.5, 1.25, 0.4, clip, true).correction ==
        doctest::Approx((1 - 0.4) * (2.0 - 0.4) / (0.4 * 0.6)));

  CHECK_THROWS_AS(aipw_score(std::nan(""), 1, 0, 0, 0.5, clip), InvalidInput);
  CHECK_THROWS_AS(aipw_score(1.0, 2, 0, 0, 0.5, clip), InvalidInput);
  CHECK_THROWS_AS(ClipBounds({0.6, 0.4}).validate(), InvalidParameter);
}

TEST_CASE("plug-in reduction on fixed inputs") {
  // When d == pi the correction weight (d - pi) vanishes and psi is mu1 - mu0.
  for (double mu0 : {-1.0, 0.0, 2.5})
    for (double mu1 : {0.3, 4.0}) {
      const auto a = aipw_score(7.0, 1, mu0, mu1, 0.99, ClipBounds{0.01, 0.99});
      CHECK(a.regression == doctest::Approx(mu1 - mu0));
      const auto b = aipw_score(-3.0, 0, mu0, mu1, 0.01, ClipBounds{0.01, 0.99});
      CHECK(b.psi == doctest::Approx(b.regression + b.correction));
    }
  ClipBounds clip{0.01, 0.99};
  const auto z = aipw_score(5.0, 1, 1.0, 2.0, 1.0, clip);
  CHECK(z.clipped);
  CHECK(z.psi == doctest::Approx(1.0 + (1 - 0.99) * 3.0 / (0.99 * 0.01)));
}

TEST_CASE("normal_quantile against bisection") {
  CHECK(std::abs(normal_quantile(0.5)) < 1e-12);
  CHECK(std::abs(normal_quantile(0.975) - 1.959964) < 1e-6);
  CHECK(std::abs(normal_quantile(0.025) + 1.959964) < 1e-6);
  for (double p : {1e-10, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.6, 0.9, 0.97575, 0.999, 1 - 1e-6})
    CHECK(std::abs(normal_quantile(p) - bisect_quantile(p)) < 1e-9);
  CHECK_THROWS_AS(normal_quantile(0.0), InvalidInput);
  CHECK_THROWS_AS(normal_quantile(1.0), InvalidInput);
}

TEST_CASE("estimate_ate interval and score bookkeeping") {
  const auto spec = make_dgp(DgpKind::Example1, 2);
  Rng rng(62);
  const auto data = generate(spec, 1000, rng);
  EstimatorConfig cfg;
  Rng er(1);
  const auto est = estimate_ate(data, fixed_fitter(oracle_nuisances(spec)), cfg, er, "oracle");
  CHECK(est.n_eval == 1000);
  CHECK(est.ci_lo <= est.tau_hat);
  CHECK(est.tau_hat <= est.ci_hi);
  const auto& iv = est.influence_values;
  CHECK(std::abs(iv.mean()) < 1e-10);
  const double sd = std::sqrt(iv.squaredNorm() / (iv.size() - 1));
  CHECK(est.std_error == doctest::Approx(sd / std::sqrt(1000.0)));
  CHECK(est.ci_hi - est.tau_hat == doctest::Approx(normal_quantile(0.975) * est.std_error));

  const auto j = ate_to_json(est);
  for (const char* key : {"tau_hat", "std_error", "ci", "level", "n_eval", "clip_hits", "learner", "k_folds", "seed"})
    CHECK(j.contains(key));
  CHECK(j.at("ci").size() == 2);
}

TEST_CASE("oracle AIPW covers at the nominal rate") {
  const auto spec = make_dgp(DgpKind::Example1, 2);
  const auto fitter = fixed_fitter(oracle_nuisances(spec));
  int hits = 0;
  for (int r = 0; r < 500; ++r) {
    Rng rng(derive_seed(7000, static_cast<std::uint64_t>(r)));
    const auto data = generate(spec, 2000, rng);
    const auto est = estimate_ate(data, fitter, EstimatorConfig{}, rng);
    hits += est.ci_lo <= 1.0 && 1.0 <= est.ci_hi;
  }
  const double cov = hits / 5.0;
  CHECK(cov >= 92.0);
  CHECK(cov <= 98.0);
}

TEST_CASE("single split mode scores only the second sample") {
  const auto spec = make_dgp(DgpKind::Example2, 6);
  Rng rng(63);
  const auto data = generate(spec, 1000, rng);
  EstimatorConfig cfg;
  cfg.k_folds = 1;
  cfg.split_fraction = 0.5;
  std::vector<Eigen::Index> fit_sizes;
  NuisanceFitter spy = [&](const Eigen::MatrixXd& x, const Eigen::VectorXi&, const Eigen::VectorXd&, std::uint64_t) {
    fit_sizes.push_back(x.rows());
    return oracle_nuisances(spec);
  };
  const auto est = estimate_ate(data, spy, cfg, rng);
  CHECK(est.n_eval == 500);
  REQUIRE(fit_sizes.size() == 1);
  CHECK(fit_sizes[0] == 500);

  EstimatorConfig bad;
  bad.k_folds = 1;
  CHECK_THROWS_AS(bad.validate(), InvalidParameter);
}

TEST_CASE("translation equivariance with oracle nuisances") {
  const auto spec = make_dgp(DgpKind::Example1, 2);
  Rng rng(64);
  const auto data = generate(spec, 800, rng);
  auto shifted = data;
  const double c = 12.5;
  shifted.y.array() += c;
  shifted.y0->array() += c;
  shifted.y1->array() += c;
  const auto base = oracle_nuisances(spec);
  NuisanceFit moved = base;
  moved.mu0 = [base, c](const Eigen::MatrixXd& x) { return Eigen::VectorXd(base.mu0(x).array() + c); };
  moved.mu1 = [base, c](const Eigen::MatrixXd& x) { return Eigen::VectorXd(base.mu1(x).array() + c); };
  Rng a(3), b(3);
  const auto e0 = estimate_ate(data, fixed_fitter(base), EstimatorConfig{}, a);
  const auto e1 = estimate_ate(shifted, fixed_fitter(moved), EstimatorConfig{}, b);
  CHECK(std::abs(e1.tau_hat - e0.tau_hat) < 1e-10);
}

TEST_CASE("std_error ignores fold labels; estimates are deterministic") {
  const auto spec = make_dgp(DgpKind::Example2, 6);
  Rng rng(65);
  const auto data = generate(spec, 600, rng);
  const auto fitter = fixed_fitter(oracle_nuisances(spec));
  Rng fr(9);
  auto plan = make_folds(600, 3, fr);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  EstimatorConfig three;
  three.k_folds = 3;
  const auto e1 = estimate_ate_with_plan(data, fitter, three, plan, seeds);
  for (int& label : plan.fold_assignment) label = (label + 1) % 3;
  const auto e2 = estimate_ate_with_plan(data, fitter, three, plan, seeds);
  CHECK(e1.std_error == doctest::Approx(e2.std_error).epsilon(1e-12));
  CHECK(e1.tau_hat == doctest::Approx(e2.tau_hat).epsilon(1e-12));

  Rng a(4), b(4);
  const auto x1 = estimate_ate(data, fitter, EstimatorConfig{}, a);
  const auto x2 = estimate_ate(data, fitter, EstimatorConfig{}, b);
  CHECK(x1.tau_hat == x2.tau_hat);
  CHECK(x1.std_error == x2.std_error);
}

TEST_CASE("fold degeneracy is reported") {
  Dataset data;
  data.x = Eigen::MatrixXd::Zero(8, 1);
  data.d = Eigen::VectorXi::Zero(8);
  data.d(0) = 1;
  data.y = Eigen::VectorXd::Zero(8);
  Rng rng(66);
  CHECK_THROWS_AS(estimate_ate(data, fixed_fitter(constant_fit(0, 0, 0.5)), EstimatorConfig{}, rng), FoldDegeneracy);
}

TEST_CASE("clip hits are counted") {
  Dataset data;
  Rng rng(67);
  data.x = Eigen::MatrixXd::Zero(40, 1);
  data.d.resize(40);
  data.y.resize(40);
  for (int i = 0; i < 40; ++i) {
    data.d(i) = i % 2;
    data.y(i) = rng.normal();
  }
  const auto est = estimate_ate(data, fixed_fitter(constant_fit(0, 0, 0.001)), EstimatorConfig{}, rng);
  CHECK(est.clip_hits == 40);
}
