#include "drate/aipw.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "drate/error.hpp"

namespace drate {
namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

template <typename Vec>
Vec take(const Vec& v, const std::vector<int>& rows) {
  Vec out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

void require_both_arms(const Eigen::VectorXi& d, const std::vector<int>& rows, const std::string& what) {
  std::size_t treated = 0;
  for (int r : rows) treated += static_cast<std::size_t>(d(r));
  if (treated == 0 || treated == rows.size())
    throw FoldDegeneracy(what + " has " + std::to_string(treated) + " treated of " +
                         std::to_string(rows.size()) + " rows; use fewer folds or a larger sample");
}

}  // namespace

void ClipBounds::validate() const {
  if (!(lo > 0.0 && lo < hi && hi < 1.0))
    throw InvalidParameter("clip bounds must satisfy 0 < lo < hi < 1");
}

void EstimatorConfig::validate() const {
  clip.validate();
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw InvalidParameter("ci_level must lie in (0, 1)");
  if (k_folds < 1) throw InvalidParameter("k_folds must be >= 1");
  if (k_folds == 1) {
    if (!split_fraction) throw InvalidParameter("k_folds = 1 requires split_fraction");
    if (!(*split_fraction > 0.0 && *split_fraction < 1.0))
      throw InvalidParameter("split_fraction must lie in (0, 1)");
  }
}

ScoreTerm aipw_score(double y, int d, double mu0x, double mu1x, double pi1x, const ClipBounds& clip,
                     bool paper_literal) {
  if (!std::isfinite(y) || !std::isfinite(mu0x) || !std::isfinite(mu1x) || !std::isfinite(pi1x))
    throw InvalidInput("aipw_score: non-finite input");
  if (d != 0 && d != 1) throw InvalidInput("aipw_score: treatment must be 0 or 1");
  const double pi = std::clamp(pi1x, clip.lo, clip.hi);
  ScoreTerm term;
  term.clipped = pi != pi1x;
  term.regression = mu1x - mu0x;
  const double fitted = paper_literal ? (d ? pi : 1.0 - pi) : (d ? mu1x : mu0x);
  term.correction = (d - pi) * (y - fitted) / (pi * (1.0 - pi));
  term.psi = term.regression + term.correction;
  return term;
}

std::vector<std::vector<int>> CrossFitPlan::folds() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < fold_assignment.size(); ++i)
    out[static_cast<std::size_t>(fold_assignment[i])].push_back(static_cast<int>(i));
  return out;
}

CrossFitPlan make_folds(Eigen::Index n, int k, Rng& rng) {
  if (k < 2) throw InvalidInput("make_folds: need k >= 2");
  if (n < 2 * static_cast<Eigen::Index>(k))
    throw InvalidInput("make_folds: need n >= 2k (n = " + std::to_string(n) + ", k = " + std::to_string(k) + ")");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  CrossFitPlan plan;
  plan.k = k;
  plan.fold_assignment.resize(static_cast<std::size_t>(n));
  for (std::size_t pos = 0; pos < perm.size(); ++pos)
    plan.fold_assignment[static_cast<std::size_t>(perm[pos])] = static_cast<int>(pos % static_cast<std::size_t>(k));
  return plan;
}

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidInput("normal_quantile: probability must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (prob < p_low) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - p_low) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (prob == 0.5) return 0.0;
  // Halley step on Phi(x) - prob.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - prob;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

Json ate_to_json(const AteEstimate& est) {
  return {{"tau_hat", est.tau_hat},
          {"std_error", est.std_error},
          {"ci", {est.ci_lo, est.ci_hi}},
          {"level", est.ci_level},
          {"n_eval", est.n_eval},
          {"clip_hits", est.clip_hits},
          {"learner", est.learner},
          {"k_folds", est.k_folds},
          {"seed", est.seed}};
}

AteEstimate estimate_ate_with_plan(const Dataset& data, const NuisanceFitter& fitter,
                                   const EstimatorConfig& config, const CrossFitPlan& plan,
                                   const std::vector<std::uint64_t>& fold_seeds, const std::string& learner_name) {
  config.validate();
  const auto n = data.n();
  if (static_cast<Eigen::Index>(plan.fold_assignment.size()) != n)
    throw InvalidInput("fold plan length differs from dataset size");
  const bool single_split = config.k_folds == 1;
  if (single_split ? plan.k != 2 : plan.k != config.k_folds)
    throw InvalidInput("fold plan does not match k_folds");
  if (fold_seeds.size() < static_cast<std::size_t>(plan.k)) throw InvalidInput("missing fold seeds");

  const auto folds = plan.folds();
  std::vector<double> psi(static_cast<std::size_t>(n), 0.0);
  std::vector<char> evaluated(static_cast<std::size_t>(n), 0);
  std::size_t clip_hits = 0;

  // Single-split mode: label 0 is the fitting sample I1, label 1 the scoring sample I2.
  const int eval_begin = single_split ? 1 : 0;
  for (int k = eval_begin; k < plan.k; ++k) {
    const auto& eval_rows = folds[static_cast<std::size_t>(k)];
    std::vector<int> train_rows;
    if (single_split) {
      train_rows = folds[0];
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        if (plan.fold_assignment[static_cast<std::size_t>(i)] != k) train_rows.push_back(static_cast<int>(i));
    }
    const std::string label = single_split ? "split" : "fold " + std::to_string(k + 1);
    require_both_arms(data.d, eval_rows, label);
    require_both_arms(data.d, train_rows, "training sample for " + label);

    const NuisanceFit fit = fitter(take_rows(data.x, train_rows), take(data.d, train_rows),
                                   take(data.y, train_rows), fold_seeds[static_cast<std::size_t>(k)]);
    const Eigen::MatrixXd x_eval = take_rows(data.x, eval_rows);
    const Eigen::VectorXd mu0 = fit.mu0(x_eval);
    const Eigen::VectorXd mu1 = fit.mu1(x_eval);
    const Eigen::VectorXd pi1 = fit.pi1(x_eval);
    for (std::size_t j = 0; j < eval_rows.size(); ++j) {
      const auto r = eval_rows[j];
      const auto jj = static_cast<Eigen::Index>(j);
      const ScoreTerm term = aipw_score(data.y(r), data.d(r), mu0(jj), mu1(jj), pi1(jj), config.clip,
                                        config.paper_literal);
      psi[static_cast<std::size_t>(r)] = term.psi;
      evaluated[static_cast<std::size_t>(r)] = 1;
      clip_hits += term.clipped;
    }
  }

  std::vector<double> scores;
  for (Eigen::Index i = 0; i < n; ++i)
    if (evaluated[static_cast<std::size_t>(i)]) scores.push_back(psi[static_cast<std::size_t>(i)]);
  const auto m = static_cast<Eigen::Index>(scores.size());
  if (m < 2) throw InvalidInput("estimate_ate: need at least two evaluated rows");

  AteEstimate est;
  est.n_eval = m;
  est.tau_hat = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(m);
  est.influence_values.resize(m);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    est.influence_values(i) = scores[static_cast<std::size_t>(i)] - est.tau_hat;
    ss += est.influence_values(i) * est.influence_values(i);
  }
  est.std_error = std::sqrt(ss / static_cast<double>(m - 1)) / std::sqrt(static_cast<double>(m));
  const double z = normal_quantile(0.5 * (1.0 + config.ci_level));
  est.ci_level = config.ci_level;
  est.ci_lo = est.tau_hat - z * est.std_error;
  est.ci_hi = est.tau_hat + z * est.std_error;
  est.clip_hits = clip_hits;
  est.learner = learner_name;
  est.k_folds = config.k_folds;
  return est;
}

AteEstimate estimate_ate(const Dataset& data, const NuisanceFitter& fitter, const EstimatorConfig& config,
                         Rng& rng, const std::string& learner_name) {
  config.validate();
  data.validate();
  CrossFitPlan plan;
  if (config.k_folds == 1) {
    const auto n = data.n();
    const auto fit_size = static_cast<Eigen::Index>(std::llround(*config.split_fraction * static_cast<double>(n)));
    if (fit_size < 1 || fit_size >= n) throw InvalidInput("split_fraction leaves an empty sample");
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    plan.k = 2;
    plan.fold_assignment.assign(static_cast<std::size_t>(n), 1);
    for (Eigen::Index i = 0; i < fit_size; ++i) plan.fold_assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 0;
  } else {
    plan = make_folds(data.n(), config.k_folds, rng);
  }
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < plan.k; ++k) seeds.push_back(rng.next_u64());
  AteEstimate est = estimate_ate_with_plan(data, fitter, config, plan, seeds, learner_name);
  est.seed = rng.seed();
  return est;
}

NuisanceFitter fixed_fitter(NuisanceFit fit) {
  return [fit = std::move(fit)](const Eigen::MatrixXd&, const Eigen::VectorXi&, const Eigen::VectorXd&,
                                std::uint64_t) { return fit; };
}

}  // namespace drate
