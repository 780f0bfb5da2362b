#include "drate/learners.hpp"

#include <memory>

#include "drate/error.hpp"
#include "drate/glm.hpp"

namespace drate {
namespace {

struct ArmData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

ArmData arm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXi& d, const Eigen::VectorXd& y, int arm) {
  const auto m = arm ? d.sum() : d.size() - d.sum();
  ArmData out{Eigen::MatrixXd(m, x.cols()), Eigen::VectorXd(m)};
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) != arm) continue;
    out.x.row(k) = x.row(i);
    out.y(k++) = y(i);
  }
  return out;
}

Predictor constant(double v) {
  return [v](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.rows(), v).eval(); };
}

Predictor forest_predictor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                           const ForestLearnerConfig& cfg, std::uint64_t seed) {
  ForestParams params = cfg.base;
  if (cfg.tune) {
    std::vector<ForestParams> grid = cfg.grid.empty() ? default_grid(static_cast<int>(x.cols()), cfg.base) : cfg.grid;
    for (auto& g : grid) g.num_trees = cfg.cv_num_trees;
    Rng rng(derive_seed(seed, "cv"));
    params = cv_tune(x, y, task, grid, cfg.cv_folds, rng, cfg.cv_rule);
    params.num_trees = cfg.base.num_trees;
  }
  params.seed = derive_seed(seed, "fit");
  auto forest = std::make_shared<const Forest>(fit_forest(x, y, params, task, FitOptions{cfg.threads, nullptr}));
  return [forest](const Eigen::MatrixXd& q) { return predict(*forest, q); };
}

}  // namespace

std::string to_string(OutcomeLearner l) {
  switch (l) {
    case OutcomeLearner::Forest: return "forest";
    case OutcomeLearner::Ols: return "ols";
    case OutcomeLearner::Oracle: return "oracle";
    case OutcomeLearner::Zero: return "zero";
  }
  return "?";
}

std::string to_string(PropensityLearner l) {
  switch (l) {
    case PropensityLearner::Forest: return "forest";
    case PropensityLearner::Logistic: return "logistic";
    case PropensityLearner::Oracle: return "oracle";
    case PropensityLearner::Half: return "half";
  }
  return "?";
}

OutcomeLearner parse_outcome_learner(const std::string& s) {
  if (s == "forest") return OutcomeLearner::Forest;
  if (s == "ols") return OutcomeLearner::Ols;
  if (s == "oracle") return OutcomeLearner::Oracle;
  if (s == "zero") return OutcomeLearner::Zero;
  throw InvalidParameter("unknown outcome learner '" + s + "' (valid: forest, ols, oracle, zero)");
}

PropensityLearner parse_propensity_learner(const std::string& s) {
  if (s == "forest") return PropensityLearner::Forest;
  if (s == "logistic") return PropensityLearner::Logistic;
  if (s == "oracle") return PropensityLearner::Oracle;
  if (s == "half") return PropensityLearner::Half;
  throw InvalidParameter("unknown propensity learner '" + s + "' (valid: forest, logistic, oracle, half)");
}

LearnerConfig LearnerConfig::honest_forest() { return {}; }

LearnerConfig LearnerConfig::glm() {
  LearnerConfig c;
  c.outcome = OutcomeLearner::Ols;
  c.propensity = PropensityLearner::Logistic;
  return c;
}

LearnerConfig LearnerConfig::oracle() {
  LearnerConfig c;
  c.outcome = OutcomeLearner::Oracle;
  c.propensity = PropensityLearner::Oracle;
  return c;
}

std::string LearnerConfig::name() const {
  if (outcome == OutcomeLearner::Forest && propensity == PropensityLearner::Forest) return "forest";
  if (outcome == OutcomeLearner::Ols && propensity == PropensityLearner::Logistic) return "glm";
  if (outcome == OutcomeLearner::Oracle && propensity == PropensityLearner::Oracle) return "oracle";
  return to_string(outcome) + "+" + to_string(propensity);
}

LearnerConfig parse_learner(const std::string& s) {
  if (s == "forest" || s == "honest_forest") return LearnerConfig::honest_forest();
  if (s == "glm") return LearnerConfig::glm();
  if (s == "oracle") return LearnerConfig::oracle();
  const auto plus = s.find('+');
  if (plus == std::string::npos)
    throw InvalidParameter("unknown learner '" + s +
                           "' (valid: forest, glm, oracle, or <outcome>+<propensity>)");
  LearnerConfig c;
  c.outcome = parse_outcome_learner(s.substr(0, plus));
  c.propensity = parse_propensity_learner(s.substr(plus + 1));
  return c;
}

Json forest_learner_to_json(const ForestLearnerConfig& config) {
  Json grid = Json::array();
  for (const auto& g : config.grid) grid.push_back(params_to_json(g));
  return {{"base", params_to_json(config.base)}, {"grid", grid},       {"tune", config.tune},
          {"cv_folds", config.cv_folds},         {"cv_num_trees", config.cv_num_trees},
          {"cv_rule", config.cv_rule == CvRule::Min ? "min" : "one_se"}};
}

ForestLearnerConfig forest_learner_from_json(const Json& j) {
  constexpr std::string_view ctx = "learner.forest";
  check_keys(j, {"base", "grid", "tune", "cv_folds", "cv_num_trees", "cv_rule"}, ctx);
  ForestLearnerConfig c;
  if (j.contains("base")) c.base = params_from_json(j.at("base"), c.base);
  if (j.contains("grid"))
    for (const auto& g : j.at("grid")) c.grid.push_back(params_from_json(g, c.base));
  c.tune = get_field_or(j, "tune", c.tune, ctx);
  c.cv_folds = get_field_or(j, "cv_folds", c.cv_folds, ctx);
  c.cv_num_trees = get_field_or(j, "cv_num_trees", c.cv_num_trees, ctx);
  if (j.contains("cv_rule")) {
    const auto rule = get_field<std::string>(j, "cv_rule", ctx);
    if (rule == "min")
      c.cv_rule = CvRule::Min;
    else if (rule == "one_se")
      c.cv_rule = CvRule::OneStandardError;
    else
      throw InvalidParameter("learner.forest.cv_rule must be 'min' or 'one_se', got '" + rule + "'");
  }
  if (c.cv_folds < 2) throw InvalidParameter("learner.forest.cv_folds must be >= 2");
  if (c.cv_num_trees < 1) throw InvalidParameter("learner.forest.cv_num_trees must be >= 1");
  return c;
}

Json learner_to_json(const LearnerConfig& config) {
  return {{"outcome", to_string(config.outcome)},
          {"propensity", to_string(config.propensity)},
          {"forest", forest_learner_to_json(config.forest)},
          {"glm_intercept", config.glm_intercept}};
}

LearnerConfig learner_from_json(const Json& j) {
  if (j.is_string()) return parse_learner(j.get<std::string>());
  constexpr std::string_view ctx = "learner";
  check_keys(j, {"preset", "outcome", "propensity", "forest", "glm_intercept"}, ctx);
  LearnerConfig c;
  if (j.contains("preset")) c = parse_learner(get_field<std::string>(j, "preset", ctx));
  if (j.contains("outcome")) c.outcome = parse_outcome_learner(get_field<std::string>(j, "outcome", ctx));
  if (j.contains("propensity"))
    c.propensity = parse_propensity_learner(get_field<std::string>(j, "propensity", ctx));
  if (j.contains("forest")) c.forest = forest_learner_from_json(j.at("forest"));
  c.glm_intercept = get_field_or(j, "glm_intercept", c.glm_intercept, ctx);
  return c;
}

NuisanceFitter make_fitter(const LearnerConfig& config, const std::optional<DgpSpec>& truth) {
  if (config.needs_oracle() && !truth)
    throw InvalidParameter("learner '" + config.name() + "' needs the true data-generating process");
  std::optional<NuisanceFit> oracle;
  if (truth) oracle = oracle_nuisances(*truth);

  return [config, oracle](const Eigen::MatrixXd& x, const Eigen::VectorXi& d, const Eigen::VectorXd& y,
                          std::uint64_t seed) {
    NuisanceFit fit;
    fit.provenance = config.name();
    for (int arm : {0, 1}) {
      Predictor pred;
      switch (config.outcome) {
        case OutcomeLearner::Oracle:
          pred = arm ? oracle->mu1 : oracle->mu0;
          break;
        case OutcomeLearner::Zero:
          pred = constant(0.0);
          break;
        case OutcomeLearner::Ols: {
          const ArmData a = arm_rows(x, d, y, arm);
          const LinearModel model = fit_ols(a.x, a.y, config.glm_intercept);
          pred = [model](const Eigen::MatrixXd& q) { return predict_linear(model, q); };
          break;
        }
        case OutcomeLearner::Forest: {
          const ArmData a = arm_rows(x, d, y, arm);
          pred = forest_predictor(a.x, a.y, ForestTask::Regression, config.forest,
                                  derive_seed(seed, arm ? "mu1" : "mu0"));
          break;
        }
      }
      (arm ? fit.mu1 : fit.mu0) = std::move(pred);
    }
    switch (config.propensity) {
      case PropensityLearner::Oracle:
        fit.pi1 = oracle->pi1;
        break;
      case PropensityLearner::Half:
        fit.pi1 = constant(0.5);
        break;
      case PropensityLearner::Logistic: {
        const LogisticModel model = fit_logistic(x, d, 100, 1e-8, config.glm_intercept);
        fit.pi1 = [model](const Eigen::MatrixXd& q) { return predict_proba(model, q); };
        break;
      }
      case PropensityLearner::Forest:
        fit.pi1 = forest_predictor(x, d.cast<double>(), ForestTask::Probability, config.forest,
                                   derive_seed(seed, "pi1"));
        break;
    }
    return fit;
  };
}

}  // namespace drate
