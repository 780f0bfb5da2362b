#pragma once

#include <optional>
#include <string>
#include <vector>

#include "drate/aipw.hpp"
#include "drate/dgp.hpp"
#include "drate/forest.hpp"
#include "drate/json_util.hpp"

namespace drate {

enum class OutcomeLearner { Forest, Ols, Oracle, Zero };
enum class PropensityLearner { Forest, Logistic, Oracle, Half };

std::string to_string(OutcomeLearner l);
std::string to_string(PropensityLearner l);
OutcomeLearner parse_outcome_learner(const std::string& s);
PropensityLearner parse_propensity_learner(const std::string& s);

/// Forest nuisance settings. When tune is set, each forest's mtry and
/// min_leaf are chosen by k-fold CV over `grid` (default_grid when empty)
/// using cv_num_trees trees per candidate, then refit with base.num_trees.
/// cv_rule picks among near-equal candidates (see CvRule).
// Nuisance forests draw 90% subsamples; the rest of ForestParams is default.
inline ForestParams nuisance_defaults() {
  ForestParams p;
  p.subsample_fraction = 0.9;
  return p;
}

struct ForestLearnerConfig {
  ForestParams base = nuisance_defaults();
  std::vector<ForestParams> grid;
  bool tune = true;
  int cv_folds = 5;
  int cv_num_trees = 25;
  CvRule cv_rule = CvRule::OneStandardError;
  int threads = 1;

  friend bool operator==(const ForestLearnerConfig&, const ForestLearnerConfig&) = default;
};

struct LearnerConfig {
  OutcomeLearner outcome = OutcomeLearner::Forest;
  PropensityLearner propensity = PropensityLearner::Forest;
  ForestLearnerConfig forest;
  bool glm_intercept = true;

  static LearnerConfig honest_forest();
  static LearnerConfig glm();
  static LearnerConfig oracle();

  /// "forest", "glm", "oracle" for the presets, else "<outcome>+<propensity>".
  std::string name() const;
  bool needs_oracle() const {
    return outcome == OutcomeLearner::Oracle || propensity == PropensityLearner::Oracle;
  }
};

/// Accepts a preset name or "<outcome>+<propensity>", e.g. "zero+oracle".
LearnerConfig parse_learner(const std::string& s);

Json learner_to_json(const LearnerConfig& config);
/// Either a preset string or an object {outcome, propensity, forest, glm_intercept}.
LearnerConfig learner_from_json(const Json& j);
Json forest_learner_to_json(const ForestLearnerConfig& config);
ForestLearnerConfig forest_learner_from_json(const Json& j);

/// Fitter realizing the configuration. Oracle components need the true
/// process; InvalidParameter is thrown when one is required but absent.
NuisanceFitter make_fitter(const LearnerConfig& config, const std::optional<DgpSpec>& truth);

}  // namespace drate
