#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drate/dgp.hpp"
#include "drate/json_util.hpp"
#include "drate/nuisance.hpp"
#include "drate/rng.hpp"

namespace drate {

/// Propensity clipping interval, 0 < lo < hi < 1.
struct ClipBounds {
  double lo = 0.01;
  double hi = 0.99;
  void validate() const;
};

/// One unit's AIPW score, split into its outcome-regression part and the
/// weighted residual correction.
struct ScoreTerm {
  double psi = 0.0;
  double regression = 0.0;  // mu1(x) - mu0(x)
  double correction = 0.0;  // (d - pi)(y - mu_d(x)) / (pi (1 - pi))
  bool clipped = false;
};

/// psi = mu1 - mu0 + (d - pi~)(y - mu_d) / (pi~ (1 - pi~)) with pi~ the
/// clipped propensity. With paper_literal the residual uses y - pi~_d,
/// where pi~_1 = pi~ and pi~_0 = 1 - pi~. Throws InvalidInput on non-finite
/// inputs or d outside {0, 1}.
ScoreTerm aipw_score(double y, int d, double mu0x, double mu1x, double pi1x, const ClipBounds& clip,
                     bool paper_literal = false);

struct CrossFitPlan {
  std::vector<int> fold_assignment;  // label in [0, k) per row
  int k = 0;

  /// Row indices of each fold, ascending.
  std::vector<std::vector<int>> folds() const;
};

/// Uniform random balanced partition (sizes differ by at most one).
/// Throws InvalidInput unless k >= 2 and n >= 2k.
CrossFitPlan make_folds(Eigen::Index n, int k, Rng& rng);

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley correction step against std::erfc; absolute error well below
/// 1e-9 on (0, 1). Throws InvalidInput outside (0, 1).
double normal_quantile(double prob);

struct AteEstimate {
  double tau_hat = 0.0;
  double std_error = 0.0;
  double ci_level = 0.95;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Eigen::VectorXd influence_values;  // psi_i - tau_hat over evaluated rows
  Eigen::Index n_eval = 0;
  std::size_t clip_hits = 0;
  std::string learner;
  int k_folds = 2;
  std::uint64_t seed = 0;
};

Json ate_to_json(const AteEstimate& est);

struct EstimatorConfig {
  int k_folds = 2;
  /// Required when k_folds == 1: share of rows in the fitting sample.
  std::optional<double> split_fraction;
  ClipBounds clip;
  double ci_level = 0.95;
  bool paper_literal = false;

  void validate() const;
};

/// Fits nuisances on a training sample. Arguments: covariates, treatment,
/// outcome, seed for any internal randomness.
using NuisanceFitter = std::function<NuisanceFit(const Eigen::MatrixXd&, const Eigen::VectorXi&,
                                                 const Eigen::VectorXd&, std::uint64_t)>;

/// Cross-fitted AIPW. For each fold the nuisances are fit on the rows
/// outside it and scored on the rows inside it; all scores are pooled.
/// With k_folds == 1 a single random split fits on I1 and scores on I2.
/// Throws FoldDegeneracy when a fold or its complement lacks an arm.
AteEstimate estimate_ate(const Dataset& data, const NuisanceFitter& fitter, const EstimatorConfig& config,
                         Rng& rng, const std::string& learner_name = "custom");

/// Same, with the fold plan and per-fold fitting seeds supplied.
AteEstimate estimate_ate_with_plan(const Dataset& data, const NuisanceFitter& fitter,
                                   const EstimatorConfig& config, const CrossFitPlan& plan,
                                   const std::vector<std::uint64_t>& fold_seeds,
                                   const std::string& learner_name = "custom");

/// A fitter that ignores the training data and returns fixed predictors.
NuisanceFitter fixed_fitter(NuisanceFit fit);

}  // namespace drate
