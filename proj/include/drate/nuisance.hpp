#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace drate {

/// Batch predictor: one value per row of the query matrix.
using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Fitted nuisance functions for the AIPW score.
///
/// mu0/mu1 are the arm-wise outcome regressions E[Y(a) | X = x]; pi1 is the
/// propensity P(D = 1 | X = x). Predictors are pure and may be shared across
/// threads.
struct NuisanceFit {
  Predictor mu0;
  Predictor mu1;
  Predictor pi1;
  std::string provenance;
};

}  // namespace drate
