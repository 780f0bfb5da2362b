#pragma once

#include <vector>

#include <Eigen/Dense>

#include "drate/json_util.hpp"

namespace drate {

struct LinearModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
};

struct LogisticModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  bool converged = false;
  bool degenerate = false;  // single-class response or separation guard tripped
  int iterations = 0;
  std::vector<double> loglik_trace;  // log-likelihood after each accepted step, starting at the origin
};

/// Least squares via column-pivoted Householder QR.
/// Throws InvalidInput when n <= p + 1 or shapes disagree, and
/// SingularDesign naming the collinear columns when the design is rank deficient.
LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool intercept = true);

/// Coefficient max-norm above which the fit is treated as separated.
inline constexpr double kSeparationBound = 30.0;

/// Newton-Raphson (IRLS) maximum likelihood with step halving.
/// Never throws on separation; the returned model is flagged instead.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& d, int max_iter = 100,
                           double tol = 1e-8, bool intercept = true);

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXi& d,
                       const Eigen::VectorXd& coefficients, double intercept);

Eigen::VectorXd predict_linear(const LinearModel& model, const Eigen::MatrixXd& x);
Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::MatrixXd& x);

Json linear_to_json(const LinearModel& model);
Json logistic_to_json(const LogisticModel& model);

}  // namespace drate
