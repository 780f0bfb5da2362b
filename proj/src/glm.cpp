#include "drate/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "drate/error.hpp"

namespace drate {
namespace {

Eigen::MatrixXd design(const Eigen::MatrixXd& x, bool intercept) {
  if (!intercept) return x;
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

std::string column_name(Eigen::Index j, bool intercept) {
  if (intercept) return j == 0 ? "intercept" : "x" + std::to_string(j);
  return "x" + std::to_string(j + 1);
}

// Columns that add no rank given the columns kept before them.
std::vector<Eigen::Index> collinear_columns(const Eigen::MatrixXd& a) {
  std::vector<Eigen::Index> kept, offending;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    Eigen::MatrixXd trial(a.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) trial.col(static_cast<Eigen::Index>(k)) = a.col(kept[k]);
    trial.rightCols(1) = a.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    if (qr.rank() == trial.cols())
      kept.push_back(j);
    else
      offending.push_back(j);
  }
  return offending;
}

double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double loglik_of(const Eigen::MatrixXd& a, const Eigen::VectorXd& dv, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = a * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += dv(i) * eta(i) - softplus(eta(i));
  return ll;
}

void check_dims(Eigen::Index model_p, Eigen::Index x_cols) {
  if (model_p != x_cols)
    throw InvalidInput("model has " + std::to_string(model_p) + " coefficients, query has " +
                       std::to_string(x_cols) + " columns");
}

}  // namespace

LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool intercept) {
  if (y.size() != x.rows()) throw InvalidInput("fit_ols: response length differs from row count");
  if (x.rows() <= x.cols() + 1)
    throw InvalidInput("fit_ols: need n > p + 1 (n = " + std::to_string(x.rows()) +
                       ", p = " + std::to_string(x.cols()) + ")");
  const Eigen::MatrixXd a = design(x, intercept);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols()) {
    std::string names;
    for (auto j : collinear_columns(a)) names += (names.empty() ? "" : ", ") + column_name(j, intercept);
    throw SingularDesign("fit_ols: design is rank deficient; collinear columns: " + names);
  }
  const Eigen::VectorXd beta = qr.solve(y);
  LinearModel model;
  model.intercept = intercept ? beta(0) : 0.0;
  model.coefficients = intercept ? Eigen::VectorXd(beta.tail(x.cols())) : beta;
  return model;
}

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXi& d,
                       const Eigen::VectorXd& coefficients, double intercept) {
  check_dims(coefficients.size(), x.cols());
  const Eigen::VectorXd eta = (x * coefficients).array() + intercept;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += d(i) * eta(i) - softplus(eta(i));
  return ll;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& d, int max_iter, double tol,
                           bool intercept) {
  if (d.size() != x.rows()) throw InvalidInput("fit_logistic: label length differs from row count");
  if (x.rows() <= x.cols() + 1)
    throw InvalidInput("fit_logistic: need n > p + 1 (n = " + std::to_string(x.rows()) +
                       ", p = " + std::to_string(x.cols()) + ")");
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d(i) != 0 && d(i) != 1) throw InvalidInput("fit_logistic: labels must be 0 or 1");

  LogisticModel model;
  model.coefficients = Eigen::VectorXd::Zero(x.cols());
  const auto treated = d.sum();
  if (treated == 0 || treated == d.size()) {
    // No signal: the MLE sits at infinity; report the bounded intercept-only fit.
    model.intercept = treated == 0 ? -kSeparationBound : kSeparationBound;
    model.degenerate = true;
    return model;
  }

  const Eigen::MatrixXd a = design(x, intercept);
  const Eigen::VectorXd dv = d.cast<double>();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(a.cols());
  double ll = loglik_of(a, dv, beta);
  model.loglik_trace.push_back(ll);

  for (int iter = 1; iter <= max_iter; ++iter) {
    model.iterations = iter;
    const Eigen::VectorXd eta = a * beta;
    Eigen::VectorXd prob(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob(i) = sigmoid(eta(i));
      w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-12);
    }
    const Eigen::VectorXd grad = a.transpose() * (dv - prob);
    const Eigen::MatrixXd hess = a.transpose() * w.asDiagonal() * a;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) break;

    Eigen::VectorXd candidate = beta + step;
    double ll_new = loglik_of(a, dv, candidate);
    for (int halvings = 0; halvings < 50 && !(ll_new >= ll); ++halvings) {
      step *= 0.5;
      candidate = beta + step;
      ll_new = loglik_of(a, dv, candidate);
    }
    if (!(ll_new >= ll)) break;  // no ascent direction left at working precision

    beta = candidate;
    ll = ll_new;
    model.loglik_trace.push_back(ll);
    if (beta.cwiseAbs().maxCoeff() > kSeparationBound) {
      model.degenerate = true;
      break;
    }
    if (step.cwiseAbs().maxCoeff() < tol) {
      model.converged = true;
      break;
    }
  }
  model.intercept = intercept ? beta(0) : 0.0;
  model.coefficients = intercept ? Eigen::VectorXd(beta.tail(x.cols())) : beta;
  return model;
}

Eigen::VectorXd predict_linear(const LinearModel& model, const Eigen::MatrixXd& x) {
  check_dims(model.coefficients.size(), x.cols());
  return (x * model.coefficients).array() + model.intercept;
}

Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::MatrixXd& x) {
  check_dims(model.coefficients.size(), x.cols());
  const Eigen::VectorXd eta = (x * model.coefficients).array() + model.intercept;
  // Keep outputs strictly inside (0, 1) even where the logistic saturates.
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return eta.unaryExpr([lo, hi](double t) { return std::clamp(sigmoid(t), lo, hi); });
}

Json linear_to_json(const LinearModel& model) {
  return {{"model", "ols"},
          {"intercept", model.intercept},
          {"coefficients", std::vector<double>(model.coefficients.data(),
                                               model.coefficients.data() + model.coefficients.size())}};
}

Json logistic_to_json(const LogisticModel& model) {
  return {{"model", "logistic"},
          {"intercept", model.intercept},
          {"coefficients", std::vector<double>(model.coefficients.data(),
                                               model.coefficients.data() + model.coefficients.size())},
          {"converged", model.converged},
          {"degenerate", model.degenerate},
          {"iterations", model.iterations}};
}

}  // namespace drate
