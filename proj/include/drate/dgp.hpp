#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drate/nuisance.hpp"
#include "drate/rng.hpp"

namespace drate {

enum class CovarianceTag { Identity, ToeplitzAR1 };

struct CovarianceKind {
  CovarianceTag tag = CovarianceTag::Identity;
  double rho = 0.0;  // ToeplitzAR1 only

  static CovarianceKind identity() { return {}; }
  static CovarianceKind toeplitz(double rho) { return {CovarianceTag::ToeplitzAR1, rho}; }

  Eigen::MatrixXd matrix(int p) const;
};

struct MixtureComponent {
  Eigen::VectorXd mean;
  CovarianceKind covariance;
};

/// Gaussian mixture law for the covariate rows.
struct CovariateSpec {
  int p = 1;
  std::vector<MixtureComponent> components;
  std::vector<double> mixing_weights;

  /// Throws InvalidParameter when weights or means are inconsistent.
  void validate() const;
};

enum class DgpKind { Example1, Example2 };

/// Example 1 treatment law: one logistic on the blended index, or a
/// two-component mixture of logistics.
enum class PropensityForm { IndexMix, ModelMix };

/// Whether Y(0) and Y(1) share a unit's noise draw.
enum class NoiseCoupling { Shared, Independent };

/// User-settable knobs of a data-generating process. Coefficient vectors
/// are never configured directly; they follow from kind and p.
struct DgpOptions {
  double noise_sd = 1.0;
  PropensityForm propensity_form = PropensityForm::IndexMix;
  NoiseCoupling noise = NoiseCoupling::Shared;
  // Example 1 only.
  double covariate_mixing_weight = 0.7;  // weight on the identity component
  double rho = -0.5;
  double alpha = 0.8;
  double model_mix_prob = 0.8;
  // Example 2 only: adds the treatment indicator to the outcome so tau = 1.
  bool add_treatment_shift = false;
};

struct DgpSpec {
  DgpKind kind = DgpKind::Example1;
  int p = 2;
  DgpOptions options;
  CovariateSpec covariates;

  Eigen::VectorXd beta, delta;      // Example 1 outcome
  Eigen::VectorXd theta1, theta2;   // Example 1 propensity
  Eigen::VectorXd beta0, beta1;     // Example 2 outcome
  Eigen::VectorXd gamma;            // Example 2 propensity

  void validate() const;
};

/// Builds the fully parameterized spec for kind/p. Throws InvalidParameter
/// for p < 1 (Example 1) or p < 4 (Example 2), or invalid options.
DgpSpec make_dgp(DgpKind kind, int p, const DgpOptions& options = {});

std::string to_string(DgpKind kind);
DgpKind parse_dgp_kind(const std::string& s);
std::string to_string(PropensityForm form);
PropensityForm parse_propensity_form(const std::string& s);
std::string to_string(NoiseCoupling noise);
NoiseCoupling parse_noise_coupling(const std::string& s);

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXi d;
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXd> y0;
  std::optional<Eigen::VectorXd> y1;
  std::uint64_t seed = 0;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }
  Eigen::Index treated_count() const { return d.sum(); }

  /// Checks shapes, binary treatment, finiteness and, when potential
  /// outcomes are present, Y = D*Y1 + (1-D)*Y0. Throws InvalidInput.
  void validate() const;
};

/// Sigma(i, j) = rho^|i-j|. Throws InvalidParameter for |rho| >= 1 or p < 1.
Eigen::MatrixXd toeplitz_ar1(int p, double rho);

/// n independent rows mean + L z with L the lower Cholesky factor.
/// Throws NotPositiveDefinite when the factorization fails.
Eigen::MatrixXd sample_mvn(Eigen::Index n, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& covariance, Rng& rng);

struct LabeledCovariates {
  Eigen::MatrixXd x;
  std::vector<int> component;
};

Eigen::MatrixXd sample_covariates(Eigen::Index n, const CovariateSpec& spec, Rng& rng);
LabeledCovariates sample_covariates_labeled(Eigen::Index n, const CovariateSpec& spec, Rng& rng);

/// Draws n units from the process. Deterministic in (spec, n, rng state).
Dataset generate(const DgpSpec& spec, Eigen::Index n, Rng& rng);

Dataset gen_example1(Eigen::Index n, int p, double noise_sd, Rng& rng);
Dataset gen_example2(Eigen::Index n, int p, double noise_sd, Rng& rng);

/// True conditional mean E[Y(arm) | X = x].
double outcome_mean(const DgpSpec& spec, int arm, const Eigen::Ref<const Eigen::VectorXd>& x);

/// True propensity P(D = 1 | X = x).
double propensity(const DgpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Example 1 floors |x'delta| at this value before taking the log.
inline constexpr double kLogFloor = 1e-12;

struct AteTruth {
  double value = 0.0;
  double std_error = 0.0;  // zero for the analytic value
  bool analytic = true;
};

enum class AteMethod { Analytic, MonteCarlo };

/// Average treatment effect of the process. The analytic path is exact
/// (1 for Example 1 and for shifted Example 2, 0 otherwise); the Monte
/// Carlo path averages mu1 - mu0 over oracle_draws covariate rows.
AteTruth true_ate(const DgpSpec& spec, Eigen::Index oracle_draws, Rng& rng,
                  AteMethod method = AteMethod::Analytic);
double analytic_ate(const DgpSpec& spec);

/// Exact mu0, mu1, pi1 of the process, packaged as predictors.
NuisanceFit oracle_nuisances(const DgpSpec& spec);

}  // namespace drate
