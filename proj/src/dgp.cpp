#include "drate/dgp.hpp"

#include <cmath>
#include <numeric>

#include "drate/error.hpp"

namespace drate {
namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols())
    throw InvalidParameter("covariance must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("covariance is not positive definite");
  return llt.matrixL();
}

// Per-component Cholesky factors; computed once per sampling call.
struct MixtureSampler {
  std::vector<Eigen::MatrixXd> factors;
  std::vector<double> cumulative;
  const CovariateSpec* spec;

  explicit MixtureSampler(const CovariateSpec& s) : spec(&s) {
    s.validate();
    double acc = 0.0;
    for (std::size_t k = 0; k < s.components.size(); ++k) {
      factors.push_back(cholesky_lower(s.components[k].covariance.matrix(s.p)));
      acc += s.mixing_weights[k];
      cumulative.push_back(acc);
    }
  }

  int draw_row(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const {
    int k = 0;
    if (factors.size() > 1) {
      const double u = rng.uniform() * cumulative.back();
      while (k + 1 < static_cast<int>(cumulative.size()) && u >= cumulative[k]) ++k;
    }
    Eigen::VectorXd z(spec->p);
    for (int j = 0; j < spec->p; ++j) z(j) = rng.normal();
    out = spec->components[k].mean + factors[k].triangularView<Eigen::Lower>() * z;
    return k;
  }
};

void require_dim(const DgpSpec& spec, Eigen::Index len) {
  if (len != spec.p)
    throw InvalidInput("covariate row has " + std::to_string(len) + " entries, expected " +
                       std::to_string(spec.p));
}

}  // namespace

Eigen::MatrixXd CovarianceKind::matrix(int p) const {
  if (tag == CovarianceTag::Identity) {
    if (p < 1) throw InvalidParameter("dimension p must be >= 1");
    return Eigen::MatrixXd::Identity(p, p);
  }
  return toeplitz_ar1(p, rho);
}

void CovariateSpec::validate() const {
  if (p < 1) throw InvalidParameter("covariate dimension p must be >= 1");
  if (components.empty()) throw InvalidParameter("covariate mixture needs at least one component");
  if (components.size() != mixing_weights.size())
    throw InvalidParameter("mixing_weights length must equal the number of components");
  double total = 0.0;
  for (double w : mixing_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw InvalidParameter("mixing weights must lie in [0, 1]");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidParameter("mixing weights must sum to 1");
  for (const auto& c : components) {
    if (c.mean.size() != p) throw InvalidParameter("component mean length must equal p");
    if (c.covariance.tag == CovarianceTag::ToeplitzAR1 && !(std::abs(c.covariance.rho) < 1.0))
      throw InvalidParameter("Toeplitz rho must satisfy |rho| < 1");
  }
}

void DgpSpec::validate() const {
  if (kind == DgpKind::Example1 && p < 1) throw InvalidParameter("Example1 requires p >= 1");
  if (kind == DgpKind::Example2 && p < 4)
    throw InvalidParameter("Example2 requires p >= 4 (beta1 uses coordinate 4), got p = " +
                           std::to_string(p));
  if (!(options.noise_sd > 0.0) || !std::isfinite(options.noise_sd))
    throw InvalidParameter("noise_sd must be a positive finite number");
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0))
    throw InvalidParameter("alpha must lie in [0, 1]");
  if (!(options.model_mix_prob >= 0.0 && options.model_mix_prob <= 1.0))
    throw InvalidParameter("model_mix_prob must lie in [0, 1]");
  if (!(options.covariate_mixing_weight >= 0.0 && options.covariate_mixing_weight <= 1.0))
    throw InvalidParameter("covariate_mixing_weight must lie in [0, 1]");
  if (!(std::abs(options.rho) < 1.0)) throw InvalidParameter("rho must satisfy |rho| < 1");
  if (covariates.p != p) throw InvalidParameter("covariate spec dimension differs from p");
  covariates.validate();
}

DgpSpec make_dgp(DgpKind kind, int p, const DgpOptions& options) {
  DgpSpec spec;
  spec.kind = kind;
  spec.p = p;
  spec.options = options;
  if (p < 1) throw InvalidParameter("dimension p must be >= 1, got " + std::to_string(p));
  if (kind == DgpKind::Example1) {
    spec.beta = Eigen::VectorXd::Ones(p);
    spec.delta = 2.0 * spec.beta;
    spec.theta1 = Eigen::VectorXd::Ones(p);
    spec.theta2 = spec.theta1 / 2.0;
    const double w = options.covariate_mixing_weight;
    spec.covariates.p = p;
    spec.covariates.components = {
        {Eigen::VectorXd::Zero(p), CovarianceKind::identity()},
        {Eigen::VectorXd::Zero(p), CovarianceKind::toeplitz(options.rho)}};
    spec.covariates.mixing_weights = {w, 1.0 - w};
  } else {
    if (p < 4)
      throw InvalidParameter("Example2 requires p >= 4 (beta1 uses coordinate 4), got p = " +
                             std::to_string(p));
    spec.beta0 = Eigen::VectorXd::Zero(p);
    spec.beta0(0) = 1.0;
    spec.beta0(2) = 1.0;
    spec.beta1 = Eigen::VectorXd::Zero(p);
    spec.beta1(0) = 1.0;
    spec.beta1(3) = 1.0;
    spec.gamma = Eigen::VectorXd::Zero(p);
    spec.gamma(0) = 1.0;
    spec.gamma(1) = 1.0;
    spec.covariates.p = p;
    spec.covariates.components = {{Eigen::VectorXd::Zero(p), CovarianceKind::identity()}};
    spec.covariates.mixing_weights = {1.0};
  }
  spec.validate();
  return spec;
}

std::string to_string(DgpKind kind) { return kind == DgpKind::Example1 ? "example1" : "example2"; }

DgpKind parse_dgp_kind(const std::string& s) {
  if (s == "example1" || s == "Example1") return DgpKind::Example1;
  if (s == "example2" || s == "Example2") return DgpKind::Example2;
  throw InvalidParameter("unknown dgp kind '" + s + "' (valid: example1, example2)");
}

std::string to_string(PropensityForm form) {
  return form == PropensityForm::IndexMix ? "index_mix" : "model_mix";
}

PropensityForm parse_propensity_form(const std::string& s) {
  if (s == "index_mix") return PropensityForm::IndexMix;
  if (s == "model_mix") return PropensityForm::ModelMix;
  throw InvalidParameter("unknown propensity_form '" + s + "' (valid: index_mix, model_mix)");
}

std::string to_string(NoiseCoupling noise) {
  return noise == NoiseCoupling::Shared ? "shared" : "independent";
}

NoiseCoupling parse_noise_coupling(const std::string& s) {
  if (s == "shared") return NoiseCoupling::Shared;
  if (s == "independent") return NoiseCoupling::Independent;
  throw InvalidParameter("unknown noise coupling '" + s + "' (valid: shared, independent)");
}

void Dataset::validate() const {
  const auto n = x.rows();
  if (d.size() != n || y.size() != n)
    throw InvalidInput("dataset columns have inconsistent lengths");
  if (y0.has_value() != y1.has_value())
    throw InvalidInput("potential outcomes must be both present or both absent");
  if (y0 && (y0->size() != n || y1->size() != n))
    throw InvalidInput("potential outcome columns have inconsistent lengths");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i) != 0 && d(i) != 1)
      throw InvalidInput("treatment must be 0 or 1 (row " + std::to_string(i + 1) + ")");
    if (!x.row(i).allFinite() || !std::isfinite(y(i)))
      throw InvalidInput("non-finite value in row " + std::to_string(i + 1));
    if (y0) {
      const double expected = d(i) ? (*y1)(i) : (*y0)(i);
      if (expected != y(i))
        throw InvalidInput("observed outcome disagrees with potential outcomes in row " +
                           std::to_string(i + 1));
    }
  }
}

Eigen::MatrixXd toeplitz_ar1(int p, double rho) {
  if (p < 1) throw InvalidParameter("dimension p must be >= 1");
  if (!(std::abs(rho) < 1.0)) throw InvalidParameter("Toeplitz rho must satisfy |rho| < 1");
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
  return sigma;
}

Eigen::MatrixXd sample_mvn(Eigen::Index n, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& covariance, Rng& rng) {
  if (mean.size() != covariance.rows())
    throw InvalidParameter("mean length differs from covariance dimension");
  const Eigen::MatrixXd lower = cholesky_lower(covariance);
  const auto p = mean.size();
  Eigen::MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal();
  Eigen::MatrixXd out = z * lower.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

LabeledCovariates sample_covariates_labeled(Eigen::Index n, const CovariateSpec& spec, Rng& rng) {
  MixtureSampler sampler(spec);
  LabeledCovariates out{Eigen::MatrixXd(n, spec.p), std::vector<int>(n)};
  Eigen::VectorXd row(spec.p);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.component[i] = sampler.draw_row(rng, row);
    out.x.row(i) = row.transpose();
  }
  return out;
}

Eigen::MatrixXd sample_covariates(Eigen::Index n, const CovariateSpec& spec, Rng& rng) {
  return sample_covariates_labeled(n, spec, rng).x;
}

double outcome_mean(const DgpSpec& spec, int arm, const Eigen::Ref<const Eigen::VectorXd>& x) {
  require_dim(spec, x.size());
  if (spec.kind == DgpKind::Example1) {
    const double index = std::abs(x.dot(spec.delta));
    return x.dot(spec.beta) + std::log(std::max(index, kLogFloor)) + arm;
  }
  const double base = arm ? x.dot(spec.beta1) : x.dot(spec.beta0);
  return spec.options.add_treatment_shift ? base + arm : base;
}

double propensity(const DgpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  require_dim(spec, x.size());
  if (spec.kind == DgpKind::Example2) return logistic(x.dot(spec.gamma));
  const double a = spec.options.alpha;
  const double i1 = x.dot(spec.theta1);
  const double i2 = x.dot(spec.theta2);
  if (spec.options.propensity_form == PropensityForm::IndexMix)
    return logistic(a * i1 + (1.0 - a) * i2);
  const double w = spec.options.model_mix_prob;
  return w * logistic(i1) + (1.0 - w) * logistic(i2);
}

Dataset generate(const DgpSpec& spec, Eigen::Index n, Rng& rng) {
  spec.validate();
  if (n < 0) throw InvalidParameter("sample size must be non-negative");
  MixtureSampler sampler(spec.covariates);
  const int p = spec.p;
  Dataset ds;
  ds.seed = rng.seed();
  ds.x.resize(n, p);
  ds.d.resize(n);
  ds.y.resize(n);
  Eigen::VectorXd y0(n), y1(n);
  Eigen::VectorXd row(p);
  const double sd = spec.options.noise_sd;
  for (Eigen::Index i = 0; i < n; ++i) {
    sampler.draw_row(rng, row);
    if (spec.kind == DgpKind::Example1) {
      // log|x'delta| is singular on a null set; redraw such rows.
      while (std::abs(row.dot(spec.delta)) < kLogFloor) sampler.draw_row(rng, row);
    }
    ds.x.row(i) = row.transpose();

    int treated;
    if (spec.kind == DgpKind::Example1 && spec.options.propensity_form == PropensityForm::ModelMix) {
      const bool first = rng.bernoulli(spec.options.model_mix_prob);
      treated = rng.bernoulli(logistic(row.dot(first ? spec.theta1 : spec.theta2)));
    } else {
      treated = rng.bernoulli(propensity(spec, row));
    }

    const double e0 = sd * rng.normal();
    const double e1 = spec.options.noise == NoiseCoupling::Shared ? e0 : sd * rng.normal();
    y0(i) = outcome_mean(spec, 0, row) + e0;
    y1(i) = outcome_mean(spec, 1, row) + e1;
    ds.d(i) = treated;
    ds.y(i) = treated ? y1(i) : y0(i);
  }
  ds.y0 = std::move(y0);
  ds.y1 = std::move(y1);
  return ds;
}

Dataset gen_example1(Eigen::Index n, int p, double noise_sd, Rng& rng) {
  DgpOptions opts;
  opts.noise_sd = noise_sd;
  return generate(make_dgp(DgpKind::Example1, p, opts), n, rng);
}

Dataset gen_example2(Eigen::Index n, int p, double noise_sd, Rng& rng) {
  DgpOptions opts;
  opts.noise_sd = noise_sd;
  return generate(make_dgp(DgpKind::Example2, p, opts), n, rng);
}

double analytic_ate(const DgpSpec& spec) {
  if (spec.kind == DgpKind::Example1) return 1.0;
  // Covariates are mean zero, so E[x'(beta1 - beta0)] = 0.
  return spec.options.add_treatment_shift ? 1.0 : 0.0;
}

AteTruth true_ate(const DgpSpec& spec, Eigen::Index oracle_draws, Rng& rng, AteMethod method) {
  if (method == AteMethod::Analytic) return {analytic_ate(spec), 0.0, true};
  if (oracle_draws < 2) throw InvalidParameter("oracle_draws must be at least 2");
  MixtureSampler sampler(spec.covariates);
  Eigen::VectorXd row(spec.p);
  double mean = 0.0, m2 = 0.0;
  for (Eigen::Index i = 0; i < oracle_draws; ++i) {
    sampler.draw_row(rng, row);
    const double effect = outcome_mean(spec, 1, row) - outcome_mean(spec, 0, row);
    const double delta = effect - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (effect - mean);
  }
  const double var = m2 / static_cast<double>(oracle_draws - 1);
  return {mean, std::sqrt(var / static_cast<double>(oracle_draws)), false};
}

NuisanceFit oracle_nuisances(const DgpSpec& spec) {
  auto arm_predictor = [spec](int arm) -> Predictor {
    return [spec, arm](const Eigen::MatrixXd& x) {
      require_dim(spec, x.cols());
      Eigen::VectorXd out(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = outcome_mean(spec, arm, x.row(i).transpose());
      return out;
    };
  };
  Predictor pi = [spec](const Eigen::MatrixXd& x) {
    require_dim(spec, x.cols());
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = propensity(spec, x.row(i).transpose());
    return out;
  };
  return {arm_predictor(0), arm_predictor(1), std::move(pi), "oracle(" + to_string(spec.kind) + ")"};
}

}  // namespace drate
