#include "drate/cli.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "drate/aipw.hpp"
#include "drate/dataset_io.hpp"
#include "drate/error.hpp"
#include "drate/harness.hpp"
#include "drate/learners.hpp"

namespace drate::cli {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  Json j = Json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw DataError("'" + path + "' is not valid JSON");
  return j;
}

struct GenOptions {
  std::string config;
  std::string kind;
  int p = 0;
  double noise_sd = 0.0;
  std::vector<std::string> overrides;
  long long n = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  Json doc = o.config.empty() ? Json{{"kind", "example1"}, {"p", 2}} : load_json_file(o.config);
  if (!o.kind.empty()) doc["kind"] = o.kind;
  if (o.p != 0) doc["p"] = o.p;
  if (o.noise_sd != 0.0) doc["noise_sd"] = o.noise_sd;
  for (const auto& ov : o.overrides) apply_override(doc, ov);
  const DgpSpec spec = dgp_from_json(doc);
  if (o.n < 1) throw InvalidParameter("n: must be >= 1");

  Rng rng(o.seed);
  const Dataset ds = generate(spec, o.n, rng);
  write_dataset_csv(ds, o.out);
  write_meta({spec, ds.n(), o.seed}, meta_path_for(o.out));

  char line[256];
  std::snprintf(line, sizeof line, "n=%lld p=%d treated_fraction=%.6f true_tau=%s\n", static_cast<long long>(ds.n()),
                spec.p, static_cast<double>(ds.treated_count()) / static_cast<double>(ds.n()),
                format_double(analytic_ate(spec)).c_str());
  out << line;
  return kOk;
}

struct EstimateOptions {
  std::string data;
  std::string dgp;
  std::string learner = "forest";
  int k_folds = 2;
  double split_fraction = 0.0;
  double ci_level = 0.95;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
  std::uint64_t seed = 0;
  bool paper_literal = false;
  int num_trees = 500;
  bool no_tune = false;
  int threads = 1;
};

int cmd_estimate(const EstimateOptions& o, CLI::App& sub, std::ostream& out) {
  if (o.k_folds == 1 && sub.count("--split-fraction") == 0)
    throw UsageError("--k-folds 1 requires --split-fraction");

  EstimatorConfig est;
  est.k_folds = o.k_folds;
  if (sub.count("--split-fraction")) est.split_fraction = o.split_fraction;
  est.ci_level = o.ci_level;
  est.clip = {o.clip_lo, o.clip_hi};
  est.paper_literal = o.paper_literal;
  est.validate();

  LearnerConfig learner = parse_learner(o.learner);
  learner.forest.base.num_trees = o.num_trees;
  learner.forest.tune = !o.no_tune;
  learner.forest.threads = o.threads;

  const Dataset data = read_dataset_csv(o.data);
  data.validate();
  std::optional<DgpSpec> truth;
  if (!o.dgp.empty()) {
    truth = dgp_from_json(load_json_file(o.dgp));
  } else if (auto meta = read_meta_if_present(o.data)) {
    truth = meta->dgp;
  }
  if (truth && truth->p != data.p())
    throw DataError("dataset has " + std::to_string(data.p()) + " covariates but the process has p = " +
                    std::to_string(truth->p));
  if (learner.needs_oracle() && !truth)
    throw UsageError("learner '" + learner.name() + "' needs --dgp or a metadata sidecar next to the data");

  Rng rng(o.seed);
  const AteEstimate result = estimate_ate(data, make_fitter(learner, truth), est, rng, learner.name());
  out << ate_to_json(result).dump(2) << "\n";
  return kOk;
}

struct BenchOptions {
  std::string config;
  std::string preset;
  std::vector<std::string> overrides;
  int replications = -1;
  int parallelism = 0;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
};

int cmd_bench(const BenchOptions& o, CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (!o.config.empty() && !o.preset.empty()) throw UsageError("--config and --preset are mutually exclusive");
  Json doc = !o.config.empty() ? load_json_file(o.config)
                               : experiment_to_json(experiment_preset(o.preset.empty() ? "example1-small" : o.preset));
  for (const auto& ov : o.overrides) apply_override(doc, ov);
  if (sub.count("--replications")) doc["replications"] = o.replications;
  if (sub.count("--parallelism")) doc["parallelism"] = o.parallelism;
  if (sub.count("--output-dir")) doc["output_dir"] = o.output_dir;
  if (sub.count("--seed")) doc["master_seed"] = o.seed;
  const ExperimentConfig config = experiment_from_json(doc);

  ProgressFn progress;
  if (!o.quiet) {
    progress = [&err](std::size_t done, std::size_t total) {
      if (done == total || done % 10 == 0) err << "\rreplications " << done << "/" << total << (done == total ? "\n" : "") << std::flush;
    };
  }
  const CoverageReport report = run_experiment(config, progress);
  write_report(report, config.output_dir);
  out << summary_table(report);
  return kOk;
}

struct ReportOptions {
  std::string input;
  std::string output_dir;
};

int cmd_report(const ReportOptions& o, std::ostream& out) {
  const CoverageReport report = report_from_json(load_json_file(o.input));
  if (!o.output_dir.empty()) write_report(report, o.output_dir);
  out << summary_table(report);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-fitted doubly robust ATE estimation and Monte Carlo coverage studies", "drate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "drate 1.0.0");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset (CSV plus metadata sidecar)");
  gen_cmd->add_option("--config", gen.config, "Process spec JSON file");
  gen_cmd->add_option("--kind", gen.kind, "Process kind: example1 or example2 (default example1, or the config value)");
  gen_cmd->add_option("--p", gen.p, "Covariate dimension (default 2, or the config value)");
  gen_cmd->add_option("--noise-sd", gen.noise_sd, "Outcome noise standard deviation (default 1, or the config value)");
  gen_cmd->add_option("--set", gen.overrides, "Override a spec key: key=value (repeatable)");
  gen_cmd->add_option("--n", gen.n, "Number of units")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV path; metadata goes to <stem>.meta.json")->required();

  EstimateOptions est;
  auto* est_cmd = app.add_subcommand("estimate", "Estimate the ATE of a dataset and print JSON");
  est_cmd->add_option("--data", est.data, "Dataset CSV (x1..xp,d,y[,y0,y1])")->required();
  est_cmd->add_option("--dgp", est.dgp, "Process spec JSON for oracle learners (default: metadata sidecar)");
  est_cmd->add_option("--learner", est.learner, "forest, glm, oracle or <outcome>+<propensity>")
      ->capture_default_str();
  est_cmd->add_option("--k-folds", est.k_folds, "Cross-fitting folds; 1 selects a single split")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  est_cmd->add_option("--split-fraction", est.split_fraction, "Fitting share of the single split (k-folds 1)")
      ->check(CLI::Range(0.0, 1.0));
  est_cmd->add_option("--ci-level", est.ci_level, "Confidence level in (0, 1)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  est_cmd->add_option("--clip-lo", est.clip_lo, "Lower propensity clip")->capture_default_str();
  est_cmd->add_option("--clip-hi", est.clip_hi, "Upper propensity clip")->capture_default_str();
  est_cmd->add_option("--seed", est.seed, "Random seed")->capture_default_str();
  est_cmd->add_flag("--paper-literal", est.paper_literal, "Use y - pi_d(x) as the residual");
  est_cmd->add_option("--num-trees", est.num_trees, "Trees per forest")->capture_default_str();
  est_cmd->add_flag("--no-tune", est.no_tune, "Skip cross-validated forest tuning");
  est_cmd->add_option("--threads", est.threads, "Threads for forest fitting")->capture_default_str();

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run a Monte Carlo coverage experiment");
  bench_cmd->add_option("--config", bench.config, "Experiment config JSON file");
  std::string preset_help = "Named preset (default example1-small):";
  for (const auto& name : preset_names()) preset_help += " " + name;
  bench_cmd->add_option("--preset", bench.preset, preset_help);
  bench_cmd->add_option("--set", bench.overrides, "Override a config key: dotted.key=value (repeatable)");
  bench_cmd->add_option("--replications", bench.replications, "Replications per cell (default: from the config)");
  bench_cmd->add_option("--parallelism", bench.parallelism, "Worker threads, capped by DRATE_MAX_THREADS (default: from the config, 1)");
  bench_cmd->add_option("--output-dir", bench.output_dir, "Directory for report files (default: from the config, drate-out)");
  bench_cmd->add_option("--seed", bench.seed, "Master seed (default: from the config, 20210601)");
  bench_cmd->add_flag("--quiet", bench.quiet, "Suppress progress on the error stream");

  ReportOptions rep;
  auto* report_cmd = app.add_subcommand("report", "Print (and optionally re-export) a saved report.json");
  report_cmd->add_option("--input", rep.input, "report.json path")->required();
  report_cmd->add_option("--output-dir", rep.output_dir, "Rewrite CSV and JSON files into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*est_cmd) return cmd_estimate(est, *est_cmd, out);
    if (*bench_cmd) return cmd_bench(bench, *bench_cmd, out, err);
    if (*report_cmd) return cmd_report(rep, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidParameter& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InvalidInput& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace drate::cli
