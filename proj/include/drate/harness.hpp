#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "drate/aipw.hpp"
#include "drate/dgp.hpp"
#include "drate/json_util.hpp"
#include "drate/learners.hpp"

namespace drate {

struct ExperimentConfig {
  DgpSpec dgp = make_dgp(DgpKind::Example1, 2);
  std::vector<int> dimensions;  // empty: just dgp.p
  std::vector<Eigen::Index> sample_sizes{1000, 2000, 6000};
  int replications = 200;
  LearnerConfig learner;
  EstimatorConfig estimator;
  std::uint64_t master_seed = 20210601;
  int parallelism = 1;
  std::filesystem::path output_dir = "drate-out";
  int histogram_bins = 30;

  std::vector<int> effective_dimensions() const;
  void validate() const;
};

/// Config document. parallelism and output_dir are execution settings and
/// are left out when `for_report` is set, so report bytes do not depend on them.
Json experiment_to_json(const ExperimentConfig& config, bool for_report = false);
ExperimentConfig experiment_from_json(const Json& j);

/// Applies "dotted.path=value" to a JSON document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

/// Named configurations; throws InvalidParameter listing the names.
ExperimentConfig experiment_preset(const std::string& name);
std::vector<std::string> preset_names();

/// Environment variable that caps worker threads for run_experiment.
inline constexpr const char* kMaxThreadsEnv = "DRATE_MAX_THREADS";
int resolve_parallelism(int requested);

struct ReplicationFailure {
  int replication = 0;
  std::string reason;
  friend bool operator==(const ReplicationFailure&, const ReplicationFailure&) = default;
};

struct HistogramData {
  std::vector<double> edges;  // num_bins + 1 entries
  std::vector<std::size_t> counts;
  friend bool operator==(const HistogramData&, const HistogramData&) = default;
};

struct BoxplotStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double lower_whisker = 0, upper_whisker = 0;
  std::vector<double> outliers;
  friend bool operator==(const BoxplotStats&, const BoxplotStats&) = default;
};

struct CellResult {
  Eigen::Index n = 0;
  int p = 0;
  double true_tau = 0.0;
  // Per successful replication, ordered by replication index.
  std::vector<int> replications;
  std::vector<double> estimates;
  std::vector<double> errors;
  std::vector<double> std_errors;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::vector<bool> covered;
  std::vector<std::size_t> clip_hits;
  std::vector<ReplicationFailure> failures;
  // Aggregates over successful replications.
  double coverage_pct = 0.0;
  double median_error = 0.0;
  double mean_error = 0.0;
  double sd_error = 0.0;
  double sd_estimate = 0.0;
  HistogramData histogram;
  BoxplotStats boxplot;
  double runtime_seconds = 0.0;  // not serialized into report.json

  std::size_t excluded() const { return failures.size(); }
  bool same_results(const CellResult& other) const;
};

struct CoverageReport {
  Json config;
  std::vector<CellResult> cells;
  bool same_results(const CoverageReport& other) const;
};

/// Percent of intervals with lo <= truth <= hi. Throws InvalidInput when empty.
double coverage(const std::vector<std::pair<double, double>>& intervals, double truth);

/// Equal-width bins over [min, max]; the maximum lands in the last bin.
HistogramData histogram(const std::vector<double>& values, int num_bins);

/// Quantile with linear interpolation between order statistics.
double quantile_linear(std::vector<double> values, double prob);

/// Median, quartiles (linear interpolation), 1.5 IQR whiskers and outliers.
BoxplotStats boxplot_stats(const std::vector<double>& values);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (p, n) cell. Replication r of a cell uses a seed derived from
/// (master_seed, n, p, r); failures are recorded per replication and
/// excluded from aggregates. Output is independent of parallelism.
CoverageReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

Json report_to_json(const CoverageReport& report);
CoverageReport report_from_json(const Json& j);

/// Writes summary.csv, errors_<n>_<p>.csv, histogram_<n>_<p>.csv,
/// report.json and timing.json. Returns the paths written.
std::vector<std::filesystem::path> write_report(const CoverageReport& report,
                                                const std::filesystem::path& output_dir);

std::string summary_csv(const CoverageReport& report);
std::string errors_csv(const CellResult& cell);
std::string histogram_csv(const CellResult& cell);

/// Fixed-width text table of cells and coverage for terminal output.
std::string summary_table(const CoverageReport& report);

}  // namespace drate
