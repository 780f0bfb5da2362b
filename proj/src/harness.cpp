#include "drate/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <thread>

#include "drate/dataset_io.hpp"
#include "drate/error.hpp"

namespace drate {
namespace {

struct ReplicationOutcome {
  bool ok = false;
  std::string reason;
  AteEstimate estimate;
  double seconds = 0.0;
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::uint64_t cell_seed(std::uint64_t master, Eigen::Index n, int p) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(p));
}

}  // namespace

std::vector<int> ExperimentConfig::effective_dimensions() const {
  return dimensions.empty() ? std::vector<int>{dgp.p} : dimensions;
}

void ExperimentConfig::validate() const {
  if (replications < 1) throw InvalidParameter("replications must be >= 1, got " + std::to_string(replications));
  if (sample_sizes.empty()) throw InvalidParameter("sample_sizes must be nonempty");
  for (auto n : sample_sizes)
    if (n < 1) throw InvalidParameter("sample sizes must be positive");
  if (parallelism < 1) throw InvalidParameter("parallelism must be >= 1");
  if (histogram_bins < 1) throw InvalidParameter("histogram_bins must be >= 1");
  for (int p : effective_dimensions()) make_dgp(dgp.kind, p, dgp.options);
  estimator.validate();
}

int resolve_parallelism(int requested) {
  int threads = std::max(1, requested);
  if (const char* cap = std::getenv(kMaxThreadsEnv)) {
    const int limit = std::atoi(cap);
    if (limit >= 1) threads = std::min(threads, limit);
  }
  return threads;
}

double coverage(const std::vector<std::pair<double, double>>& intervals, double truth) {
  if (intervals.empty()) throw InvalidInput("coverage: no intervals");
  std::size_t hits = 0;
  for (const auto& [lo, hi] : intervals) hits += lo <= truth && truth <= hi;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(intervals.size());
}

HistogramData histogram(const std::vector<double>& values, int num_bins) {
  if (values.empty()) throw InvalidInput("histogram: no values");
  if (num_bins < 1) throw InvalidParameter("histogram: num_bins must be >= 1");
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  HistogramData h;
  const double width = (hi - lo) / num_bins;
  for (int b = 0; b <= num_bins; ++b) h.edges.push_back(b == num_bins ? hi : lo + b * width);
  h.counts.assign(static_cast<std::size_t>(num_bins), 0);
  for (double v : values) {
    auto b = static_cast<int>(std::floor((v - lo) / width));
    b = std::clamp(b, 0, num_bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

double quantile_linear(std::vector<double> values, double prob) {
  if (values.empty()) throw InvalidInput("quantile: no values");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(pos));
  const auto upper = std::min(lower + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lower);
  return values[lower] + frac * (values[upper] - values[lower]);
}

BoxplotStats boxplot_stats(const std::vector<double>& values) {
  if (values.empty()) throw InvalidInput("boxplot_stats: no values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  BoxplotStats s;
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = quantile_linear(sorted, 0.25);
  s.median = quantile_linear(sorted, 0.5);
  s.q3 = quantile_linear(sorted, 0.75);
  const double iqr = s.q3 - s.q1;
  const double fence_lo = s.q1 - 1.5 * iqr, fence_hi = s.q3 + 1.5 * iqr;
  s.lower_whisker = s.max;
  s.upper_whisker = s.min;
  for (double v : sorted) {
    if (v < fence_lo || v > fence_hi) {
      s.outliers.push_back(v);
    } else {
      s.lower_whisker = std::min(s.lower_whisker, v);
      s.upper_whisker = std::max(s.upper_whisker, v);
    }
  }
  return s;
}

bool CellResult::same_results(const CellResult& o) const {
  return n == o.n && p == o.p && true_tau == o.true_tau && replications == o.replications &&
         estimates == o.estimates && errors == o.errors && std_errors == o.std_errors && ci_lo == o.ci_lo &&
         ci_hi == o.ci_hi && covered == o.covered && clip_hits == o.clip_hits && failures == o.failures &&
         coverage_pct == o.coverage_pct && median_error == o.median_error && mean_error == o.mean_error &&
         sd_error == o.sd_error && sd_estimate == o.sd_estimate && histogram == o.histogram &&
         boxplot == o.boxplot;
}

bool CoverageReport::same_results(const CoverageReport& o) const {
  if (config != o.config || cells.size() != o.cells.size()) return false;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!cells[i].same_results(o.cells[i])) return false;
  return true;
}

CoverageReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  struct Cell {
    DgpSpec spec;
    Eigen::Index n;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int p : config.effective_dimensions())
    for (auto n : config.sample_sizes)
      cells.push_back({make_dgp(config.dgp.kind, p, config.dgp.options), n, cell_seed(config.master_seed, n, p)});

  std::vector<NuisanceFitter> fitters;
  for (const auto& c : cells) fitters.push_back(make_fitter(config.learner, c.spec));

  const auto reps = static_cast<std::size_t>(config.replications);
  const std::size_t total = cells.size() * reps;
  std::vector<ReplicationOutcome> outcomes(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  const std::string learner_name = config.learner.name();

  auto worker = [&] {
    for (std::size_t task = next++; task < total; task = next++) {
      const auto& cell = cells[task / reps];
      const auto r = task % reps;
      auto& out = outcomes[task];
      const auto start = std::chrono::steady_clock::now();
      try {
        const std::uint64_t seed = derive_seed(cell.seed, r);
        Rng data_rng(derive_seed(seed, "data"));
        const Dataset data = generate(cell.spec, cell.n, data_rng);
        Rng est_rng(derive_seed(seed, "estimate"));
        out.estimate = estimate_ate(data, fitters[task / reps], config.estimator, est_rng, learner_name);
        out.ok = true;
      } catch (const std::exception& e) {
        out.reason = e.what();
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, total);
      }
    }
  };
  const int threads = std::min<int>(resolve_parallelism(config.parallelism), static_cast<int>(std::max<std::size_t>(total, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  CoverageReport report;
  report.config = experiment_to_json(config, true);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellResult cell;
    cell.n = cells[c].n;
    cell.p = cells[c].spec.p;
    cell.true_tau = analytic_ate(cells[c].spec);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& o = outcomes[c * reps + r];
      cell.runtime_seconds += o.seconds;
      if (!o.ok) {
        cell.failures.push_back({static_cast<int>(r), o.reason});
        continue;
      }
      const auto& e = o.estimate;
      cell.replications.push_back(static_cast<int>(r));
      cell.estimates.push_back(e.tau_hat);
      cell.errors.push_back(e.tau_hat - cell.true_tau);
      cell.std_errors.push_back(e.std_error);
      cell.ci_lo.push_back(e.ci_lo);
      cell.ci_hi.push_back(e.ci_hi);
      cell.covered.push_back(e.ci_lo <= cell.true_tau && cell.true_tau <= e.ci_hi);
      cell.clip_hits.push_back(e.clip_hits);
    }
    if (!cell.estimates.empty()) {
      std::vector<std::pair<double, double>> intervals;
      for (std::size_t i = 0; i < cell.ci_lo.size(); ++i) intervals.emplace_back(cell.ci_lo[i], cell.ci_hi[i]);
      cell.coverage_pct = coverage(intervals, cell.true_tau);
      cell.median_error = quantile_linear(cell.errors, 0.5);
      cell.mean_error = mean_of(cell.errors);
      cell.sd_error = sd_of(cell.errors);
      cell.sd_estimate = sd_of(cell.estimates);
      cell.histogram = histogram(cell.errors, config.histogram_bins);
      cell.boxplot = boxplot_stats(cell.errors);
    }
    report.cells.push_back(std::move(cell));
  }
  return report;
}

}  // namespace drate
