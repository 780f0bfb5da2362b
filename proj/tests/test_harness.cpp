#include <doctest.h>

#include <drate/error.hpp>
#include <drate/harness.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drate;
namespace fs = std::filesystem;

namespace {

ExperimentConfig oracle_config(int reps, std::vector<Eigen::Index> sizes = {1000}) {
  auto c = experiment_preset("oracle-example1");
  c.replications = reps;
  c.sample_sizes = std::move(sizes);
  return c;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("drate-test-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("coverage counts closed intervals") {
  std::vector<std::pair<double, double>> ci(200, {0.0, 2.0});
  CHECK(coverage(ci, 1.0) == 100.0);
  CHECK(coverage(ci, 3.0) == 0.0);
  CHECK(coverage(ci, 2.0) == 100.0);
  for (int i = 0; i < 33; ++i) ci[static_cast<std::size_t>(i)] = {1.5, 2.0};
  CHECK(coverage(ci, 1.0) == 83.5);
  CHECK_THROWS_AS(coverage({}, 0.0), InvalidInput);
}

TEST_CASE("histogram bins") {
  const auto flat = histogram({0.3, 0.3, 0.3}, 5);
  std::size_t occupied = 0, total = 0;
  for (auto c : flat.counts) {
    occupied += c > 0;
    total += c;
  }
  CHECK(occupied == 1);
  CHECK(total == 3);
  CHECK(flat.edges.size() == 6);

  const auto h = histogram({0.0, 1.0, 2.0, 3.0, 4.0}, 4);
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == 4.0);
  CHECK(h.counts == std::vector<std::size_t>{1, 1, 1, 2});
}

TEST_CASE("boxplot and quantiles") {
  const auto b = boxplot_stats({1, 2, 3, 4});
  CHECK(b.median == 2.5);
  CHECK(b.q1 == 1.75);
  CHECK(b.q3 == 3.25);
  CHECK(b.min == 1);
  CHECK(b.max == 4);
  CHECK(b.outliers.empty());

  const auto flat = boxplot_stats({0.7, 0.7, 0.7});
  CHECK(flat.min == 0.7);
  CHECK(flat.q1 == 0.7);
  CHECK(flat.median == 0.7);
  CHECK(flat.q3 == 0.7);
  CHECK(flat.max == 0.7);

  CHECK(boxplot_stats({-2, -1, 0, 1, 2}).median == 0.0);

  const auto o = boxplot_stats({1, 2, 3, 4, 100});
  CHECK(o.outliers == std::vector<double>{100});
  CHECK(o.upper_whisker == 4);
  CHECK(quantile_linear({5, 1, 3}, 0.5) == 3);
}

TEST_CASE("oracle experiment covers at the nominal rate") {
  const auto r = run_experiment(oracle_config(500));
  REQUIRE(r.cells.size() == 1);
  const auto& c = r.cells[0];
  CHECK(c.estimates.size() == 500);
  CHECK(c.coverage_pct >= 92.0);
  CHECK(c.coverage_pct <= 98.0);
  CHECK(c.true_tau == 1.0);
}

TEST_CASE("one replication gives an all or nothing coverage") {
  const auto r = run_experiment(oracle_config(1));
  const double cov = r.cells[0].coverage_pct;
  CHECK((cov == 0.0 || cov == 100.0));
  CHECK(r.cells[0].estimates.size() == 1);
}

TEST_CASE("report bytes do not depend on parallelism or repetition") {
  auto cfg = experiment_preset("example1-small");
  cfg.replications = 6;
  cfg.sample_sizes = {300};
  cfg.learner.forest.base.num_trees = 20;
  cfg.learner.forest.cv_num_trees = 5;
  const auto a = report_to_json(run_experiment(cfg)).dump();
  const auto b = report_to_json(run_experiment(cfg)).dump();
  cfg.parallelism = 4;
  cfg.output_dir = "elsewhere";
  const auto c = report_to_json(run_experiment(cfg)).dump();
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("replications are nested across run lengths") {
  const auto shorter = run_experiment(oracle_config(10, {500}));
  const auto longer = run_experiment(oracle_config(20, {500}));
  const auto& s = shorter.cells[0];
  const auto& l = longer.cells[0];
  for (std::size_t i = 0; i < s.estimates.size(); ++i) {
    CHECK(s.estimates[i] == l.estimates[i]);
    CHECK(s.ci_lo[i] == l.ci_lo[i]);
  }
}

TEST_CASE("stored intervals recount to the reported coverage") {
  const auto r = run_experiment(oracle_config(60, {400, 800}));
  for (const auto& c : r.cells) {
    std::vector<std::pair<double, double>> ci;
    for (std::size_t i = 0; i < c.ci_lo.size(); ++i) ci.emplace_back(c.ci_lo[i], c.ci_hi[i]);
    CHECK(coverage(ci, c.true_tau) == c.coverage_pct);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ci.size(); ++i) {
      const bool in = ci[i].first <= c.true_tau && c.true_tau <= ci[i].second;
      CHECK(in == c.covered[i]);
      hits += in;
    }
    CHECK(c.coverage_pct == 100.0 * static_cast<double>(hits) / static_cast<double>(ci.size()));
  }
}

TEST_CASE("failed replications are recorded and excluded") {
  auto cfg = oracle_config(40, {8});
  cfg.dgp = make_dgp(DgpKind::Example1, 20);
  const auto r = run_experiment(cfg);
  const auto& c = r.cells[0];
  CHECK(c.excluded() > 0);
  CHECK(c.estimates.size() + c.excluded() == 40);
  for (const auto& f : c.failures) CHECK(!f.reason.empty());
  const auto csv = summary_csv(r);
  CHECK(csv.find("," + std::to_string(c.excluded()) + "\n") != std::string::npos);
}

TEST_CASE("written report round trips and audits") {
  const auto r = run_experiment(oracle_config(30, {400, 600}));
  const auto dir = scratch_dir("report");
  write_report(r, dir);

  std::ifstream in(dir / "report.json");
  const auto back = report_from_json(Json::parse(in));
  CHECK(back.same_results(r));
  CHECK(back.config == r.config);

  const auto summary = read_csv(dir / "summary.csv");
  REQUIRE(summary.size() == r.cells.size() + 1);
  CHECK(summary[0] == std::vector<std::string>{"n", "p", "coverage_pct", "median_error", "mean_error", "sd_error",
                                               "excluded"});
  for (const auto& row : summary) CHECK(row.size() == 7);

  for (const auto& c : r.cells) {
    const auto tag = std::to_string(c.n) + "_" + std::to_string(c.p);
    const auto rows = read_csv(dir / ("errors_" + tag + ".csv"));
    REQUIRE(rows.size() == c.estimates.size() + 1);
    std::vector<double> errs;
    double covered = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].size() == rows[0].size());
      errs.push_back(std::stod(rows[i][2]));
      covered += rows[i][6] == "1";
    }
    CHECK(100.0 * covered / static_cast<double>(errs.size()) == c.coverage_pct);
    CHECK(quantile_linear(errs, 0.5) == c.median_error);
    double m = 0;
    for (double e : errs) m += e;
    CHECK(m / static_cast<double>(errs.size()) == doctest::Approx(c.mean_error).epsilon(1e-12));

    const auto hist = read_csv(dir / ("histogram_" + tag + ".csv"));
    CHECK(hist.size() == 31);
  }
  CHECK(fs::exists(dir / "timing.json"));
  fs::remove_all(dir);
}

TEST_CASE("config documents, overrides and presets") {
  const auto cfg = experiment_preset("example2-small");
  const auto j = experiment_to_json(cfg);
  const auto back = experiment_from_json(j);
  CHECK(experiment_to_json(back) == j);
  CHECK_FALSE(experiment_to_json(cfg, true).contains("parallelism"));
  CHECK_FALSE(experiment_to_json(cfg, true).contains("output_dir"));

  Json doc = j;
  apply_override(doc, "replications=7");
  apply_override(doc, "learner=glm");
  apply_override(doc, "dgp.noise_sd=2.5");
  const auto o = experiment_from_json(doc);
  CHECK(o.replications == 7);
  CHECK(o.learner.name() == "glm");
  CHECK(o.dgp.options.noise_sd == 2.5);

  Json typo = j;
  typo["replicatons"] = 3;
  CHECK_THROWS_AS(experiment_from_json(typo), InvalidParameter);
  CHECK_THROWS_AS(experiment_preset("nope"), InvalidParameter);
  for (const auto& name : preset_names()) CHECK_NOTHROW(experiment_preset(name).validate());

  auto bad = cfg;
  bad.replications = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidParameter);
}

TEST_CASE("parallelism cap from the environment") {
  setenv(kMaxThreadsEnv, "2", 1);
  CHECK(resolve_parallelism(8) == 2);
  CHECK(resolve_parallelism(1) == 1);
  unsetenv(kMaxThreadsEnv);
  CHECK(resolve_parallelism(8) == 8);
}
