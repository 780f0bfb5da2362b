#include <cstdio>
#include <fstream>
#include <sstream>

#include "drate/dataset_io.hpp"
#include "drate/error.hpp"
#include "drate/harness.hpp"

namespace drate {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string cell_tag(const CellResult& cell) { return std::to_string(cell.n) + "_" + std::to_string(cell.p); }

Json cell_to_json(const CellResult& c) {
  Json failures = Json::array();
  for (const auto& f : c.failures) failures.push_back({{"replication", f.replication}, {"reason", f.reason}});
  return {{"n", c.n},
          {"p", c.p},
          {"true_tau", c.true_tau},
          {"replications", c.replications},
          {"estimates", c.estimates},
          {"errors", c.errors},
          {"std_errors", c.std_errors},
          {"ci_lo", c.ci_lo},
          {"ci_hi", c.ci_hi},
          {"covered", c.covered},
          {"clip_hits", c.clip_hits},
          {"failures", failures},
          {"excluded", c.excluded()},
          {"coverage_pct", c.coverage_pct},
          {"median_error", c.median_error},
          {"mean_error", c.mean_error},
          {"sd_error", c.sd_error},
          {"sd_estimate", c.sd_estimate},
          {"histogram", {{"edges", c.histogram.edges}, {"counts", c.histogram.counts}}},
          {"boxplot",
           {{"min", c.boxplot.min},
            {"q1", c.boxplot.q1},
            {"median", c.boxplot.median},
            {"q3", c.boxplot.q3},
            {"max", c.boxplot.max},
            {"lower_whisker", c.boxplot.lower_whisker},
            {"upper_whisker", c.boxplot.upper_whisker},
            {"outliers", c.boxplot.outliers}}}};
}

CellResult cell_from_json(const Json& j) {
  CellResult c;
  try {
    c.n = j.at("n").get<Eigen::Index>();
    c.p = j.at("p").get<int>();
    c.true_tau = j.at("true_tau").get<double>();
    c.replications = j.at("replications").get<std::vector<int>>();
    c.estimates = j.at("estimates").get<std::vector<double>>();
    c.errors = j.at("errors").get<std::vector<double>>();
    c.std_errors = j.at("std_errors").get<std::vector<double>>();
    c.ci_lo = j.at("ci_lo").get<std::vector<double>>();
    c.ci_hi = j.at("ci_hi").get<std::vector<double>>();
    c.covered = j.at("covered").get<std::vector<bool>>();
    c.clip_hits = j.at("clip_hits").get<std::vector<std::size_t>>();
    for (const auto& f : j.at("failures"))
      c.failures.push_back({f.at("replication").get<int>(), f.at("reason").get<std::string>()});
    c.coverage_pct = j.at("coverage_pct").get<double>();
    c.median_error = j.at("median_error").get<double>();
    c.mean_error = j.at("mean_error").get<double>();
    c.sd_error = j.at("sd_error").get<double>();
    c.sd_estimate = j.at("sd_estimate").get<double>();
    c.histogram.edges = j.at("histogram").at("edges").get<std::vector<double>>();
    c.histogram.counts = j.at("histogram").at("counts").get<std::vector<std::size_t>>();
    const auto& b = j.at("boxplot");
    c.boxplot = {b.at("min").get<double>(),           b.at("q1").get<double>(),
                 b.at("median").get<double>(),        b.at("q3").get<double>(),
                 b.at("max").get<double>(),           b.at("lower_whisker").get<double>(),
                 b.at("upper_whisker").get<double>(), b.at("outliers").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report cell: ") + e.what());
  }
  return c;
}

}  // namespace

Json experiment_to_json(const ExperimentConfig& config, bool for_report) {
  std::vector<long long> sizes(config.sample_sizes.begin(), config.sample_sizes.end());
  Json j = {{"dgp", dgp_to_json(config.dgp)},
            {"dimensions", config.effective_dimensions()},
            {"sample_sizes", sizes},
            {"replications", config.replications},
            {"learner", learner_to_json(config.learner)},
            {"k_folds", config.estimator.k_folds},
            {"clip", {config.estimator.clip.lo, config.estimator.clip.hi}},
            {"ci_level", config.estimator.ci_level},
            {"paper_literal", config.estimator.paper_literal},
            {"master_seed", config.master_seed},
            {"histogram_bins", config.histogram_bins}};
  if (config.estimator.split_fraction) j["split_fraction"] = *config.estimator.split_fraction;
  if (!for_report) {
    j["parallelism"] = config.parallelism;
    j["output_dir"] = config.output_dir.string();
  }
  return j;
}

ExperimentConfig experiment_from_json(const Json& j) {
  constexpr std::string_view ctx = "config";
  check_keys(j,
             {"dgp", "dimensions", "sample_sizes", "replications", "learner", "k_folds", "split_fraction", "clip",
              "ci_level", "paper_literal", "master_seed", "parallelism", "output_dir", "histogram_bins"},
             ctx);
  ExperimentConfig c;
  if (!j.contains("dgp")) throw InvalidParameter("config.dgp: required");
  c.dgp = dgp_from_json(j.at("dgp"));
  if (j.contains("dimensions")) c.dimensions = get_field<std::vector<int>>(j, "dimensions", ctx);
  if (j.contains("sample_sizes")) {
    const auto sizes = get_field<std::vector<long long>>(j, "sample_sizes", ctx);
    c.sample_sizes.assign(sizes.begin(), sizes.end());
  }
  c.replications = get_field_or(j, "replications", c.replications, ctx);
  if (j.contains("learner")) c.learner = learner_from_json(j.at("learner"));
  c.estimator.k_folds = get_field_or(j, "k_folds", c.estimator.k_folds, ctx);
  if (j.contains("split_fraction")) c.estimator.split_fraction = get_field<double>(j, "split_fraction", ctx);
  if (j.contains("clip")) {
    const auto clip = get_field<std::vector<double>>(j, "clip", ctx);
    if (clip.size() != 2) throw InvalidParameter("config.clip: expected [lo, hi]");
    c.estimator.clip = {clip[0], clip[1]};
  }
  c.estimator.ci_level = get_field_or(j, "ci_level", c.estimator.ci_level, ctx);
  c.estimator.paper_literal = get_field_or(j, "paper_literal", c.estimator.paper_literal, ctx);
  c.master_seed = get_field_or(j, "master_seed", c.master_seed, ctx);
  c.parallelism = get_field_or(j, "parallelism", c.parallelism, ctx);
  if (j.contains("output_dir")) c.output_dir = get_field<std::string>(j, "output_dir", ctx);
  c.histogram_bins = get_field_or(j, "histogram_bins", c.histogram_bins, ctx);
  c.validate();
  return c;
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InvalidParameter("override '" + assignment + "' must have the form key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw InvalidParameter("override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) {
      if (!node->is_string() && !node->is_null())
        throw InvalidParameter("override '" + assignment + "': '" + key + "' is not inside an object");
      // A preset string such as "forest" expands into an object on demand.
      Json expanded = Json::object();
      if (node->is_string()) expanded["preset"] = *node;
      *node = expanded;
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::vector<std::string> preset_names() {
  return {"example1-small", "example1-p2", "example1-p20", "example2-small", "example2-p200", "oracle-example1",
          "glm-example2"};
}

ExperimentConfig experiment_preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "example1-small") {
    c.dgp = make_dgp(DgpKind::Example1, 2);
    c.sample_sizes = {500, 1000};
    c.replications = 100;
  } else if (name == "example1-p2") {
    c.dgp = make_dgp(DgpKind::Example1, 2);
    c.sample_sizes = {1000, 2000, 6000};
    c.replications = 200;
  } else if (name == "example1-p20") {
    c.dgp = make_dgp(DgpKind::Example1, 20);
    c.sample_sizes = {1000, 2000, 6000};
    c.replications = 200;
  } else if (name == "example2-small") {
    c.dgp = make_dgp(DgpKind::Example2, 200);
    c.sample_sizes = {1000, 2000};
    c.replications = 100;
  } else if (name == "example2-p200") {
    c.dgp = make_dgp(DgpKind::Example2, 200);
    c.sample_sizes = {1000, 2000, 6000};
    c.replications = 1000;
  } else if (name == "oracle-example1") {
    c.dgp = make_dgp(DgpKind::Example1, 2);
    c.sample_sizes = {1000};
    c.replications = 500;
    c.learner = LearnerConfig::oracle();
  } else if (name == "glm-example2") {
    c.dgp = make_dgp(DgpKind::Example2, 10);
    c.sample_sizes = {4000};
    c.replications = 500;
    c.learner = LearnerConfig::glm();
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw InvalidParameter("unknown preset '" + name + "' (valid: " + names + ")");
  }
  return c;
}

Json report_to_json(const CoverageReport& report) {
  Json cells = Json::array();
  for (const auto& c : report.cells) cells.push_back(cell_to_json(c));
  return {{"format", "drate-coverage-report"}, {"version", 1}, {"config", report.config}, {"cells", cells}};
}

CoverageReport report_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "drate-coverage-report" || j.value("version", 0) != 1)
    throw DataError("not a version-1 coverage report");
  CoverageReport report;
  report.config = j.at("config");
  for (const auto& c : j.at("cells")) report.cells.push_back(cell_from_json(c));
  return report;
}

std::string summary_csv(const CoverageReport& report) {
  std::string out = "n,p,coverage_pct,median_error,mean_error,sd_error,excluded\n";
  for (const auto& c : report.cells) {
    out += std::to_string(c.n) + "," + std::to_string(c.p) + "," + format_double(c.coverage_pct) + "," +
           format_double(c.median_error) + "," + format_double(c.mean_error) + "," + format_double(c.sd_error) +
           "," + std::to_string(c.excluded()) + "\n";
  }
  return out;
}

std::string errors_csv(const CellResult& c) {
  std::string out = "replication,estimate,error,std_error,ci_lo,ci_hi,covered,clip_hits\n";
  for (std::size_t i = 0; i < c.estimates.size(); ++i) {
    out += std::to_string(c.replications[i]) + "," + format_double(c.estimates[i]) + "," +
           format_double(c.errors[i]) + "," + format_double(c.std_errors[i]) + "," + format_double(c.ci_lo[i]) +
           "," + format_double(c.ci_hi[i]) + "," + (c.covered[i] ? "1" : "0") + "," +
           std::to_string(c.clip_hits[i]) + "\n";
  }
  return out;
}

std::string histogram_csv(const CellResult& c) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < c.histogram.counts.size(); ++b)
    out += format_double(c.histogram.edges[b]) + "," + format_double(c.histogram.edges[b + 1]) + "," +
           std::to_string(c.histogram.counts[b]) + "\n";
  return out;
}

std::vector<std::filesystem::path> write_report(const CoverageReport& report,
                                                const std::filesystem::path& output_dir) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create '" + output_dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto path = output_dir / name;
    write_text(path, text);
    written.push_back(path);
  };
  emit("summary.csv", summary_csv(report));
  Json timing = Json::array();
  for (const auto& c : report.cells) {
    emit("errors_" + cell_tag(c) + ".csv", errors_csv(c));
    emit("histogram_" + cell_tag(c) + ".csv", histogram_csv(c));
    timing.push_back({{"n", c.n}, {"p", c.p}, {"runtime_seconds", c.runtime_seconds}});
  }
  emit("report.json", report_to_json(report).dump(2) + "\n");
  emit("timing.json", timing.dump(2) + "\n");
  return written;
}

std::string summary_table(const CoverageReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%8s %5s %10s %13s %11s %10s %9s\n", "n", "p", "coverage%", "median_error",
                "mean_error", "sd_error", "excluded");
  out += line;
  for (const auto& c : report.cells) {
    std::snprintf(line, sizeof line, "%8lld %5d %10.1f %13.4f %11.4f %10.4f %9zu\n", static_cast<long long>(c.n),
                  c.p, c.coverage_pct, c.median_error, c.mean_error, c.sd_error, c.excluded());
    out += line;
  }
  return out;
}

}  // namespace drate
