#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "drate-cli-test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result drate(const std::string& args) {
  const auto err_file = work_dir() / "stderr.txt";
  const std::string cmd = std::string("\"") + DRATE_BIN + "\" " + args + " 2> \"" + err_file.string() + "\"";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  return r;
}

std::string p(const fs::path& path) { return "\"" + path.string() + "\""; }

}  // namespace

TEST_CASE("help output matches golden files") {
  const std::pair<const char*, const char*> cases[] = {{"--help", "help_main.txt"},
                                                       {"gen --help", "help_gen.txt"},
                                                       {"estimate --help", "help_estimate.txt"},
                                                       {"bench --help", "help_bench.txt"},
                                                       {"report --help", "help_report.txt"}};
  for (const auto& [args, file] : cases) {
    const auto r = drate(args);
    CHECK(r.code == 0);
    CHECK(r.out == slurp(fs::path(GOLDEN_DIR) / file));
  }
}

TEST_CASE("gen is deterministic and records its seed") {
  const auto a = work_dir() / "a.csv", b = work_dir() / "b.csv";
  const auto ra = drate("gen --kind example1 --p 2 --n 100 --seed 7 --out " + p(a));
  const auto rb = drate("gen --kind example1 --p 2 --n 100 --seed 7 --out " + p(b));
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(ra.out.find("n=100") != std::string::npos);
  CHECK(ra.out.find("true_tau=1") != std::string::npos);
  const auto text = slurp(a);
  CHECK(text == slurp(b));
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 101);
  CHECK(text.rfind("x1,x2,d,y,y0,y1\n", 0) == 0);
  const auto meta = nlohmann::json::parse(slurp(work_dir() / "a.meta.json"));
  CHECK(meta.at("seed") == 7);
  CHECK(meta.at("n") == 100);
}

TEST_CASE("gen rejects an invalid dimension") {
  const auto r = drate("gen --kind example2 --p 1 --n 10 --out " + p(work_dir() / "bad.csv"));
  CHECK(r.code == 2);
  CHECK(r.out.empty());
  CHECK(r.err.find("p >= 4") != std::string::npos);
}

TEST_CASE("estimate prints an estimate") {
  const auto data = work_dir() / "est.csv";
  REQUIRE(drate("gen --kind example1 --p 2 --n 2000 --seed 11 --out " + p(data)).code == 0);
  const auto r = drate("estimate --learner oracle --data " + p(data));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  for (const char* key : {"tau_hat", "std_error", "ci", "level", "n_eval", "clip_hits", "learner", "k_folds", "seed"})
    CHECK(j.contains(key));
  CHECK(j.at("ci")[0].get<double>() <= 1.0);
  CHECK(j.at("ci")[1].get<double>() >= 1.0);

  const auto g = drate("estimate --learner glm --k-folds 1 --split-fraction 0.5 --data " + p(data));
  CHECK(g.code == 0);
  CHECK(nlohmann::json::parse(g.out).at("n_eval") == 1000);
}

TEST_CASE("estimate usage and data errors") {
  const auto data = work_dir() / "est2.csv";
  REQUIRE(drate("gen --n 50 --seed 1 --out " + p(data)).code == 0);
  auto r = drate("estimate --k-folds 1 --data " + p(data));
  CHECK(r.code == 2);
  CHECK(r.out.empty());
  r = drate("estimate --ci-level 1.5 --data " + p(data));
  CHECK(r.code == 2);
  r = drate("estimate --data " + p(work_dir() / "missing.csv"));
  CHECK(r.code == 3);

  const auto bad = work_dir() / "bad_rows.csv";
  std::ofstream(bad) << "x1,d,y\n0.5,1,2.0\n0.1,7,1.0\n";
  r = drate("estimate --learner glm --data " + p(bad));
  CHECK(r.code == 3);
  CHECK(r.err.find("line 3") != std::string::npos);

  std::ofstream(work_dir() / "short.csv") << "x1,d,y\n0.5,1\n";
  r = drate("estimate --data " + p(work_dir() / "short.csv"));
  CHECK(r.code == 3);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("bench smoke run, rerun and report") {
  const auto out1 = work_dir() / "bench1", out2 = work_dir() / "bench2";
  const std::string args =
      "bench --preset example1-small --replications 3 --quiet --set learner.forest.base.num_trees=20 "
      "--set learner.forest.cv_num_trees=5 --output-dir ";
  const auto r1 = drate(args + p(out1));
  REQUIRE(r1.code == 0);
  CHECK(r1.out.find("coverage") != std::string::npos);
  REQUIRE(drate(args + p(out2)).code == 0);
  CHECK(fs::exists(out1 / "summary.csv"));
  CHECK(slurp(out1 / "summary.csv") == slurp(out2 / "summary.csv"));
  CHECK(slurp(out1 / "report.json") == slurp(out2 / "report.json"));

  const auto out3 = work_dir() / "bench3";
  const auto rep = drate("report --input " + p(out1 / "report.json") + " --output-dir " + p(out3));
  CHECK(rep.code == 0);
  CHECK(slurp(out3 / "summary.csv") == slurp(out1 / "summary.csv"));
}

TEST_CASE("bench validation errors") {
  auto r = drate("bench --preset example1-small --replications 0 --output-dir " + p(work_dir() / "zero"));
  CHECK(r.code == 2);
  CHECK(r.out.empty());
  r = drate("bench --preset example1-small --set replicatons=3 --output-dir " + p(work_dir() / "typo"));
  CHECK(r.code == 2);
  CHECK(r.err.find("replications") != std::string::npos);
  r = drate("bench --preset nope");
  CHECK(r.code == 2);
  r = drate("frobnicate");
  CHECK(r.code == 2);
}

TEST_CASE("report rejects a malformed file") {
  std::ofstream(work_dir() / "junk.json") << "{\"format\": 3";
  const auto r = drate("report --input " + p(work_dir() / "junk.json"));
  CHECK(r.code == 3);
}
