#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "atm/error.hpp"
#include "atm/harness.hpp"
#include "atm/oa.hpp"

using namespace atm;

namespace {

ExperimentSpec spec_from(const std::string& text) {
  std::istringstream in(text);
  return parse_spec(in);
}

std::string parse_error(const std::string& text) {
  try {
    spec_from(text);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse);
    return e.what();
  }
  return "";
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("spec parsing") {
  const auto s = spec_from(
      "# table 3\n"
      "objective = detpep10e\n"
      "p = 9\n"
      "levels = 4   # every factor\n"
      "methods = sel.mean, sel.atm, am, atm:0.3\n"
      "t_elim = 2\n"
      "replications = 7\n"
      "noise = 0.5\n"
      "augmentation = t2_x2\n"
      "seed = 11\n"
      "record_time = false\n"
      "threads = 2\n");
  CHECK(s.objective == "detpep10e");
  CHECK(s.p == 9);
  CHECK(s.levels == std::vector<int>(9, 4));
  CHECK(s.methods == std::vector<std::string>{"sel.mean", "sel.atm", "am", "atm:0.3"});
  CHECK(s.t_elim == 2);
  CHECK(s.replications == 7);
  CHECK(s.noise == 0.5);
  CHECK(s.multipliers == std::vector<int>{1, 1, 2});
  CHECK(s.seed == 11);
  CHECK_FALSE(s.record_time);
  CHECK(s.threads == 2);

  const auto t = spec_from("objective = friedman\nlevels = 5^5\nmethods = am, pw\n");
  CHECK(t.p == 5);
  CHECK(t.replications == 30);
  CHECK(t.multipliers == std::vector<int>{1, 1, 1});
}

TEST_CASE("spec errors name the offending field") {
  const std::string base = "objective = friedman\nlevels = 5^5\n";
  CHECK(parse_error(base).find("'methods'") != std::string::npos);
  CHECK(parse_error(base + "methods = am\nreplications = 0\n").find("'replications'") != std::string::npos);
  CHECK(parse_error(base + "methods = am\nreplications = x\n").find("'replications'") != std::string::npos);
  CHECK(parse_error(base + "methods = nonsense\n").find("'methods'") != std::string::npos);
  CHECK(parse_error(base + "methods = atm:1.5\n").find("'methods'") != std::string::npos);
  CHECK(parse_error(base + "methods = am\nbogus = 1\n").find("'bogus'") != std::string::npos);
  CHECK(parse_error(base + "methods = am\nnoise = -1\n").find("'noise'") != std::string::npos);
  CHECK(parse_error(base + "methods = am\naugmentation = t5_x2\n").find("'augmentation'") != std::string::npos);
  CHECK(parse_error(base + "methods = am\nmethods = pw\n").find("'methods'") != std::string::npos);
  CHECK(parse_error("objective = friedman\nlevels = 5^4\nmethods = am\n").find("'objective'") != std::string::npos);
  CHECK(parse_error("objective = friedman\np = 5\nlevels = 5^4\nmethods = am\n").find("'levels'") != std::string::npos);
  CHECK(parse_error("levels = 5^5\nmethods = am\n").find("'objective'") != std::string::npos);
  CHECK(parse_error(base + "methods am\n").find("line 3") != std::string::npos);
  try {
    parse_spec_file("/nonexistent/spec.txt");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }
}

TEST_CASE("method expansion and augmentation schemes") {
  const auto m = expand_methods({"am", "atm-sweep", "atm:0.25"});
  REQUIRE(m.size() == 13);
  CHECK(m[0] == "am");
  CHECK(m[1] == "atm:0");
  CHECK(m[4] == "atm:0.3");
  CHECK(m[11] == "atm:1");
  CHECK(m[12] == "atm:0.25");
  CHECK(augmentation_multipliers("all_x1", 2) == std::vector<int>{1, 1, 1});
  CHECK(augmentation_multipliers("all_x2", 2) == std::vector<int>{2, 2, 2});
  CHECK(augmentation_multipliers("t0_x2", 2) == std::vector<int>{2, 1, 1});
  CHECK(augmentation_multipliers("t1_x2", 2) == std::vector<int>{1, 2, 1});
  CHECK(augmentation_multipliers("3,1,2", 2) == std::vector<int>{3, 1, 2});
  CHECK_THROWS_AS(augmentation_multipliers("t3_x2", 2), Error);
  CHECK_THROWS_AS(augmentation_multipliers("0,1", 1), Error);
}

TEST_CASE("run sizes and budget honesty") {
  auto s = spec_from(
      "objective = detpep10e\np = 9\nlevels = 4\nmethods = sel.mean, sel.atm, ei.ord\nt_elim = 2\n"
      "replications = 2\nseed = 3\nrecord_time = false\n");
  const auto r = run_experiment(s);
  CHECK(r.failures.empty());
  REQUIRE(r.rows.size() == 2 * 3 * 3);
  for (const auto& row : r.rows) {
    CHECK(row.n == std::vector<std::size_t>{32, 59, 71}[static_cast<std::size_t>(row.stage)]);
    CHECK(row.pred_setting.size() == 9);
    CHECK(row.alphas.size() == (row.method == "sel.atm" ? 9u : 0u));
  }
  // Ordered by (rep, method, stage).
  CHECK(r.rows[0].rep == 0);
  CHECK(r.rows[0].method == "sel.mean");
  CHECK(r.rows[2].stage == 2);
  CHECK(r.rows[3].method == "sel.atm");
  CHECK(r.rows[9].rep == 1);

  s.multipliers = augmentation_multipliers("t2_x2", 2);
  s.methods = {"sel.min"};
  const auto aug = run_experiment(s);
  CHECK(aug.rows.back().n == 32 + 27 + 24);
}

TEST_CASE("methods in a replication share the initial design") {
  const auto s = spec_from(
      "objective = detpep10\nlevels = 5^3\nmethods = am, atm:1, atm:0, pw, sel.mean\nt_elim = 0\n"
      "replications = 10\nseed = 4\nrecord_time = false\n");
  const auto r = run_experiment(s);
  std::map<std::pair<int, std::string>, const RawRow*> by;
  for (const auto& row : r.rows) by[{row.rep, row.method}] = &row;
  for (int rep = 0; rep < 10; ++rep) {
    CHECK(by[{rep, "am"}]->pred_setting == by[{rep, "atm:1"}]->pred_setting);
    CHECK(by[{rep, "am"}]->pred_setting == by[{rep, "sel.mean"}]->pred_setting);
    CHECK(by[{rep, "pw"}]->pred_f == doctest::Approx(by[{rep, "atm:0"}]->pred_f));
    CHECK(by[{rep, "am"}]->n == 25);
  }
}

TEST_CASE("a failing method is recorded and the run continues") {
  auto s = spec_from("objective = friedman\nlevels = 3^5\nmethods = am\nreplications = 3\nrecord_time = false\n");
  s.methods = {"am", "not-a-method"};
  const auto r = run_experiment(s);
  CHECK(r.rows.size() == 3);
  REQUIRE(r.failures.size() == 3);
  CHECK(r.failures[0].method == "not-a-method");
  const auto m = manifest(r);
  CHECK(m["failure_count"] == 3);
  CHECK(m["failures"].size() == 3);
}

TEST_CASE("outputs are deterministic and the summary is recomputable") {
  const auto dir = std::filesystem::temp_directory_path() / "atm_harness_test";
  std::filesystem::create_directories(dir);
  const std::string text =
      "objective = camel6\np = 4\nlevels = 4\nmethods = sel.atm, sel.min, ei.nom, pw\nt_elim = 1\n"
      "replications = 3\nnoise = 0.1\nseed = 8\nrecord_time = false\n";
  auto run_to = [&](const std::string& name, unsigned threads) {
    auto s = spec_from(text);
    s.output = (dir / name).string();
    s.threads = threads;
    const auto r = run_experiment(s);
    write_outputs(r);
    return r;
  };
  const auto a = run_to("a", 1);
  run_to("b", 3);
  for (const char* suffix : {"_raw.csv", "_summary.csv"})
    CHECK(slurp((dir / "a").string() + suffix) == slurp((dir / "b").string() + suffix));
  const auto ma = nlohmann::json::parse(slurp((dir / "a_manifest.json").string()));
  const auto mb = nlohmann::json::parse(slurp((dir / "b_manifest.json").string()));
  CHECK(ma["config_hash"] == mb["config_hash"]);
  CHECK(ma["replication_seeds"] == nlohmann::json::array({8, 9, 10}));
  CHECK(ma["format"] == "atm-bench-manifest");
  CHECK(ma["rows"] == a.rows.size());
  CHECK(ma["spec"]["objective"] == "camel6");

  std::ifstream raw((dir / "a_raw.csv").string());
  const auto back = read_raw_csv(raw);
  REQUIRE(back.size() == a.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].pred_f == a.rows[i].pred_f);
    CHECK(back[i].pred_setting == a.rows[i].pred_setting);
    CHECK(back[i].wall_ms == 0.0);
  }
  std::ostringstream re;
  write_summary_csv(re, summarize(back));
  CHECK(re.str() == slurp((dir / "a_summary.csv").string()));

  // Summary values by hand from the raw rows.
  for (const auto& s : a.summary) {
    std::vector<double> f;
    for (const auto& r : back)
      if (r.method == s.method && r.stage == s.stage) f.push_back(r.pred_f);
    std::sort(f.begin(), f.end());
    CHECK(s.reps == f.size());
    CHECK(s.median_f == f[f.size() / 2]);
    double m = 0;
    for (double v : f) m += v / static_cast<double>(f.size());
    CHECK(s.mean_f == doctest::Approx(m).epsilon(1e-14));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("raw csv layout") {
  RawRow r;
  r.method = "sel.atm";
  r.stage = 1;
  r.rep = 4;
  r.n = 59;
  r.pred_f = 0.5;
  r.pred_setting = {1, 4, 2};
  r.alphas = {1, 0.25, 0};
  r.wall_ms = 12.3456;
  std::ostringstream os;
  write_raw_csv(os, {r});
  CHECK(os.str() == "method,stage,rep,n,pred_f,pred_setting,alpha_vec,wall_ms\nsel.atm,1,4,59,0.5,1-4-2,1;0.25;0,12.346\n");
  std::istringstream bad("method,stage\n");
  CHECK_THROWS_AS(read_raw_csv(bad), Error);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

}
