#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atm/atm.h"

namespace {

// Carries a status out of a subcommand to main.
struct Failure {
  std::string code;
  std::string msg;
};

void check(atm_status st) {
  if (st != ATM_OK) throw Failure{atm_status_name(st), atm_last_error()};
}

[[noreturn]] void fail(const std::string& code, const std::string& msg) { throw Failure{code, msg}; }

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + '"';
}

std::vector<int> profile(const std::string& text) {
  std::size_t p = 0;
  check(atm_parse_profile(text.c_str(), nullptr, 0, &p));
  std::vector<int> v(p);
  check(atm_parse_profile(text.c_str(), v.data(), v.size(), &p));
  return v;
}

std::string join(const std::vector<int>& v, char sep = '-') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g", v[i]);
    s += (i ? "," : "") + std::string(buf);
  }
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct CString {
  char* p = nullptr;
  ~CString() { atm_string_free(p); }
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) fail("io", "cannot write '" + path + "'");
  f << text;
}

// --- oa -------------------------------------------------------------------

struct OaGen {
  std::string profile_text, out;
  int strength = 2;
  std::uint64_t max_runs = 0;
  std::optional<std::uint64_t> seed;

  void run() const {
    const auto lv = profile(profile_text);
    atm_design* d = nullptr;
    check(atm_oa_generate(lv.data(), lv.size(), strength, max_runs, seed.has_value(), seed.value_or(0), &d));
    CString csv;
    const atm_status st = atm_design_to_csv(d, &csv.p);
    atm_design_free(d);
    check(st);
    emit(csv.p, out);
  }
};

struct OaVerify {
  std::string path, levels_text;
  int strength = 2;

  int run() const {
    atm_design* d = nullptr;
    check(atm_design_read_csv(path.c_str(), &d));
    std::vector<int> lv;
    if (!levels_text.empty()) lv = profile(levels_text);
    if (!lv.empty() && lv.size() != atm_design_factors(d)) {
      const std::size_t p = atm_design_factors(d);
      atm_design_free(d);
      fail("dimension_mismatch",
           "--levels has " + std::to_string(lv.size()) + " factors, the design has " + std::to_string(p));
    }
    int ok = 0;
    double worst = 0.0;
    const atm_status st = atm_oa_verify(d, strength, lv.empty() ? nullptr : lv.data(), &ok, &worst);
    const std::size_t runs = atm_design_runs(d), p = atm_design_factors(d);
    atm_design_free(d);
    check(st);
    std::cout << "ok=" << (ok ? "true" : "false") << " strength=" << strength << " runs=" << runs << " factors=" << p
              << " worst=" << num(worst) << '\n';
    return ok ? 0 : 1;
  }
};

// --- oracle ---------------------------------------------------------------

struct Oracle {
  std::string name, table;
  std::size_t p = 0;
  int levels = 0;
  bool mc = false;

  void run() const {
    atm_objective* f = nullptr;
    check(atm_objective_builtin(name.c_str(), p, levels, &f));
    std::vector<int> arg(p);
    double mn = 0.0;
    CString csv;
    atm_status st = atm_oracle(f, arg.data(), &mn, table.empty() ? nullptr : &csv.p);
    int holds = 0;
    std::size_t viol = 0;
    if (st == ATM_OK && mc) st = atm_check_mc(f, &holds, &viol, nullptr);
    atm_objective_free(f);
    check(st);
    std::cout << "min=" << num(mn) << "\nargmin=" << join(arg) << '\n';
    if (mc) std::cout << "mc=" << (holds ? "holds" : "violated") << " violations=" << viol << '\n';
    if (!table.empty()) emit(csv.p, table);
  }
};

// --- tune-alpha -----------------------------------------------------------

struct Tune {
  std::string path, levels_text;
  std::uint64_t seed = 0;
  std::size_t candidates = 200;

  void run() const {
    atm_obs* o = nullptr;
    check(atm_obs_read_csv(path.c_str(), &o));
    const std::size_t p = atm_obs_factors(o);
    std::vector<int> lv;
    if (!levels_text.empty()) lv = profile(levels_text);
    if (!lv.empty() && lv.size() != p) {
      atm_obs_free(o);
      fail("dimension_mismatch", "--levels does not match the number of factor columns");
    }
    std::vector<double> alphas(p);
    CString report;
    const atm_status st = atm_tune_alpha(o, lv.empty() ? nullptr : lv.data(), seed, candidates, alphas.data(), &report.p);
    atm_obs_free(o);
    check(st);
    std::cout << "alpha=" << join(alphas) << "\ndiagnostics=" << report.p << '\n';
  }
};

// --- session --------------------------------------------------------------

struct Session {
  std::string state = "atm-session.json";
  std::string levels_text, method = "atm", multipliers_text, out, responses;
  std::uint64_t seed = 0;
  bool keep_dead_runs = false, force = false;

  atm_session* load() const {
    if (!std::filesystem::exists(state))
      fail("protocol", "no session at '" + state + "'; run 'session init' first");
    atm_session* s = nullptr;
    check(atm_session_load(state.c_str(), &s));
    return s;
  }

  // Runs `body` on the loaded session and saves it when body succeeds.
  template <typename Body>
  void with_session(Body body) const {
    atm_session* s = load();
    try {
      body(s);
      check(atm_session_save(s, state.c_str()));
    } catch (...) {
      atm_session_free(s);
      throw;
    }
    atm_session_free(s);
  }

  void init() const {
    if (std::filesystem::exists(state) && !force)
      fail("protocol", "'" + state + "' already exists; pass --force to overwrite");
    const auto lv = profile(levels_text);
    std::vector<int> mult;
    if (!multipliers_text.empty()) mult = profile(multipliers_text);
    atm_session* s = nullptr;
    check(atm_session_create(lv.data(), lv.size(), method.c_str(), seed, mult.empty() ? nullptr : mult.data(),
                             mult.size(), keep_dead_runs ? 0 : 1, &s));
    const atm_status st = atm_session_save(s, state.c_str());
    atm_session_free(s);
    check(st);
    std::cout << "stage=0 phase=ready factors=" << lv.size() << '\n';
  }

  void suggest() const {
    with_session([&](atm_session* s) {
      atm_design* d = nullptr;
      check(atm_session_suggest(s, &d));
      CString csv;
      const atm_status st = atm_design_to_csv(d, &csv.p);
      atm_design_free(d);
      check(st);
      emit(csv.p, out);
    });
  }

  void observe() const {
    std::ifstream in(responses);
    if (!in) fail("io", "cannot open '" + responses + "'");
    std::string header;
    std::getline(in, header);
    while (!header.empty() && (header.back() == '\r' || header.back() == ' ')) header.pop_back();
    with_session([&](atm_session* s) {
      if (header == "y") {
        std::vector<double> y;
        std::string line;
        int row = 1;
        while (std::getline(in, line)) {
          ++row;
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          char* end = nullptr;
          const double v = std::strtod(line.c_str(), &end);
          if (end == line.c_str()) fail("parse", "y: row " + std::to_string(row) + " is not a number");
          y.push_back(v);
        }
        check(atm_session_observe(s, y.data(), y.size()));
      } else {
        atm_obs* o = nullptr;
        check(atm_obs_read_csv(responses.c_str(), &o));
        const atm_status st = atm_session_observe_obs(s, o);
        atm_obs_free(o);
        check(st);
      }
      std::cout << "stage=" << atm_session_stage(s) << " phase=" << atm_session_phase(s) << '\n';
    });
  }

  void eliminate() const {
    with_session([&](atm_session* s) {
      std::vector<int> e(atm_session_factors(s));
      check(atm_session_eliminate(s, e.data()));
      std::cout << "eliminated=" << join(e, ',') << "\nstage=" << atm_session_stage(s) << '\n';
    });
  }

  void predict() const {
    with_session([&](atm_session* s) {
      const std::size_t p = atm_session_factors(s);
      std::vector<int> x(p);
      std::vector<double> a(p);
      int has = 0;
      double v = 0.0;
      check(atm_session_predict(s, x.data(), a.data(), &has, &v));
      std::cout << "setting=" << join(x) << "\nalpha=" << join(a) << "\nvalue=" << (has ? num(v) : "NA") << '\n';
    });
  }
};

// --- bench ----------------------------------------------------------------

struct Bench {
  std::string spec, output;

  void run() const {
    CString summary;
    std::size_t failures = 0;
    check(atm_bench_run(spec.c_str(), output.empty() ? nullptr : output.c_str(), &summary.p, &failures));
    std::cout << summary.p;
    std::cerr << "failures=" << failures << '\n';
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marginal tail-mean optimization toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", atm_version());

  auto* bench = app.add_subcommand("bench", "Benchmark harness");
  bench->require_subcommand(1);
  Bench b;
  auto* bench_run = bench->add_subcommand("run", "Run a spec file and print the summary CSV");
  bench_run->add_option("spec", b.spec, "Spec file")->required();
  bench_run->add_option("--output", b.output, "Output path prefix (overrides the spec)");

  auto* oa = app.add_subcommand("oa", "Orthogonal arrays");
  oa->require_subcommand(1);
  OaGen g;
  auto* oa_gen = oa->add_subcommand("gen", "Print the smallest OA for a level profile as CSV");
  oa_gen->add_option("--profile", g.profile_text, "Level profile, e.g. 4^9 or '2^1 3^7'")->required();
  oa_gen->add_option("--seed", g.seed, "Randomize levels and rows with this seed");
  oa_gen->add_option("--strength", g.strength, "Strength (1 or 2)");
  oa_gen->add_option("--max-runs", g.max_runs, "Run cap (0: none)");
  oa_gen->add_option("--out", g.out, "Output file (default stdout)");
  OaVerify v;
  auto* oa_verify = oa->add_subcommand("verify", "Check a design CSV for strength-t balance");
  oa_verify->add_option("csv", v.path, "Design CSV")->required();
  oa_verify->add_option("--strength", v.strength, "Strength (1 or 2)");
  oa_verify->add_option("--levels", v.levels_text, "Declared level profile");

  Oracle o;
  auto* oracle = app.add_subcommand("oracle", "Brute-force minimum of a built-in objective");
  oracle->add_option("objective", o.name, "friedman, detpep10, detpep10e, camel6 or shubert")->required();
  oracle->add_option("--p", o.p, "Number of factors")->required();
  oracle->add_option("--levels", o.levels, "Levels per factor")->required();
  oracle->add_option("--table", o.table, "Write the full table CSV here");
  oracle->add_flag("--mc", o.mc, "Also check the marginal-conditional condition");

  Session s;
  auto* session = app.add_subcommand("session", "Ask/tell sequential elimination against a state file");
  session->require_subcommand(1);
  session->add_option("--state", s.state, "State file")->capture_default_str();
  auto* s_init = session->add_subcommand("init", "Create a new session");
  s_init->add_option("--levels", s.levels_text, "Level profile")->required();
  s_init->add_option("--method", s.method, "atm, mean or min")->capture_default_str();
  s_init->add_option("--seed", s.seed, "Seed");
  s_init->add_option("--multipliers", s.multipliers_text, "Per-stage design multipliers, e.g. 1,1,2");
  s_init->add_flag("--keep-dead-runs", s.keep_dead_runs, "Keep runs on eliminated levels in later statistics");
  s_init->add_flag("--force", s.force, "Overwrite an existing state file");
  auto* s_suggest = session->add_subcommand("suggest", "Emit the next batch as CSV");
  s_suggest->add_option("--out", s.out, "Output file (default stdout)");
  auto* s_observe = session->add_subcommand("observe", "Absorb responses for the pending batch");
  s_observe->add_option("responses", s.responses, "CSV with header y, or f1..fp,y in batch order")->required();
  auto* s_elim = session->add_subcommand("eliminate", "Remove one level per factor");
  auto* s_pred = session->add_subcommand("predict", "Predict the minimizing setting");
  for (auto* sub : {s_init, s_suggest, s_observe, s_elim, s_pred})
    sub->add_option("--state", s.state, "State file");

  Tune t;
  auto* tune = app.add_subcommand("tune-alpha", "Tune tail-mean percentages on an observation CSV");
  tune->add_option("obs", t.path, "CSV with header f1..fp,y")->required();
  tune->add_option("--levels", t.levels_text, "Level profile (default: largest observed level per factor)");
  tune->add_option("--seed", t.seed, "Seed");
  tune->add_option("--candidates", t.candidates, "Candidate alpha vectors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error code=usage msg=" << quoted(e.what()) << '\n';
    return 2;
  }

  try {
    int rc = 0;
    if (*bench_run) b.run();
    else if (*oa_gen) g.run();
    else if (*oa_verify) rc = v.run();
    else if (*oracle) o.run();
    else if (*s_init) s.init();
    else if (*s_suggest) s.suggest();
    else if (*s_observe) s.observe();
    else if (*s_elim) s.eliminate();
    else if (*s_pred) s.predict();
    else if (*tune) t.run();
    return rc;
  } catch (const Failure& f) {
    std::cout.flush();
    std::cerr << "error code=" << f.code << " msg=" << quoted(f.msg) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error code=internal msg=" << quoted(e.what()) << '\n';
    return 1;
  }
}
