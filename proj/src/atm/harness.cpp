#include "atm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "atm/error.hpp"
#include "atm/gp.hpp"
#include "atm/marginal.hpp"
#include "atm/oa.hpp"
#include "atm/rng.hpp"
#include "atm/sel.hpp"
#include "atm/testbed.hpp"

namespace atm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

[[noreturn]] void bad_field(const std::string& key, const std::string& what) {
  fail(Errc::parse, "spec field '" + key + "': " + what);
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) bad_field(key, "not an integer: '" + v + "'");
    return x;
  } catch (const std::logic_error&) {
    bad_field(key, "not an integer: '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) bad_field(key, "not a finite number: '" + v + "'");
    return x;
  } catch (const std::logic_error&) {
    bad_field(key, "not a number: '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_field(key, "expected true or false");
}

std::string alpha_label(double a) {
  std::ostringstream os;
  os << "atm:" << a;
  return os.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string alpha_text(const std::vector<double>& a) {
  std::string s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) s += ';';
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", a[i]);
    s += buf;
  }
  return s;
}

enum class Kind { sel, ei, am, pw, atm_fixed };

struct MethodPlan {
  Kind kind = Kind::am;
  SelMethod sel = SelMethod::atm;
  std::vector<FactorKind> ei_kinds;  // empty: space kinds
  double alpha = 1.0;
};

MethodPlan plan_for(const std::string& m, std::size_t p) {
  MethodPlan plan;
  if (m == "sel.mean" || m == "sel.min" || m == "sel.atm") {
    plan.kind = Kind::sel;
    plan.sel = parse_sel_method(m);
  } else if (m == "ei.ord") {
    plan.kind = Kind::ei;
    plan.ei_kinds.assign(p, FactorKind::ordinal);
  } else if (m == "ei.nom") {
    plan.kind = Kind::ei;
    plan.ei_kinds.assign(p, FactorKind::nominal);
  } else if (m == "ei.mix") {
    plan.kind = Kind::ei;
  } else if (m == "am") {
    plan.kind = Kind::am;
  } else if (m == "pw") {
    plan.kind = Kind::pw;
  } else if (m.rfind("atm:", 0) == 0) {
    plan.kind = Kind::atm_fixed;
    plan.alpha = parse_real("methods", m.substr(4));
    if (plan.alpha < 0.0 || plan.alpha > 1.0) bad_field("methods", "alpha outside [0, 1] in '" + m + "'");
  } else {
    bad_field("methods", "unknown method '" + m + "'");
  }
  return plan;
}

struct RepOutput {
  std::vector<RawRow> rows;
  std::vector<FailureRecord> failures;
};

using Clock = std::chrono::steady_clock;

class RepRunner {
 public:
  RepRunner(const ExperimentSpec& spec, const DiscretizedObjective& base, int rep)
      : spec_(spec), base_(base), rep_(rep), seed_(spec.seed + static_cast<std::uint64_t>(rep)) {}

  void run(const std::string& method, RepOutput& out) {
    DiscretizedObjective obj = base_.with_noise(spec_.noise, derive_seed(seed_, 21));
    const auto t0 = Clock::now();
    std::vector<RawRow> rows;
    std::size_t n = 0;
    try {
      const MethodPlan plan = plan_for(method, spec_.p);
      auto emit = [&](int stage, std::size_t runs, const Setting& s, std::vector<double> alphas) {
        RawRow r;
        r.method = method;
        r.stage = stage;
        r.rep = rep_;
        r.n = runs;
        r.pred_f = obj.evaluate_noiseless(s);
        r.pred_setting = s;
        r.alphas = std::move(alphas);
        r.wall_ms = spec_.record_time ? std::chrono::duration<double, std::milli>(Clock::now() - t0).count() : 0.0;
        rows.push_back(std::move(r));
      };
      switch (plan.kind) {
        case Kind::sel: n = run_sel(plan, obj, emit); break;
        case Kind::ei: n = run_ei(plan, obj, emit); break;
        default: n = run_one_shot(plan, obj, emit); break;
      }
      if (obj.eval_count() != n)
        fail(Errc::numerical, "budget mismatch: reported n=" + std::to_string(n) +
                                  " but the objective was called " + std::to_string(obj.eval_count()) + " times");
      out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    } catch (const std::exception& e) {
      out.failures.push_back({method, rep_, e.what()});
    }
  }

 private:
  SelConfig sel_config(SelMethod m) const {
    SelConfig c;
    c.method = m;
    c.seed = seed_;
    c.stage_multipliers = spec_.multipliers;
    c.exclude_dead_runs = spec_.exclude_dead_runs;
    c.tune.candidate_count = spec_.candidate_count;
    return c;
  }

  template <typename Emit>
  std::size_t run_sel(const MethodPlan& plan, const DiscretizedObjective& obj, Emit& emit) {
    SelState st = sel_init(obj.space(), sel_config(plan.sel));
    for (int t = 0; t <= spec_.t_elim; ++t) {
      auto [next, design] = suggest_batch(st);
      st = absorb(next, obj.evaluate(design));
      auto [after, pred] = predict(st);
      st = std::move(after);
      emit(t, st.accumulated.size(), pred.setting, plan.sel == SelMethod::atm ? pred.alphas : std::vector<double>{});
      if (t < spec_.t_elim) st = eliminate(st);
    }
    return st.accumulated.size();
  }

  // Stage-0 design shared with the SEL methods of this replication.
  Design initial_design(const FactorSpace& space) const {
    const SelState st = sel_init(space, sel_config(SelMethod::mean));
    return suggest_batch(st).second;
  }

  template <typename Emit>
  std::size_t run_ei(const MethodPlan& plan, const DiscretizedObjective& obj, Emit& emit) {
    const FactorSpace& space = obj.space();
    const Design d0 = initial_design(space);
    ObservationSet data(d0, obj.evaluate(d0));
    GpConfig gcfg;
    gcfg.kinds = plan.ei_kinds;
    gcfg.physical_ordinal = spec_.physical_ordinal;
    auto best = [&] {
      const auto& y = data.responses();
      const auto i = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
      return data.design().setting(i);
    };
    emit(0, data.size(), best(), {});
    const auto profile = space.level_profile();
    for (int t = 1; t <= spec_.t_elim; ++t) {
      std::vector<int> prof(profile.size());
      for (std::size_t l = 0; l < profile.size(); ++l) prof[l] = std::max(profile[l] - t, 1);
      const int mult = static_cast<std::size_t>(t) < spec_.multipliers.size() ? spec_.multipliers[t] : 1;
      const std::size_t q = smallest_oa_runs(prof) * static_cast<std::size_t>(mult);
      const GpModel model = fit_gp(data, space, gcfg, derive_seed(seed_, 31, t));
      const BatchSelection sel = select_batch(model, space, q, derive_seed(seed_, 32, t));
      if (!sel.settings.empty()) {
        const Design batch = Design::from_rows(sel.settings);
        data = data.append(ObservationSet(batch, obj.evaluate(batch)));
      }
      emit(t, data.size(), best(), {});
    }
    return data.size();
  }

  template <typename Emit>
  std::size_t run_one_shot(const MethodPlan& plan, const DiscretizedObjective& obj, Emit& emit) {
    const Design d0 = initial_design(obj.space());
    const ObservationSet data(d0, obj.evaluate(d0));
    const auto levels = obj.space().level_profile();
    Setting s;
    std::vector<double> alphas;
    switch (plan.kind) {
      case Kind::am: s = predict_am(data, levels); break;
      case Kind::pw: s = predict_pw(data); break;
      default:
        alphas.assign(spec_.p, plan.alpha);
        s = predict_atm(data, alphas, levels);
        break;
    }
    emit(0, data.size(), s, alphas);
    return data.size();
  }

  const ExperimentSpec& spec_;
  const DiscretizedObjective& base_;
  int rep_;
  std::uint64_t seed_;
};

}  // namespace

std::vector<std::string> expand_methods(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& m : names) {
    if (m == "atm-sweep") {
      for (int k = 0; k <= 10; ++k) out.push_back(alpha_label(k / 10.0));
    } else if (m.rfind("atm:", 0) == 0) {
      out.push_back(alpha_label(plan_for(m, 1).alpha));
    } else {
      plan_for(m, 1);
      out.push_back(m);
    }
  }
  return out;
}

std::vector<int> augmentation_multipliers(const std::string& scheme, int t_elim) {
  const auto stages = static_cast<std::size_t>(t_elim + 1);
  if (scheme == "all_x1") return std::vector<int>(stages, 1);
  if (scheme == "all_x2") return std::vector<int>(stages, 2);
  if (scheme.size() > 4 && scheme[0] == 't' && scheme.substr(scheme.size() - 3) == "_x2") {
    const long long t = parse_int("augmentation", scheme.substr(1, scheme.size() - 4));
    if (t < 0 || t > t_elim) bad_field("augmentation", "stage out of range in '" + scheme + "'");
    std::vector<int> m(stages, 1);
    m[static_cast<std::size_t>(t)] = 2;
    return m;
  }
  std::vector<int> m;
  for (const auto& tok : split_list(scheme)) {
    const long long v = parse_int("augmentation", tok);
    if (v < 1) bad_field("augmentation", "multipliers must be >= 1");
    m.push_back(static_cast<int>(v));
  }
  if (m.empty()) bad_field("augmentation", "unknown scheme '" + scheme + "'");
  return m;
}

ExperimentSpec parse_spec(std::istream& in) {
  ExperimentSpec s;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(Errc::parse, "spec line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.count(key)) bad_field(key, "given twice");
    kv[key] = trim(line.substr(eq + 1));
  }
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  const auto obj = take("objective");
  if (!obj || obj->empty()) bad_field("objective", "missing");
  s.objective = *obj;
  if (const auto v = take("p")) {
    const long long p = parse_int("p", *v);
    if (p < 1) bad_field("p", "must be >= 1");
    s.p = static_cast<std::size_t>(p);
  }
  const auto lv = take("levels");
  if (!lv) bad_field("levels", "missing");
  try {
    s.levels = parse_profile(*lv);
  } catch (const Error& e) {
    bad_field("levels", e.what());
  }
  if (s.levels.size() == 1 && s.p > 1) s.levels.assign(s.p, s.levels[0]);
  if (s.p == 0) s.p = s.levels.size();
  if (s.levels.size() != s.p) bad_field("levels", "profile has " + std::to_string(s.levels.size()) + " factors, p is " + std::to_string(s.p));
  for (int n : s.levels)
    if (n < 2) bad_field("levels", "every factor needs at least 2 levels");
  try {
    (void)builtin(s.objective, s.p);
  } catch (const Error& e) {
    bad_field("objective", e.what());
  }

  const auto methods = take("methods");
  if (!methods) bad_field("methods", "missing");
  s.methods = expand_methods(split_list(*methods));
  if (s.methods.empty()) bad_field("methods", "empty");
  if (const auto v = take("t_elim")) {
    const long long t = parse_int("t_elim", *v);
    if (t < 0) bad_field("t_elim", "must be >= 0");
    s.t_elim = static_cast<int>(t);
  }
  if (const auto v = take("replications")) {
    const long long r = parse_int("replications", *v);
    if (r < 1) bad_field("replications", "must be >= 1");
    s.replications = static_cast<int>(r);
  }
  if (const auto v = take("noise")) {
    s.noise = parse_real("noise", *v);
    if (s.noise < 0) bad_field("noise", "must be >= 0");
  }
  if (const auto v = take("augmentation")) s.augmentation = *v;
  s.multipliers = augmentation_multipliers(s.augmentation, s.t_elim);
  if (const auto v = take("seed")) {
    const long long x = parse_int("seed", *v);
    if (x < 0) bad_field("seed", "must be >= 0");
    s.seed = static_cast<std::uint64_t>(x);
  }
  if (const auto v = take("output")) s.output = *v;
  if (const auto v = take("threads")) {
    const long long x = parse_int("threads", *v);
    if (x < 0) bad_field("threads", "must be >= 0");
    s.threads = static_cast<unsigned>(x);
  }
  if (const auto v = take("record_time")) s.record_time = parse_bool("record_time", *v);
  if (const auto v = take("exclude_dead_runs")) s.exclude_dead_runs = parse_bool("exclude_dead_runs", *v);
  if (const auto v = take("physical_ordinal")) s.physical_ordinal = parse_bool("physical_ordinal", *v);
  if (const auto v = take("candidate_count")) {
    const long long x = parse_int("candidate_count", *v);
    if (x < 2) bad_field("candidate_count", "must be >= 2");
    s.candidate_count = static_cast<std::size_t>(x);
  }
  if (!kv.empty()) bad_field(kv.begin()->first, "unknown key");
  return s;
}

ExperimentSpec parse_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open spec file '" + path + "'");
  return parse_spec(in);
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = nlohmann::json{{"objective", s.objective},
                     {"p", s.p},
                     {"levels", s.levels},
                     {"methods", s.methods},
                     {"t_elim", s.t_elim},
                     {"replications", s.replications},
                     {"noise", s.noise},
                     {"augmentation", s.augmentation},
                     {"multipliers", s.multipliers},
                     {"seed", s.seed},
                     {"exclude_dead_runs", s.exclude_dead_runs},
                     {"physical_ordinal", s.physical_ordinal},
                     {"candidate_count", s.candidate_count}};
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  require(spec.replications >= 1, Errc::invalid_argument, "replications must be >= 1");
  require(!spec.methods.empty(), Errc::invalid_argument, "methods must be nonempty");
  require(spec.levels.size() == spec.p, Errc::dimension_mismatch, "levels must have p entries");
  const DiscretizedObjective base = discretize(builtin(spec.objective, spec.p), spec.levels);

  std::vector<RepOutput> outs(static_cast<std::size_t>(spec.replications));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r; (r = next.fetch_add(1)) < spec.replications;) {
      RepRunner runner(spec, base, r);
      for (const auto& m : spec.methods) runner.run(m, outs[static_cast<std::size_t>(r)]);
    }
  };
  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(spec.replications));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  ExperimentResult res;
  res.spec = spec;
  for (auto& o : outs) {
    res.rows.insert(res.rows.end(), o.rows.begin(), o.rows.end());
    res.failures.insert(res.failures.end(), o.failures.begin(), o.failures.end());
  }
  res.summary = summarize(res.rows);
  return res;
}

std::vector<SummaryRow> summarize(const std::vector<RawRow>& rows) {
  std::vector<std::string> order;
  std::map<std::pair<std::string, int>, std::vector<const RawRow*>> groups;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    groups[{r.method, r.stage}].push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& m : order) {
    for (auto it = groups.lower_bound({m, std::numeric_limits<int>::min()}); it != groups.end() && it->first.first == m; ++it) {
      SummaryRow s;
      s.method = m;
      s.stage = it->first.second;
      s.reps = it->second.size();
      std::vector<double> f;
      double nsum = 0.0, fsum = 0.0;
      for (const RawRow* r : it->second) {
        f.push_back(r->pred_f);
        nsum += static_cast<double>(r->n);
        fsum += r->pred_f;
      }
      s.n = nsum / static_cast<double>(s.reps);
      s.mean_f = fsum / static_cast<double>(s.reps);
      std::sort(f.begin(), f.end());
      const std::size_t k = f.size();
      s.median_f = k % 2 ? f[k / 2] : 0.5 * (f[k / 2 - 1] + f[k / 2]);
      out.push_back(s);
    }
  }
  return out;
}

const SummaryRow* find_summary(const ExperimentResult& r, const std::string& method, int stage) {
  for (const auto& s : r.summary)
    if (s.method == method && s.stage == stage) return &s;
  return nullptr;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_raw_csv(std::ostream& out, const std::vector<RawRow>& rows) {
  out << "method,stage,rep,n,pred_f,pred_setting,alpha_vec,wall_ms\n";
  for (const auto& r : rows) {
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", r.wall_ms);
    out << r.method << ',' << r.stage << ',' << r.rep << ',' << r.n << ',' << fmt(r.pred_f) << ','
        << format_setting(r.pred_setting) << ',' << alpha_text(r.alphas) << ',' << ms << '\n';
  }
}

std::vector<RawRow> read_raw_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "method,stage,rep,n,pred_f,pred_setting,alpha_vec,wall_ms")
    fail(Errc::parse, "raw results: bad header");
  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(trim(line));
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 7) f.emplace_back();
    if (f.size() != 8) fail(Errc::parse, "raw results: expected 8 fields");
    RawRow r;
    r.method = f[0];
    r.stage = static_cast<int>(parse_int("stage", f[1]));
    r.rep = static_cast<int>(parse_int("rep", f[2]));
    r.n = static_cast<std::size_t>(parse_int("n", f[3]));
    r.pred_f = parse_real("pred_f", f[4]);
    std::stringstream ps(f[5]);
    while (std::getline(ps, cell, '-')) r.pred_setting.push_back(static_cast<int>(parse_int("pred_setting", cell)));
    std::stringstream as(f[6]);
    while (std::getline(as, cell, ';')) r.alphas.push_back(parse_real("alpha_vec", cell));
    r.wall_ms = parse_real("wall_ms", f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "method,stage,reps,n,mean_f,median_f\n";
  for (const auto& s : rows)
    out << s.method << ',' << s.stage << ',' << s.reps << ',' << fmt(s.n) << ',' << fmt(s.mean_f) << ','
        << fmt(s.median_f) << '\n';
}

nlohmann::json manifest(const ExperimentResult& r) {
  nlohmann::json spec = r.spec;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(spec.dump())));
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : r.failures) fails.push_back({{"method", f.method}, {"rep", f.rep}, {"message", f.message}});
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < r.spec.replications; ++i) seeds.push_back(r.spec.seed + static_cast<std::uint64_t>(i));
  return {{"format", "atm-bench-manifest"},
          {"version", 1},
          {"library_version", "0.1.0"},
          {"config_hash", hash},
          {"spec", spec},
          {"replication_seeds", seeds},
          {"rows", r.rows.size()},
          {"failure_count", r.failures.size()},
          {"failures", fails}};
}

void write_outputs(const ExperimentResult& r) {
  if (r.spec.output.empty()) return;
  auto open = [&](const std::string& suffix) {
    std::ofstream f(r.spec.output + suffix);
    if (!f) fail(Errc::io, "cannot write '" + r.spec.output + suffix + "'");
    return f;
  };
  {
    auto f = open("_raw.csv");
    write_raw_csv(f, r.rows);
  }
  {
    auto f = open("_summary.csv");
    write_summary_csv(f, r.summary);
  }
  auto f = open("_manifest.json");
  f << manifest(r).dump(2) << '\n';
}

}  // namespace atm
