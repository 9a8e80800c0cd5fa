#include "atm/atm.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "atm/error.hpp"
#include "atm/factor_space.hpp"
#include "atm/harness.hpp"
#include "atm/marginal.hpp"
#include "atm/oa.hpp"
#include "atm/sel.hpp"
#include "atm/testbed.hpp"
#include "atm/tuner.hpp"

struct atm_design {
  atm::Design d;
};
struct atm_obs {
  atm::ObservationSet o;
};
struct atm_objective {
  atm::DiscretizedObjective f;
};
struct atm_session {
  atm::SelState s;
};

namespace {

thread_local std::string g_last_error;

atm_status set_error(atm_status st, const char* msg) {
  g_last_error = msg;
  return st;
}

template <typename Fn>
atm_status guard(Fn&& fn) noexcept {
  try {
    fn();
    return ATM_OK;
  } catch (const atm::Error& e) {
    return set_error(static_cast<atm_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(ATM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(ATM_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(ATM_E_INTERNAL, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  if (!p) atm::fail(atm::Errc::invalid_argument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<int> int_vec(const int* v, std::size_t n, const char* what) {
  if (n && !v) need(v, what);
  return std::vector<int>(v, v + n);
}

std::vector<int> levels_or_empty(const int* levels, std::size_t p) {
  return levels ? std::vector<int>(levels, levels + p) : std::vector<int>{};
}

std::string with_prefix(const char* method) {
  std::string m = method;
  return m.rfind("sel.", 0) == 0 ? m : "sel." + m;
}

}  // namespace

extern "C" {

const char* atm_version(void) { return "0.1.0"; }

const char* atm_status_name(atm_status st) {
  if (st == ATM_OK) return "ok";
  if (st == ATM_E_INTERNAL) return "internal";
  if (st >= 1 && st <= 9) return atm::errc_name(static_cast<atm::Errc>(static_cast<int>(st)));
  return "unknown";
}

const char* atm_last_error(void) { return g_last_error.c_str(); }

void atm_string_free(char* s) { std::free(s); }

atm_status atm_parse_profile(const char* text, int* out, size_t cap, size_t* p) {
  return guard([&] {
    need(text, "text");
    need(p, "p");
    const auto v = atm::parse_profile(text);
    *p = v.size();
    if (cap) need(out, "out");
    std::copy_n(v.begin(), std::min(cap, v.size()), out);
  });
}

atm_status atm_oa_generate(const int* levels, size_t p, int strength, uint64_t max_runs, int randomize,
                           uint64_t seed, atm_design** out) {
  return guard([&] {
    need(out, "out");
    atm::OaRequest req;
    req.level_profile = int_vec(levels, p, "levels");
    req.strength = strength;
    if (max_runs) req.max_runs = static_cast<std::size_t>(max_runs);
    atm::Design d = atm::smallest_oa(req);
    if (randomize) d = atm::randomize(d, seed);
    *out = new atm_design{std::move(d)};
  });
}

atm_status atm_design_from_cells(size_t runs, size_t p, const int* cells, atm_design** out) {
  return guard([&] {
    need(out, "out");
    *out = new atm_design{atm::Design(p, int_vec(cells, runs * p, "cells"))};
  });
}

atm_status atm_design_read_csv(const char* path, atm_design** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new atm_design{atm::read_level_csv_file(path).design};
  });
}

size_t atm_design_runs(const atm_design* d) { return d ? d->d.runs() : 0; }
size_t atm_design_factors(const atm_design* d) { return d ? d->d.factors() : 0; }
const int* atm_design_cells(const atm_design* d) { return d ? d->d.cells().data() : nullptr; }
const char* atm_design_provenance(const atm_design* d) { return d ? atm::provenance_name(d->d.provenance()) : ""; }

atm_status atm_design_to_csv(const atm_design* d, char** out) {
  return guard([&] {
    need(d, "design");
    need(out, "out");
    std::ostringstream os;
    atm::write_design_csv(os, d->d);
    *out = dup(os.str());
  });
}

atm_status atm_oa_verify(const atm_design* d, int strength, const int* levels, int* ok, double* worst_deviation) {
  return guard([&] {
    need(d, "design");
    need(ok, "ok");
    const auto lv = levels_or_empty(levels, d->d.factors());
    const auto rep = atm::verify_oa(d->d, strength, lv);
    *ok = rep.ok ? 1 : 0;
    if (worst_deviation) *worst_deviation = rep.worst_imbalance;
  });
}

void atm_design_free(atm_design* d) { delete d; }

atm_status atm_obs_create(const atm_design* d, const double* y, size_t n, atm_obs** out) {
  return guard([&] {
    need(d, "design");
    need(out, "out");
    if (n && !y) need(y, "y");
    *out = new atm_obs{atm::ObservationSet(d->d, std::vector<double>(y, y + n))};
  });
}

atm_status atm_obs_read_csv(const char* path, atm_obs** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto t = atm::read_level_csv_file(path);
    if (!t.responses) atm::fail(atm::Errc::parse, std::string("'") + path + "' has no response column y");
    *out = new atm_obs{atm::ObservationSet(std::move(t.design), std::move(*t.responses))};
  });
}

size_t atm_obs_size(const atm_obs* o) { return o ? o->o.size() : 0; }
size_t atm_obs_factors(const atm_obs* o) { return o ? o->o.factors() : 0; }
void atm_obs_free(atm_obs* o) { delete o; }

atm_status atm_tail_mean(const double* values, size_t m, double alpha, double* out) {
  return guard([&] {
    need(out, "out");
    if (m && !values) need(values, "values");
    *out = atm::tail_mean(std::span<const double>(values, m), alpha);
  });
}

atm_status atm_predict(const atm_obs* o, const char* method, const double* alphas, const int* levels,
                       int* setting_out) {
  return guard([&] {
    need(o, "obs");
    need(method, "method");
    need(setting_out, "setting_out");
    const std::size_t p = o->o.factors();
    const auto lv = levels_or_empty(levels, p);
    const std::string m = method;
    atm::Setting s;
    if (m == "am") {
      s = atm::predict_am(o->o, lv);
    } else if (m == "pw") {
      s = atm::predict_pw(o->o);
    } else if (m == "atm") {
      need(alphas, "alphas");
      s = atm::predict_atm(o->o, std::span<const double>(alphas, p), lv);
    } else {
      atm::fail(atm::Errc::invalid_argument, "unknown predictor '" + m + "'");
    }
    std::copy(s.begin(), s.end(), setting_out);
  });
}

atm_status atm_tune_alpha(const atm_obs* o, const int* levels, uint64_t seed, size_t candidate_count,
                          double* alphas_out, char** report_json) {
  return guard([&] {
    need(o, "obs");
    need(alphas_out, "alphas_out");
    atm::TuneConfig cfg;
    cfg.seed = seed;
    if (candidate_count) cfg.candidate_count = candidate_count;
    const auto lv = levels_or_empty(levels, o->o.factors());
    const auto r = atm::tune_alpha(o->o, lv, cfg);
    std::copy(r.alphas.begin(), r.alphas.end(), alphas_out);
    if (report_json) {
      const auto& c = r.candidates[r.chosen];
      nlohmann::json j = {{"alphas", r.alphas},
                          {"score", c.score},
                          {"prediction", c.prediction},
                          {"candidates", r.candidates.size()},
                          {"synthetic_runs", r.synthetic_design.runs()},
                          {"interaction_strength", atm::interaction_strength(r.surrogate)},
                          {"surrogate", r.surrogate}};
      *report_json = dup(j.dump());
    }
  });
}

atm_status atm_objective_builtin(const char* name, size_t p, int levels, atm_objective** out) {
  return guard([&] {
    need(name, "name");
    need(out, "out");
    *out = new atm_objective{atm::discretize_builtin(name, p, levels)};
  });
}

atm_status atm_objective_set_noise(atm_objective* f, double sd, uint64_t seed) {
  return guard([&] {
    need(f, "objective");
    f->f = f->f.with_noise(sd, seed);
  });
}

size_t atm_objective_factors(const atm_objective* f) { return f ? f->f.space().size() : 0; }

atm_status atm_objective_evaluate(atm_objective* f, const int* setting, int noiseless, double* out) {
  return guard([&] {
    need(f, "objective");
    need(setting, "setting");
    need(out, "out");
    const std::span<const int> x(setting, f->f.space().size());
    *out = noiseless ? f->f.evaluate_noiseless(x) : f->f.evaluate(x);
  });
}

uint64_t atm_objective_eval_count(const atm_objective* f) { return f ? f->f.eval_count() : 0; }

atm_status atm_oracle(const atm_objective* f, int* argmin_out, double* min_out, char** table_csv) {
  return guard([&] {
    need(f, "objective");
    need(argmin_out, "argmin_out");
    need(min_out, "min_out");
    const auto r = atm::brute_force(f->f, table_csv != nullptr);
    std::copy(r.argmin.begin(), r.argmin.end(), argmin_out);
    *min_out = r.min;
    if (table_csv) {
      std::ostringstream os;
      atm::write_table_csv(os, f->f.space(), r.table);
      *table_csv = dup(os.str());
    }
  });
}

atm_status atm_check_mc(const atm_objective* f, int* holds, size_t* violations, char** report_json) {
  return guard([&] {
    need(f, "objective");
    need(holds, "holds");
    const auto t = atm::brute_force(f->f, true);
    const auto r = atm::check_mc(f->f.space(), t.table);
    *holds = r.holds ? 1 : 0;
    if (violations) *violations = r.violations;
    if (report_json) {
      nlohmann::json w = nlohmann::json::array();
      for (const auto& x : r.witnesses)
        w.push_back({{"factor", x.factor + 1}, {"slice", x.slice}, {"level", x.level}, {"gap", x.gap}});
      nlohmann::json j = {{"holds", r.holds}, {"am_argmin", r.am_argmin}, {"violations", r.violations}, {"witnesses", w}};
      *report_json = dup(j.dump());
    }
  });
}

void atm_objective_free(atm_objective* f) { delete f; }

atm_status atm_session_create(const int* levels, size_t p, const char* method, uint64_t seed, const int* multipliers,
                              size_t n_multipliers, int exclude_dead_runs, atm_session** out) {
  return guard([&] {
    need(method, "method");
    need(out, "out");
    atm::SelConfig cfg;
    cfg.method = atm::parse_sel_method(with_prefix(method));
    cfg.seed = seed;
    cfg.stage_multipliers = int_vec(multipliers, n_multipliers, "multipliers");
    cfg.exclude_dead_runs = exclude_dead_runs != 0;
    const auto lv = int_vec(levels, p, "levels");
    *out = new atm_session{atm::sel_init(atm::FactorSpace::from_profile(lv), cfg)};
  });
}

atm_status atm_session_load(const char* path, atm_session** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new atm_session{atm::load_state_file(path)};
  });
}

atm_status atm_session_save(const atm_session* s, const char* path) {
  return guard([&] {
    need(s, "session");
    need(path, "path");
    atm::save_state_file(path, s->s);
  });
}

atm_status atm_session_to_json(const atm_session* s, char** out) {
  return guard([&] {
    need(s, "session");
    need(out, "out");
    *out = dup(nlohmann::json(s->s).dump(2));
  });
}

size_t atm_session_factors(const atm_session* s) { return s ? s->s.space.size() : 0; }
int atm_session_stage(const atm_session* s) { return s ? s->s.stage : -1; }

const char* atm_session_phase(const atm_session* s) {
  if (!s) return "";
  switch (s->s.phase) {
    case atm::SelPhase::ready: return "ready";
    case atm::SelPhase::pending: return "pending";
    case atm::SelPhase::absorbed: return "absorbed";
  }
  return "";
}

atm_status atm_session_suggest(atm_session* s, atm_design** batch) {
  return guard([&] {
    need(s, "session");
    need(batch, "batch");
    auto [next, d] = atm::suggest_batch(s->s);
    *batch = new atm_design{std::move(d)};
    s->s = std::move(next);
  });
}

atm_status atm_session_observe(atm_session* s, const double* y, size_t n) {
  return guard([&] {
    need(s, "session");
    if (n && !y) need(y, "y");
    s->s = atm::absorb(s->s, std::vector<double>(y, y + n));
  });
}

atm_status atm_session_observe_obs(atm_session* s, const atm_obs* o) {
  return guard([&] {
    need(s, "session");
    need(o, "obs");
    if (!s->s.pending) atm::fail(atm::Errc::protocol, "no batch is pending; run suggest first");
    if (!(o->o.design().cells() == s->s.pending->cells()) || o->o.factors() != s->s.pending->factors())
      atm::fail(atm::Errc::dimension_mismatch, "observed settings do not match the pending batch (rows must be in batch order)");
    s->s = atm::absorb(s->s, o->o.responses());
  });
}

atm_status atm_session_eliminate(atm_session* s, int* eliminated_out) {
  return guard([&] {
    need(s, "session");
    atm::SelState next = atm::eliminate(s->s);
    if (eliminated_out) {
      const auto& e = next.history.back().eliminated;
      std::copy(e.begin(), e.end(), eliminated_out);
    }
    s->s = std::move(next);
  });
}

atm_status atm_session_predict(atm_session* s, int* setting_out, double* alphas_out, int* has_value,
                               double* value_out) {
  return guard([&] {
    need(s, "session");
    need(setting_out, "setting_out");
    auto [next, pred] = atm::predict(s->s);
    std::copy(pred.setting.begin(), pred.setting.end(), setting_out);
    if (alphas_out) std::copy(pred.alphas.begin(), pred.alphas.end(), alphas_out);
    if (has_value) *has_value = pred.value_estimate ? 1 : 0;
    if (value_out && pred.value_estimate) *value_out = *pred.value_estimate;
    s->s = std::move(next);
  });
}

void atm_session_free(atm_session* s) { delete s; }

atm_status atm_bench_run(const char* spec_path, const char* output_prefix, char** summary_csv, size_t* failures) {
  return guard([&] {
    need(spec_path, "spec_path");
    auto spec = atm::parse_spec_file(spec_path);
    if (output_prefix) spec.output = output_prefix;
    const auto r = atm::run_experiment(spec);
    atm::write_outputs(r);
    if (failures) *failures = r.failures.size();
    if (summary_csv) {
      std::ostringstream os;
      atm::write_summary_csv(os, r.summary);
      *summary_csv = dup(os.str());
    }
  });
}

}  // extern "C"
