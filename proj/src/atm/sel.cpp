#include "atm/sel.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "atm/error.hpp"
#include "atm/oa.hpp"
#include "atm/rng.hpp"

namespace atm {

namespace {

constexpr std::uint64_t kTagDesign = 11;
constexpr std::uint64_t kTagTune = 12;

const char* phase_name(SelPhase p) {
  switch (p) {
    case SelPhase::ready: return "ready";
    case SelPhase::pending: return "pending";
    case SelPhase::absorbed: return "absorbed";
  }
  return "ready";
}

SelPhase parse_phase(const std::string& s) {
  if (s == "ready") return SelPhase::ready;
  if (s == "pending") return SelPhase::pending;
  if (s == "absorbed") return SelPhase::absorbed;
  fail(Errc::parse, "state: unknown phase '" + s + "'");
}

bool is_surviving(const SelState& s, std::span<const int> run) {
  for (std::size_t l = 0; l < run.size(); ++l)
    if (!std::binary_search(s.surviving[l].begin(), s.surviving[l].end(), run[l])) return false;
  return true;
}

Setting to_original(const SelState& s, std::span<const int> recoded) {
  Setting out(recoded.size());
  for (std::size_t l = 0; l < recoded.size(); ++l) out[l] = s.surviving[l][static_cast<std::size_t>(recoded[l] - 1)];
  return out;
}

std::optional<double> observed_value(const ObservationSet& obs, const Setting& x) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    auto r = obs.design().run(i);
    if (std::equal(r.begin(), r.end(), x.begin())) {
      sum += obs.responses()[i];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

AlphaVector fixed_alphas(SelMethod m, std::size_t p) { return AlphaVector(p, m == SelMethod::mean ? 1.0 : 0.0); }

// Marginal statistics in original level coordinates: from the restricted
// data, or from every accumulated run when dead-run exclusion is off.
MarginalProfile stage_profile(const SelState& s, std::span<const double> alphas) {
  if (s.config.exclude_dead_runs) {
    const auto r = restricted_observations(s);
    require(!r.obs.empty(), Errc::empty_slice, "no observations on the surviving levels");
    auto prof = marginal_profile(r.obs, alphas, r.levels);
    for (std::size_t l = 0; l < prof.factors.size(); ++l)
      for (auto& st : prof.factors[l]) st.level = s.surviving[l][static_cast<std::size_t>(st.level - 1)];
    return prof;
  }
  return marginal_profile(s.accumulated, alphas, s.space.level_profile());
}

void require_data(const SelState& s) {
  require(!s.accumulated.empty(), Errc::protocol, "no observations absorbed yet");
}

}  // namespace

const char* sel_method_name(SelMethod m) noexcept {
  switch (m) {
    case SelMethod::atm: return "atm";
    case SelMethod::mean: return "mean";
    case SelMethod::min: return "min";
  }
  return "atm";
}

SelMethod parse_sel_method(const std::string& name) {
  if (name == "atm" || name == "sel.atm") return SelMethod::atm;
  if (name == "mean" || name == "sel.mean") return SelMethod::mean;
  if (name == "min" || name == "sel.min") return SelMethod::min;
  fail(Errc::invalid_argument, "unknown elimination method '" + name + "'");
}

std::vector<int> SelState::surviving_profile() const {
  std::vector<int> out;
  for (const auto& s : surviving) out.push_back(static_cast<int>(s.size()));
  return out;
}

bool SelState::finished() const {
  return std::all_of(surviving.begin(), surviving.end(), [](const auto& s) { return s.size() == 1; });
}

SelState sel_init(const FactorSpace& space, const SelConfig& config) {
  require(space.size() > 0, Errc::invalid_argument, "empty factor space");
  for (int m : config.stage_multipliers) require(m >= 1, Errc::invalid_argument, "stage multipliers must be >= 1");
  SelState s;
  s.space = space;
  s.config = config;
  for (std::size_t l = 0; l < space.size(); ++l) {
    std::vector<int> lv(static_cast<std::size_t>(space.levels(l)));
    for (std::size_t j = 0; j < lv.size(); ++j) lv[j] = static_cast<int>(j) + 1;
    s.surviving.push_back(std::move(lv));
  }
  return s;
}

std::pair<SelState, Design> suggest_batch(const SelState& state) {
  require(state.phase != SelPhase::pending, Errc::protocol, "a suggested batch is still awaiting observations");
  SelState s = state;
  const auto profile = s.surviving_profile();
  const std::size_t p = profile.size();
  Design recoded;
  if (s.finished()) {
    recoded = Design(p, std::vector<int>(p, 1), Provenance::catalog_oa);
  } else {
    OaRequest req;
    req.level_profile = profile;
    const Design base = smallest_oa(req);
    const int copies = static_cast<std::size_t>(s.stage) < s.config.stage_multipliers.size()
                           ? s.config.stage_multipliers[static_cast<std::size_t>(s.stage)]
                           : 1;
    for (int c = 0; c < copies; ++c) {
      const auto seed = derive_seed(s.config.seed, kTagDesign, static_cast<std::uint64_t>(s.stage),
                                    static_cast<std::uint64_t>(s.batch), static_cast<std::uint64_t>(c));
      const Design copy = randomize(base, seed);
      recoded = stack(recoded, copy).with_provenance(copy.provenance());
    }
  }
  std::vector<int> cells;
  cells.reserve(recoded.runs() * p);
  for (std::size_t i = 0; i < recoded.runs(); ++i) {
    const auto x = to_original(s, recoded.run(i));
    cells.insert(cells.end(), x.begin(), x.end());
  }
  Design out(p, std::move(cells), recoded.provenance());
  s.pending = out;
  s.phase = SelPhase::pending;
  ++s.batch;
  return {std::move(s), std::move(out)};
}

SelState absorb(const SelState& state, const std::vector<double>& responses) {
  require(state.phase == SelPhase::pending && state.pending, Errc::protocol, "no suggested batch awaiting observations");
  require(responses.size() == state.pending->runs(), Errc::dimension_mismatch,
          "batch has " + std::to_string(state.pending->runs()) + " runs, got " + std::to_string(responses.size()) + " responses");
  SelState s = state;
  s.accumulated = s.accumulated.append(ObservationSet(*s.pending, responses));
  s.stage_runs += responses.size();
  s.pending.reset();
  s.phase = SelPhase::absorbed;
  s.tuned.reset();
  return s;
}

RestrictedData restricted_observations(const SelState& s) {
  RestrictedData out;
  out.levels = s.surviving_profile();
  const std::size_t p = s.space.size();
  std::vector<int> cells;
  std::vector<double> y;
  for (std::size_t i = 0; i < s.accumulated.size(); ++i) {
    auto r = s.accumulated.design().run(i);
    if (!is_surviving(s, r)) continue;
    for (std::size_t l = 0; l < p; ++l) {
      const auto& sv = s.surviving[l];
      cells.push_back(static_cast<int>(std::lower_bound(sv.begin(), sv.end(), r[l]) - sv.begin()) + 1);
    }
    y.push_back(s.accumulated.responses()[i]);
  }
  if (!y.empty()) out.obs = ObservationSet(Design(p, std::move(cells), Provenance::external), std::move(y));
  return out;
}

std::pair<SelState, AlphaVector> stage_alphas(const SelState& state) {
  require_data(state);
  const std::size_t p = state.space.size();
  if (state.config.method != SelMethod::atm) return {state, fixed_alphas(state.config.method, p)};
  if (state.tuned && state.tuned_at == state.accumulated.size()) return {state, *state.tuned};
  SelState s = state;
  const auto r = restricted_observations(s);
  require(!r.obs.empty(), Errc::empty_slice, "no observations on the surviving levels");
  TuneConfig tc = s.config.tune;
  tc.seed = derive_seed(s.config.seed, kTagTune, static_cast<std::uint64_t>(s.stage));
  auto res = tune_alpha(r.obs, r.levels, tc);
  s.tuned = res.alphas;
  s.tuned_at = s.accumulated.size();
  return {std::move(s), std::move(res.alphas)};
}

SelPrediction predict_with_alphas(const SelState& state, std::span<const double> alphas) {
  require_data(state);
  auto prof = stage_profile(state, alphas);
  // Only surviving levels are eligible.
  for (std::size_t l = 0; l < prof.factors.size(); ++l)
    for (auto& st : prof.factors[l])
      if (!std::binary_search(state.surviving[l].begin(), state.surviving[l].end(), st.level)) st.stat.reset();
  SelPrediction out;
  out.setting = argmin_levels(prof);
  out.value_estimate = observed_value(state.accumulated, out.setting);
  out.alphas.assign(alphas.begin(), alphas.end());
  return out;
}

std::pair<SelState, SelPrediction> predict(const SelState& state) {
  auto [s, alphas] = stage_alphas(state);
  auto pred = predict_with_alphas(s, alphas);
  return {std::move(s), std::move(pred)};
}

SelState eliminate_with_alphas(const SelState& state, std::span<const double> alphas) {
  require(state.phase == SelPhase::absorbed, Errc::protocol,
          state.phase == SelPhase::pending ? "cannot eliminate while a batch is awaiting observations"
                                           : "eliminate requires new observations since the last elimination");
  require_data(state);
  check_alphas(alphas, state.space.size());
  SelState s = state;
  StageRecord rec;
  rec.stage = s.stage;
  rec.runs = s.stage_runs;
  rec.alphas.assign(alphas.begin(), alphas.end());
  rec.prediction = predict_with_alphas(s, alphas).setting;
  const auto prof = stage_profile(s, alphas);
  const auto worst = worst_levels(prof, s.surviving);
  rec.eliminated.assign(s.surviving.size(), 0);
  for (std::size_t l = 0; l < s.surviving.size(); ++l) {
    auto& sv = s.surviving[l];
    if (sv.size() <= 1 || worst[l] == 0) continue;
    sv.erase(std::find(sv.begin(), sv.end(), worst[l]));
    rec.eliminated[l] = worst[l];
  }
  s.history.push_back(std::move(rec));
  ++s.stage;
  s.batch = 0;
  s.stage_runs = 0;
  s.phase = SelPhase::ready;
  s.tuned.reset();
  return s;
}

SelState eliminate(const SelState& state) {
  require(state.phase == SelPhase::absorbed, Errc::protocol,
          state.phase == SelPhase::pending ? "cannot eliminate while a batch is awaiting observations"
                                           : "eliminate requires new observations since the last elimination");
  auto [s, alphas] = stage_alphas(state);
  return eliminate_with_alphas(s, alphas);
}

void to_json(nlohmann::json& j, const SelConfig& c) {
  j = {{"method", sel_method_name(c.method)},
       {"seed", c.seed},
       {"stage_multipliers", c.stage_multipliers},
       {"exclude_dead_runs", c.exclude_dead_runs},
       {"tune",
        {{"candidate_count", c.tune.candidate_count},
         {"common_alpha_grid", c.tune.common_alpha_grid},
         {"synthetic_design_cap", c.tune.synthetic_design_cap},
         {"cv_folds", c.tune.surrogate.cv_folds}}}};
}

void from_json(const nlohmann::json& j, SelConfig& c) {
  c = SelConfig{};
  c.method = parse_sel_method(j.value("method", std::string("atm")));
  c.seed = j.value("seed", std::uint64_t{0});
  c.stage_multipliers = j.value("stage_multipliers", std::vector<int>{});
  c.exclude_dead_runs = j.value("exclude_dead_runs", true);
  if (j.contains("tune")) {
    const auto& t = j["tune"];
    c.tune.candidate_count = t.value("candidate_count", c.tune.candidate_count);
    c.tune.common_alpha_grid = t.value("common_alpha_grid", c.tune.common_alpha_grid);
    c.tune.synthetic_design_cap = t.value("synthetic_design_cap", c.tune.synthetic_design_cap);
    c.tune.surrogate.cv_folds = t.value("cv_folds", c.tune.surrogate.cv_folds);
  }
}

void to_json(nlohmann::json& j, const SelState& s) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : s.history)
    hist.push_back({{"stage", h.stage}, {"runs", h.runs}, {"alphas", h.alphas}, {"prediction", h.prediction},
                    {"eliminated", h.eliminated}});
  j = {{"format", "atm-session"},
       {"version", 1},
       {"space", s.space},
       {"config", s.config},
       {"stage", s.stage},
       {"batch", s.batch},
       {"phase", phase_name(s.phase)},
       {"surviving", s.surviving},
       {"stage_runs", s.stage_runs},
       {"accumulated", s.accumulated},
       {"pending", s.pending ? nlohmann::json(*s.pending) : nlohmann::json(nullptr)},
       {"history", hist}};
  if (s.tuned) j["tuned"] = {{"alphas", *s.tuned}, {"at", s.tuned_at}};
}

void from_json(const nlohmann::json& j, SelState& s) {
  require(j.value("format", std::string()) == "atm-session", Errc::parse, "state: not an atm-session document");
  require(j.value("version", 0) == 1, Errc::parse, "state: unsupported version");
  s = SelState{};
  s.space = j.at("space").get<FactorSpace>();
  s.config = j.at("config").get<SelConfig>();
  s.stage = j.at("stage").get<int>();
  s.batch = j.value("batch", 0);
  s.phase = parse_phase(j.at("phase").get<std::string>());
  s.surviving = j.at("surviving").get<std::vector<std::vector<int>>>();
  s.stage_runs = j.value("stage_runs", std::size_t{0});
  s.accumulated = j.at("accumulated").get<ObservationSet>();
  if (!j.at("pending").is_null()) s.pending = j["pending"].get<Design>();
  for (const auto& h : j.at("history")) {
    StageRecord r;
    r.stage = h.at("stage").get<int>();
    r.runs = h.at("runs").get<std::size_t>();
    r.alphas = h.at("alphas").get<AlphaVector>();
    r.prediction = h.at("prediction").get<Setting>();
    r.eliminated = h.at("eliminated").get<std::vector<int>>();
    s.history.push_back(std::move(r));
  }
  if (j.contains("tuned")) {
    s.tuned = j["tuned"].at("alphas").get<AlphaVector>();
    s.tuned_at = j["tuned"].at("at").get<std::size_t>();
  }
  require(s.surviving.size() == s.space.size(), Errc::parse, "state: surviving list does not match space");
  for (std::size_t l = 0; l < s.surviving.size(); ++l) {
    auto& sv = s.surviving[l];
    require(!sv.empty(), Errc::parse, "state: factor with no surviving level");
    require(std::is_sorted(sv.begin(), sv.end()), Errc::parse, "state: surviving levels must be ascending");
    for (int v : sv) require(v >= 1 && v <= s.space.levels(l), Errc::parse, "state: surviving level out of range");
  }
  require((s.phase == SelPhase::pending) == s.pending.has_value(), Errc::parse, "state: phase/pending mismatch");
}

SelState load_state_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open state file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, "state file '" + path + "': " + e.what());
  }
  try {
    return j.get<SelState>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, "state file '" + path + "': " + e.what());
  }
}

void save_state_file(const std::string& path, const SelState& state) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(Errc::io, "cannot write state file '" + path + "'");
    out << nlohmann::json(state).dump(1) << '\n';
    if (!out) fail(Errc::io, "write failed for '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(Errc::io, "cannot replace state file '" + path + "'");
}

}  // namespace atm
