#include "atm/tuner.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "atm/error.hpp"
#include "atm/oa.hpp"
#include "atm/rng.hpp"

namespace atm {

std::vector<AlphaVector> alpha_candidates(std::size_t p, const TuneConfig& cfg, std::uint64_t seed) {
  std::vector<AlphaVector> out;
  out.emplace_back(p, 0.0);
  out.emplace_back(p, 1.0);
  for (double a : cfg.common_alpha_grid) {
    require(a >= 0.0 && a <= 1.0, Errc::invalid_argument, "common alpha outside [0,1]");
    out.emplace_back(p, a);
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (out.size() < cfg.candidate_count) {
    AlphaVector a(p);
    for (auto& v : a) v = u(rng);
    out.push_back(std::move(a));
  }
  return out;
}

namespace {

double mean_of(const AlphaVector& a) { return a.empty() ? 0.0 : std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size()); }

bool better(const TuneCandidate& c, const TuneCandidate& best) {
  if (c.score != best.score) return c.score < best.score;
  const double mc = mean_of(c.alphas), mb = mean_of(best.alphas);
  if (mc != mb) return mc > mb;
  return c.alphas < best.alphas;
}

}  // namespace

TuneResult tune_alpha_with(const SurrogateModel& surrogate, std::size_t n_obs, const TuneConfig& cfg) {
  const auto& levels = surrogate.levels;
  const std::size_t p = levels.size();
  require(p > 0, Errc::invalid_argument, "surrogate has no factors");

  OaRequest req;
  req.level_profile = levels;
  req.max_runs = cfg.synthetic_design_cap > 0 ? std::min(cfg.synthetic_design_cap, n_obs) : n_obs;
  if (*req.max_runs == 0) req.max_runs.reset();
  const Design base = smallest_oa(req);
  TuneResult res;
  res.surrogate = surrogate;
  res.synthetic_design = randomize(base, derive_seed(cfg.seed, 1));
  const ObservationSet synthetic(res.synthetic_design, evaluate(surrogate, res.synthetic_design));

  for (auto& a : alpha_candidates(p, cfg, derive_seed(cfg.seed, 2))) {
    TuneCandidate c;
    c.prediction = predict_atm(synthetic, a, levels);
    c.score = evaluate(surrogate, c.prediction);
    c.alphas = std::move(a);
    res.candidates.push_back(std::move(c));
  }
  for (std::size_t k = 1; k < res.candidates.size(); ++k)
    if (better(res.candidates[k], res.candidates[res.chosen])) res.chosen = k;
  res.alphas = res.candidates[res.chosen].alphas;
  return res;
}

TuneResult tune_alpha(const ObservationSet& obs, std::span<const int> levels, const TuneConfig& cfg) {
  require(!obs.empty(), Errc::invalid_argument, "cannot tune without observations");
  HeredityConfig hc = cfg.surrogate;
  hc.seed = derive_seed(cfg.seed, 0);
  const auto model = fit_surrogate(obs, levels, hc);
  return tune_alpha_with(model, obs.size(), cfg);
}

void write_tune_csv(std::ostream& out, const TuneResult& result) {
  const std::size_t p = result.surrogate.levels.size();
  for (std::size_t l = 0; l < p; ++l) out << "alpha_" << l + 1 << ',';
  out << "score,chosen\n" << std::setprecision(17);
  for (std::size_t k = 0; k < result.candidates.size(); ++k) {
    const auto& c = result.candidates[k];
    for (double a : c.alphas) out << a << ',';
    out << c.score << ',' << (k == result.chosen ? 1 : 0) << '\n';
  }
}

}  // namespace atm
