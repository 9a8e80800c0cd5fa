#include "atm/heredity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "atm/error.hpp"
#include "atm/rng.hpp"

namespace atm {

namespace {

constexpr double kSaturated = 0.999;

double effect_code(int x, int n, int i) {
  if (x - 1 == i) return 1.0;
  if (x == n) return -1.0;
  return 0.0;
}

struct ColumnKey {
  int a = 0, b = -1;  // b < 0 for a main-effect column
  int i = 0, j = 0;
};

// Every effect-coded column the model can use, in a fixed order: all mains
// first, then interactions pair by pair.
std::vector<ColumnKey> column_keys(const std::vector<int>& levels) {
  std::vector<ColumnKey> keys;
  const int p = static_cast<int>(levels.size());
  for (int a = 0; a < p; ++a)
    for (int i = 0; i < levels[a] - 1; ++i) keys.push_back({a, -1, i, 0});
  for (int a = 0; a < p; ++a)
    for (int b = a + 1; b < p; ++b)
      for (int i = 0; i < levels[a] - 1; ++i)
        for (int j = 0; j < levels[b] - 1; ++j) keys.push_back({a, b, i, j});
  return keys;
}

double raw_value(const ColumnKey& k, std::span<const int> x, const std::vector<int>& levels) {
  const double u = effect_code(x[k.a], levels[k.a], k.i);
  if (k.b < 0) return u;
  return u * effect_code(x[k.b], levels[k.b], k.j);
}

// Centered, unit-norm columns and standardized response for one data subset.
class LassoData {
 public:
  LassoData(const Design& d, const std::vector<double>& y, const std::vector<std::size_t>& rows,
            const std::vector<ColumnKey>& keys, const std::vector<int>& levels)
      : n_(rows.size()), keys_(keys) {
    y_mean_ = 0.0;
    for (auto r : rows) y_mean_ += y[r];
    y_mean_ /= static_cast<double>(n_);
    double ss = 0.0;
    for (auto r : rows) ss += (y[r] - y_mean_) * (y[r] - y_mean_);
    y_scale_ = std::sqrt(ss / static_cast<double>(n_));
    y_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) y_[k] = y_scale_ > 0 ? (y[rows[k]] - y_mean_) / y_scale_ : 0.0;

    const std::size_t m = keys.size();
    while (mains_ < m && keys[mains_].b < 0) ++mains_;
    cols_.assign(m, std::vector<double>(n_));
    mean_.assign(m, 0.0);
    norm_.assign(m, 0.0);
    gamma_.assign(m, {});
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t k = 0; k < n_; ++k) cols_[c][k] = raw_value(keys[c], d.run(rows[k]), levels);

    // Interaction columns are projected off the span of the intercept and all
    // main-effect columns, so they only carry what mains cannot express.
    if (mains_ < m) {
      Eigen::MatrixXd M(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(mains_ + 1));
      for (std::size_t k = 0; k < n_; ++k) {
        M(static_cast<Eigen::Index>(k), 0) = 1.0;
        for (std::size_t c = 0; c < mains_; ++c) M(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c + 1)) = cols_[c][k];
      }
      const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
      for (std::size_t c = mains_; c < m; ++c) {
        const Eigen::Map<Eigen::VectorXd> x(cols_[c].data(), static_cast<Eigen::Index>(n_));
        const Eigen::VectorXd g = cod.solve(Eigen::VectorXd(x));
        const Eigen::VectorXd res = x - M * g;
        gamma_[c].assign(g.data(), g.data() + g.size());
        std::copy(res.data(), res.data() + res.size(), cols_[c].begin());
      }
    }

    const double floor = 1e-8 * std::sqrt(static_cast<double>(n_));
    for (std::size_t c = 0; c < m; ++c) {
      auto& v = cols_[c];
      mean_[c] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n_);
      double nn = 0.0;
      for (auto& e : v) {
        e -= mean_[c];
        nn += e * e;
      }
      norm_[c] = std::sqrt(nn);
      if (norm_[c] > floor)
        for (auto& e : v) e /= norm_[c];
      else
        norm_[c] = 0.0;
    }
  }

  // Standardized value of column c at setting x.
  double value(std::size_t c, std::span<const int> x, const std::vector<int>& levels) const {
    double v = raw_value(keys_[c], x, levels);
    if (!gamma_[c].empty()) {
      v -= gamma_[c][0];
      for (std::size_t j = 0; j < mains_; ++j)
        if (gamma_[c][j + 1] != 0.0) v -= gamma_[c][j + 1] * raw_value(keys_[j], x, levels);
    }
    return (v - mean_[c]) / norm_[c];
  }

  // Projection coefficients (intercept, then mains) of an interaction column.
  const std::vector<double>& gamma(std::size_t c) const { return gamma_[c]; }

  bool constant_response() const { return y_scale_ <= 1e-12 * std::max(1.0, std::abs(y_mean_)); }

  double lambda_max(std::size_t main_count) const {
    double lm = 0.0;
    for (std::size_t c = 0; c < main_count; ++c) {
      if (norm_[c] == 0.0) continue;
      double z = 0.0;
      for (std::size_t k = 0; k < n_; ++k) z += cols_[c][k] * y_[k];
      lm = std::max(lm, std::abs(z));
    }
    return lm;
  }

  // Cyclic coordinate descent over `set` with warm start `beta` (full length;
  // entries outside `set` are forced to zero).
  void solve(const std::vector<std::size_t>& set, double lambda, std::vector<double>& beta, const HeredityConfig& cfg) const {
    std::vector<bool> in(beta.size(), false);
    for (auto c : set) in[c] = true;
    for (std::size_t c = 0; c < beta.size(); ++c)
      if (!in[c] || norm_[c] == 0.0) beta[c] = 0.0;
    std::vector<double> r = y_;
    for (auto c : set)
      if (beta[c] != 0.0)
        for (std::size_t k = 0; k < n_; ++k) r[k] -= cols_[c][k] * beta[c];

    auto update = [&](std::size_t c) {
      if (norm_[c] == 0.0) return 0.0;
      const auto& x = cols_[c];
      double z = beta[c];
      for (std::size_t k = 0; k < n_; ++k) z += x[k] * r[k];
      const double nb = z > lambda ? z - lambda : (z < -lambda ? z + lambda : 0.0);
      const double delta = nb - beta[c];
      if (delta != 0.0) {
        for (std::size_t k = 0; k < n_; ++k) r[k] -= x[k] * delta;
        beta[c] = nb;
      }
      return std::abs(delta);
    };

    int sweeps = 0;
    while (sweeps < cfg.max_sweeps) {
      double change = 0.0;
      for (auto c : set) change = std::max(change, update(c));
      ++sweeps;
      if (change < cfg.tolerance) break;
      // Iterate on the current support until it settles, then re-check all.
      std::vector<std::size_t> active;
      for (auto c : set)
        if (beta[c] != 0.0) active.push_back(c);
      while (sweeps < cfg.max_sweeps) {
        double ch = 0.0;
        for (auto c : active) ch = std::max(ch, update(c));
        ++sweeps;
        if (ch < cfg.tolerance) break;
      }
    }
  }

  // Fraction of the standardized response variance explained by beta.
  double explained(const std::vector<double>& beta) const {
    std::vector<double> r = y_;
    for (std::size_t c = 0; c < beta.size(); ++c)
      if (beta[c] != 0.0)
        for (std::size_t k = 0; k < n_; ++k) r[k] -= cols_[c][k] * beta[c];
    double rr = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      rr += r[k] * r[k];
      yy += y_[k] * y_[k];
    }
    return yy > 0.0 ? 1.0 - rr / yy : 1.0;
  }

  std::size_t rows() const { return n_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }
  double col_mean(std::size_t c) const { return mean_[c]; }
  double col_norm(std::size_t c) const { return norm_[c]; }

 private:
  std::size_t n_;
  const std::vector<ColumnKey>& keys_;
  std::vector<double> y_;
  double y_mean_ = 0.0, y_scale_ = 0.0;
  std::size_t mains_ = 0;
  std::vector<std::vector<double>> cols_;
  std::vector<double> mean_, norm_;
  std::vector<std::vector<double>> gamma_;
};

struct PathFit {
  std::vector<double> beta;  // standardized scale
  std::vector<bool> main_active;
};

class TwoStage {
 public:
  TwoStage(const LassoData& data, const std::vector<ColumnKey>& keys, const std::vector<int>& levels, const HeredityConfig& cfg)
      : data_(data), keys_(keys), p_(levels.size()), cfg_(cfg), beta1_(keys.size(), 0.0), beta2_(keys.size(), 0.0) {
    while (main_count_ < keys.size() && keys[main_count_].b < 0) ++main_count_;
  }

  std::size_t main_count() const { return main_count_; }

  PathFit fit(double lambda) {
    std::vector<std::size_t> mains(main_count_);
    std::iota(mains.begin(), mains.end(), std::size_t{0});
    data_.solve(mains, lambda, beta1_, cfg_);
    std::vector<bool> parent(p_, false);
    for (std::size_t c = 0; c < main_count_; ++c)
      if (beta1_[c] != 0.0) parent[static_cast<std::size_t>(keys_[c].a)] = true;

    std::vector<bool> keep(keys_.size(), false);
    for (std::size_t c = 0; c < keys_.size(); ++c) {
      const auto& k = keys_[c];
      keep[c] = k.b < 0 ? parent[k.a] : (parent[k.a] || parent[k.b]);
    }
    // Stage 2 starts from the main-effects solution.
    beta2_ = beta1_;
    std::vector<bool> active(p_, false);
    while (true) {
      std::vector<std::size_t> set;
      for (std::size_t c = 0; c < keys_.size(); ++c)
        if (keep[c]) set.push_back(c);
      data_.solve(set, lambda, beta2_, cfg_);
      active.assign(p_, false);
      for (std::size_t c = 0; c < main_count_; ++c)
        if (beta2_[c] != 0.0) active[static_cast<std::size_t>(keys_[c].a)] = true;
      bool dropped = false;
      for (std::size_t c = main_count_; c < keys_.size(); ++c) {
        const auto& k = keys_[c];
        if (keep[c] && !active[k.a] && !active[k.b]) {
          keep[c] = false;
          dropped = dropped || beta2_[c] != 0.0;
          beta2_[c] = 0.0;
        }
      }
      if (!dropped) break;
    }
    return {beta2_, active};
  }

 private:
  const LassoData& data_;
  const std::vector<ColumnKey>& keys_;
  std::size_t p_;
  const HeredityConfig& cfg_;
  std::size_t main_count_ = 0;
  std::vector<double> beta1_, beta2_;
};

double predict_std(const LassoData& data, const std::vector<ColumnKey>& keys, const std::vector<int>& levels,
                   const std::vector<double>& beta, std::span<const int> x) {
  double s = 0.0;
  for (std::size_t c = 0; c < keys.size(); ++c) {
    if (beta[c] == 0.0 || data.col_norm(c) == 0.0) continue;
    s += beta[c] * data.value(c, x, levels);
  }
  return data.y_mean() + data.y_scale() * s;
}

std::vector<double> fraction_grid(const HeredityConfig& cfg) {
  std::vector<double> g(static_cast<std::size_t>(cfg.grid_size));
  for (int k = 0; k < cfg.grid_size; ++k)
    g[k] = cfg.grid_size == 1 ? 1.0 : std::pow(cfg.grid_ratio, static_cast<double>(k) / (cfg.grid_size - 1));
  return g;
}

// Fold per row, assigned on a canonical row order so the result does not
// depend on how the caller ordered the runs.
std::vector<int> assign_folds(const ObservationSet& obs, int folds, std::uint64_t seed) {
  const std::size_t n = obs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& d = obs.design();
  const auto& y = obs.responses();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = d.run(a), rb = d.run(b);
    if (!std::equal(ra.begin(), ra.end(), rb.begin()))
      return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    return y[a] < y[b];
  });
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[order[k]] = static_cast<int>(perm[k] % static_cast<std::size_t>(folds));
  return fold;
}

SurrogateModel intercept_only(const std::vector<int>& levels, double mean) {
  SurrogateModel m;
  m.levels = levels;
  m.intercept = mean;
  for (int n : levels) m.main_effects.emplace_back(static_cast<std::size_t>(n), 0.0);
  return m;
}

}  // namespace

SurrogateModel fit_surrogate(const ObservationSet& obs, std::span<const int> levels_in, const HeredityConfig& cfg) {
  require(!obs.empty(), Errc::invalid_argument, "cannot fit a surrogate without observations");
  std::vector<int> levels(levels_in.begin(), levels_in.end());
  if (levels.empty()) levels = obs.design().observed_levels();
  require(levels.size() == obs.factors(), Errc::dimension_mismatch, "level list does not match factor count");
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t l = 0; l < levels.size(); ++l)
      require(obs.design().at(i, l) <= levels[l], Errc::invalid_argument, "observed level exceeds factor range");

  const auto keys = column_keys(levels);
  const std::size_t n = obs.size();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  LassoData full(obs.design(), obs.responses(), all, keys, levels);
  if (full.constant_response()) {
    auto m = intercept_only(levels, full.y_mean());
    m.degenerate = true;
    return m;
  }

  const auto grid = fraction_grid(cfg);
  double fraction = 0.0;
  double cv_error = 0.0;
  if (cfg.lambda_fraction) {
    fraction = *cfg.lambda_fraction;
  } else if (n < 4) {
    fraction = 0.1;
  } else {
    // More folds when the requested count would leave training folds too
    // small to identify every main effect.
    std::size_t mains = 1;
    for (int l : levels) mains += static_cast<std::size_t>(l - 1);
    std::size_t k = n < cfg.loo_below ? n : std::min<std::size_t>(static_cast<std::size_t>(cfg.cv_folds), n);
    while (k < n && n - (n + k - 1) / k < mains) ++k;
    const int folds = static_cast<int>(k);
    const auto fold = assign_folds(obs, folds, cfg.seed);
    std::vector<double> err(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
      if (test.empty() || train.size() < 2) continue;
      LassoData data(obs.design(), obs.responses(), train, keys, levels);
      TwoStage ts(data, keys, levels, cfg);
      const double lmax = data.lambda_max(ts.main_count());
      std::vector<double> beta(keys.size(), 0.0);
      bool saturated = data.constant_response();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        // Past an essentially interpolating fit the rest of the path is flat.
        if (!saturated) {
          beta = ts.fit(grid[g] * lmax).beta;
          saturated = data.explained(beta) >= kSaturated;
        }
        for (auto i : test) {
          const double e = predict_std(data, keys, levels, beta, obs.design().run(i)) - obs.responses()[i];
          err[g] += e * e;
        }
      }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
      if (err[g] < err[best]) best = g;
    fraction = grid[best];
    cv_error = err[best] / static_cast<double>(n);
  }

  TwoStage ts(full, keys, levels, cfg);
  const double lmax = full.lambda_max(ts.main_count());
  // Walk down the grid to the chosen point for warm starts.
  // Once saturated, jump straight to the chosen point from there.
  PathFit pf;
  double fitted_at = -1.0;
  for (double g : grid) {
    if (g < fraction) break;
    pf = ts.fit(g * lmax);
    fitted_at = g;
    if (full.explained(pf.beta) >= kSaturated) break;
  }
  if (fitted_at != fraction) pf = ts.fit(fraction * lmax);

  SurrogateModel m = intercept_only(levels, full.y_mean());
  m.lambda_fraction = fraction;
  m.lambda = fraction * lmax * full.y_scale();
  m.cv_error = cv_error;
  const std::size_t p = levels.size();
  for (std::size_t c = 0; c < keys.size(); ++c) {
    if (pf.beta[c] == 0.0) continue;
    const auto& k = keys[c];
    const double coef = pf.beta[c] * full.y_scale() / full.col_norm(c);
    m.intercept -= coef * full.col_mean(c);
    if (const auto& g = full.gamma(c); !g.empty()) {
      m.intercept -= coef * g[0];
      for (std::size_t j = 0; j + 1 < g.size(); ++j) {
        if (g[j + 1] == 0.0) continue;
        const auto& kj = keys[j];
        auto& t = m.main_effects[kj.a];
        for (int x = 1; x <= levels[kj.a]; ++x) t[x - 1] -= coef * g[j + 1] * effect_code(x, levels[kj.a], kj.i);
      }
    }
    if (k.b < 0) {
      auto& t = m.main_effects[k.a];
      for (int x = 1; x <= levels[k.a]; ++x) t[x - 1] += coef * effect_code(x, levels[k.a], k.i);
    } else {
      auto& t = m.interactions[{k.a, k.b}];
      const int na = levels[k.a], nb = levels[k.b];
      t.resize(static_cast<std::size_t>(na * nb), 0.0);
      for (int xa = 1; xa <= na; ++xa)
        for (int xb = 1; xb <= nb; ++xb)
          t[(xa - 1) * nb + xb - 1] += coef * effect_code(xa, na, k.i) * effect_code(xb, nb, k.j);
    }
  }
  for (std::size_t l = 0; l < p; ++l)
    if (pf.main_active[l]) m.active_main.push_back(static_cast<int>(l));
  for (const auto& [pair, _] : m.interactions) m.active_pairs.push_back(pair);
  return m;
}

double evaluate(const SurrogateModel& model, std::span<const int> x) {
  require(x.size() == model.factors(), Errc::dimension_mismatch,
          "setting has " + std::to_string(x.size()) + " factors, model has " + std::to_string(model.factors()));
  double s = model.intercept;
  for (std::size_t l = 0; l < x.size(); ++l) {
    require(x[l] >= 1 && x[l] <= model.levels[l], Errc::invalid_argument, "setting outside the model's levels");
    s += model.main_effects[l][static_cast<std::size_t>(x[l] - 1)];
  }
  for (const auto& [pair, t] : model.interactions)
    s += t[static_cast<std::size_t>((x[pair.first] - 1) * model.levels[pair.second] + x[pair.second] - 1)];
  return s;
}

std::vector<double> evaluate(const SurrogateModel& model, const Design& design) {
  std::vector<double> out(design.runs());
  for (std::size_t i = 0; i < design.runs(); ++i) out[i] = evaluate(model, design.run(i));
  return out;
}

double interaction_strength(const SurrogateModel& model) {
  double inter = 0.0, main = 0.0;
  for (const auto& [_, t] : model.interactions)
    for (double v : t) inter += std::abs(v);
  for (const auto& t : model.main_effects)
    for (double v : t) main += std::abs(v);
  return inter / (main + 1e-12);
}

bool satisfies_weak_heredity(const SurrogateModel& model) {
  auto active = [&](int l) { return std::binary_search(model.active_main.begin(), model.active_main.end(), l); };
  return std::all_of(model.active_pairs.begin(), model.active_pairs.end(),
                     [&](const auto& pr) { return active(pr.first) || active(pr.second); });
}

void to_json(nlohmann::json& j, const SurrogateModel& m) {
  nlohmann::json inter = nlohmann::json::array();
  for (const auto& [pair, t] : m.interactions) inter.push_back({{"factors", {pair.first + 1, pair.second + 1}}, {"table", t}});
  std::vector<int> mains;
  for (int l : m.active_main) mains.push_back(l + 1);
  j = {{"levels", m.levels},
       {"intercept", m.intercept},
       {"main_effects", m.main_effects},
       {"interactions", inter},
       {"active_main", mains},
       {"lambda", m.lambda},
       {"lambda_fraction", m.lambda_fraction},
       {"cv_error", m.cv_error},
       {"degenerate", m.degenerate}};
}

void from_json(const nlohmann::json& j, SurrogateModel& m) {
  m = SurrogateModel{};
  j.at("levels").get_to(m.levels);
  j.at("intercept").get_to(m.intercept);
  j.at("main_effects").get_to(m.main_effects);
  require(m.main_effects.size() == m.levels.size(), Errc::parse, "main_effects does not match levels");
  for (const auto& e : j.at("interactions")) {
    const int a = e.at("factors").at(0).get<int>() - 1;
    const int b = e.at("factors").at(1).get<int>() - 1;
    require(a >= 0 && a < b && b < static_cast<int>(m.levels.size()), Errc::parse, "bad interaction pair");
    auto t = e.at("table").get<std::vector<double>>();
    require(t.size() == static_cast<std::size_t>(m.levels[a] * m.levels[b]), Errc::parse, "bad interaction table size");
    m.interactions[{a, b}] = std::move(t);
    m.active_pairs.emplace_back(a, b);
  }
  for (int l : j.at("active_main").get<std::vector<int>>()) m.active_main.push_back(l - 1);
  m.lambda = j.value("lambda", 0.0);
  m.lambda_fraction = j.value("lambda_fraction", 0.0);
  m.cv_error = j.value("cv_error", 0.0);
  m.degenerate = j.value("degenerate", false);
}

}  // namespace atm
