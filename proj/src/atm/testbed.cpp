#include "atm/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "atm/error.hpp"
#include "atm/marginal.hpp"

namespace atm {

namespace {

double friedman(std::span<const double> x) {
  return 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4];
}

double detpep10(std::span<const double> x) {
  const double a = x[0] - 2.0 + 8.0 * x[1] - 8.0 * x[1] * x[1];
  const double b = 3.0 - 4.0 * x[1];
  const double c = 2.0 * x[2] - 1.0;
  return 4.0 * a * a + b * b + 16.0 * std::sqrt(x[2] + 1.0) * c * c + 30.0 * std::log(1.0 + x[2]);
}

double detpep10e(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k + 2 < x.size(); k += 3) {
    const double a = x[k], b = x[k + 1], c = x[k + 2];
    s += std::exp(-2.0 / std::pow(a, 1.75)) + std::exp(-2.0 / std::pow(b, 1.5)) + std::exp(-2.0 / std::pow(c, 1.25)) +
         0.01 * a * b * c;
  }
  return 100.0 * s;
}

double camel6(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < x.size(); k += 2) {
    const double u = x[k], v = x[k + 1];
    s += (4.0 - 2.1 * u * u + u * u * u * u / 3.0) * u * u + u * v + (-4.0 + 4.0 * v * v) * v * v;
  }
  return s;
}

double shubert(std::span<const double> x) {
  double prod = 1.0, px = 1.0;
  for (double v : x) {
    double s = 0.0;
    for (int i = 1; i <= 5; ++i) s += i * std::cos((i + 1) * v + i);
    prod *= s;
    px *= v;
  }
  return (prod + 0.01 * px) / std::pow(10.0, static_cast<double>(x.size()));
}

std::vector<double> physical(const FactorSpace& space, std::span<const int> x) {
  std::vector<double> v(x.size());
  for (std::size_t l = 0; l < x.size(); ++l) v[l] = space.factor(l).physical_values[static_cast<std::size_t>(x[l] - 1)];
  return v;
}

}  // namespace

std::vector<std::string> builtin_names() { return {"friedman", "detpep10", "detpep10e", "camel6", "shubert"}; }

ContinuousObjective builtin(const std::string& name, std::size_t p) {
  auto box = [&](double lo, double hi) {
    ContinuousObjective o;
    o.name = name;
    o.lo.assign(p, lo);
    o.hi.assign(p, hi);
    return o;
  };
  auto need = [&](bool ok, const std::string& what) {
    require(ok, Errc::invalid_argument, name + " requires " + what + " (got p=" + std::to_string(p) + ")");
  };
  if (name == "friedman") {
    need(p == 5, "p = 5");
    auto o = box(0.0, 1.0);
    o.f = friedman;
    return o;
  }
  if (name == "detpep10") {
    need(p == 3, "p = 3");
    auto o = box(0.0, 1.0);
    o.f = detpep10;
    return o;
  }
  if (name == "detpep10e") {
    need(p >= 3 && p % 3 == 0, "p divisible by 3");
    auto o = box(0.0, 1.0);
    o.f = detpep10e;
    return o;
  }
  if (name == "camel6") {
    need(p >= 2 && p % 2 == 0, "an even p");
    auto o = box(-2.0, 2.0);
    for (std::size_t k = 1; k < p; k += 2) {
      o.lo[k] = -1.0;
      o.hi[k] = 1.0;
    }
    o.f = camel6;
    return o;
  }
  if (name == "shubert") {
    need(p >= 1, "p >= 1");
    auto o = box(-10.0, 10.0);
    o.f = shubert;
    return o;
  }
  fail(Errc::invalid_argument, "unknown objective '" + name + "'");
}

std::vector<double> mid_levels(double lo, double hi, int n) {
  require(n >= 1 && std::isfinite(lo) && std::isfinite(hi), Errc::invalid_argument, "bad discretization box");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) v[j - 1] = lo + (j - 0.5) * (hi - lo) / n;
  return v;
}

DiscretizedObjective::DiscretizedObjective(std::string name, FactorSpace space, Evaluator noiseless, double noise_sd,
                                           std::uint64_t noise_seed)
    : name_(std::move(name)),
      space_(std::move(space)),
      eval_(std::make_shared<const Evaluator>(std::move(noiseless))),
      noise_sd_(noise_sd),
      noise_seed_(noise_seed),
      state_(std::make_unique<State>()) {
  require(noise_sd >= 0.0 && std::isfinite(noise_sd), Errc::invalid_argument, "noise sd must be nonnegative");
  state_->rng.seed(noise_seed);
}

DiscretizedObjective::DiscretizedObjective(const DiscretizedObjective& o)
    : name_(o.name_), space_(o.space_), eval_(o.eval_), noise_sd_(o.noise_sd_), noise_seed_(o.noise_seed_),
      state_(std::make_unique<State>()) {
  state_->rng.seed(noise_seed_);
}

DiscretizedObjective& DiscretizedObjective::operator=(const DiscretizedObjective& o) {
  if (this != &o) *this = DiscretizedObjective(o);
  return *this;
}

double DiscretizedObjective::evaluate_noiseless(std::span<const int> x) const {
  space_.check_setting(x);
  return (*eval_)(x);
}

double DiscretizedObjective::evaluate(std::span<const int> x) const {
  const double v = evaluate_noiseless(x);
  state_->counter.fetch_add(1);
  if (noise_sd_ == 0.0) return v;
  std::lock_guard lock(state_->mu);
  return v + std::normal_distribution<double>(0.0, noise_sd_)(state_->rng);
}

std::vector<double> DiscretizedObjective::evaluate(const Design& design) const {
  std::vector<double> y(design.runs());
  for (std::size_t i = 0; i < design.runs(); ++i) y[i] = evaluate(design.run(i));
  return y;
}

DiscretizedObjective DiscretizedObjective::with_noise(double sd, std::uint64_t seed) const {
  DiscretizedObjective o(*this);
  require(sd >= 0.0 && std::isfinite(sd), Errc::invalid_argument, "noise sd must be nonnegative");
  o.noise_sd_ = sd;
  o.noise_seed_ = seed;
  o.state_->rng.seed(seed);
  return o;
}

DiscretizedObjective discretize(const ContinuousObjective& f, std::span<const int> levels) {
  require(levels.size() == f.dims(), Errc::dimension_mismatch, "level list does not match objective dimension");
  std::vector<FactorSpec> specs;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    FactorSpec s;
    s.num_levels = levels[l];
    s.physical_values = mid_levels(f.lo[l], f.hi[l], levels[l]);
    specs.push_back(std::move(s));
  }
  FactorSpace space(std::move(specs));
  auto fn = f.f;
  auto eval = [space, fn](std::span<const int> x) { return fn(physical(space, x)); };
  return DiscretizedObjective(f.name, space, eval);
}

DiscretizedObjective discretize_builtin(const std::string& name, std::size_t p, int levels) {
  const std::vector<int> lv(p, levels);
  return discretize(builtin(name, p), lv);
}

DiscretizedObjective add_noise(const DiscretizedObjective& obj, double sd, std::uint64_t seed) {
  return obj.with_noise(sd, seed);
}

DiscretizedObjective robust_wrap(std::string name, const FactorSpace& space,
                                 std::function<double(std::span<const double>)> inner, double target,
                                 std::vector<double> tolerance, ProbeScheme scheme) {
  const std::size_t p = space.size();
  require(tolerance.size() == p, Errc::dimension_mismatch, "one tolerance per factor required");
  if (scheme == ProbeScheme::corners && p > 12)
    fail(Errc::invalid_argument, "corner probes need p <= 12; use the axial scheme");
  std::vector<double> half(p);
  for (std::size_t l = 0; l < p; ++l) {
    const auto& pv = space.factor(l).physical_values;
    require(!pv.empty(), Errc::invalid_argument, "robust wrapper needs physical level values");
    require(tolerance[l] >= 0.0, Errc::invalid_argument, "tolerance must be nonnegative");
    const auto [mn, mx] = std::minmax_element(pv.begin(), pv.end());
    half[l] = tolerance[l] * (*mx - *mn);
  }
  std::vector<std::vector<double>> offsets{std::vector<double>(p, 0.0)};
  if (scheme == ProbeScheme::corners) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << p); ++mask) {
      std::vector<double> t(p);
      for (std::size_t l = 0; l < p; ++l) t[l] = (mask >> l & 1) ? half[l] : -half[l];
      offsets.push_back(std::move(t));
    }
  } else {
    for (std::size_t l = 0; l < p; ++l)
      for (double sgn : {-1.0, 1.0}) {
        std::vector<double> t(p, 0.0);
        t[l] = sgn * half[l];
        offsets.push_back(std::move(t));
      }
  }
  auto eval = [space, inner = std::move(inner), target, offsets = std::move(offsets)](std::span<const int> x) {
    const auto v = physical(space, x);
    std::vector<double> z(v.size());
    double worst = 0.0;
    for (const auto& t : offsets) {
      for (std::size_t l = 0; l < v.size(); ++l) z[l] = v[l] + t[l];
      worst = std::max(worst, std::abs(inner(z) - target));
    }
    return worst;
  };
  return DiscretizedObjective(std::move(name), space, eval);
}

OracleResult brute_force(const DiscretizedObjective& obj, bool keep_table, std::uint64_t cap) {
  OracleResult out;
  out.min = std::numeric_limits<double>::infinity();
  for_each_setting(obj.space(), [&](const Setting& s) {
    const double v = obj.evaluate_noiseless(s);
    if (keep_table) out.table.push_back(v);
    if (v < out.min) {
      out.min = v;
      out.argmin = s;
    }
  }, cap);
  return out;
}

McReport check_mc(const FactorSpace& space, const std::vector<double>& table, std::size_t max_witnesses) {
  const auto profile = space.level_profile();
  const auto card = space.cardinality();
  require(card && *card == table.size(), Errc::dimension_mismatch, "table does not cover the space");
  const std::size_t p = space.size();

  // True marginal means from the full table.
  std::vector<std::vector<double>> sums(p);
  for (std::size_t l = 0; l < p; ++l) sums[l].assign(static_cast<std::size_t>(profile[l]), 0.0);
  std::size_t k = 0;
  for_each_setting(space, [&](const Setting& s) {
    for (std::size_t l = 0; l < p; ++l) sums[l][static_cast<std::size_t>(s[l] - 1)] += table[k];
    ++k;
  }, *card);
  McReport rep;
  for (std::size_t l = 0; l < p; ++l)
    rep.am_argmin.push_back(static_cast<int>(std::min_element(sums[l].begin(), sums[l].end()) - sums[l].begin()) + 1);

  // Strides of the lexicographic index (last factor fastest).
  std::vector<std::uint64_t> stride(p, 1);
  for (std::size_t l = p - 1; l-- > 0;) stride[l] = stride[l + 1] * static_cast<std::uint64_t>(profile[l + 1]);
  k = 0;
  for_each_setting(space, [&](const Setting& s) {
    const std::uint64_t idx = k++;
    for (std::size_t l = 0; l < p; ++l) {
      // Visit each slice once, from its member with factor l at the AM level.
      if (s[l] != rep.am_argmin[l]) continue;
      const std::uint64_t base = idx - static_cast<std::uint64_t>(s[l] - 1) * stride[l];
      const double at_am = table[idx];
      for (int v = 1; v <= profile[l]; ++v) {
        const double fv = table[base + static_cast<std::uint64_t>(v - 1) * stride[l]];
        if (fv < at_am) {
          rep.holds = false;
          ++rep.violations;
          if (rep.witnesses.size() < max_witnesses) rep.witnesses.push_back({l, s, v, at_am - fv});
        }
      }
    }
  }, *card);
  return rep;
}

void write_table_csv(std::ostream& out, const FactorSpace& space, const std::vector<double>& table) {
  for (std::size_t l = 0; l < space.size(); ++l) out << 'f' << l + 1 << ',';
  out << "y\n" << std::setprecision(17);
  std::size_t k = 0;
  for_each_setting(space, [&](const Setting& s) {
    for (int v : s) out << v << ',';
    out << table.at(k++) << '\n';
  }, table.size());
}

}  // namespace atm
