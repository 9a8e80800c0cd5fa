#include "atm/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "atm/error.hpp"

namespace atm {

void check_alphas(std::span<const double> alphas, std::size_t p) {
  require(alphas.size() == p, Errc::dimension_mismatch,
          "alpha vector has " + std::to_string(alphas.size()) + " entries, expected " + std::to_string(p));
  for (double a : alphas) require(a >= 0.0 && a <= 1.0, Errc::invalid_argument, "alpha outside [0,1]");
}

double tail_mean(std::span<const double> values, double alpha) {
  require(!values.empty(), Errc::empty_slice, "tail mean of an empty sample");
  require(alpha >= 0.0 && alpha <= 1.0, Errc::invalid_argument, "alpha outside [0,1]");
  for (double v : values) require(!std::isnan(v), Errc::invalid_argument, "tail mean input contains NaN");
  const std::size_t m = values.size();
  if (alpha == 0.0) return *std::min_element(values.begin(), values.end());
  // ceil(m * alpha) with a small guard so that e.g. 0.3 * 10 is 3, not 4.
  auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(m) * alpha - 1e-9));
  k = std::clamp<std::size_t>(k, 1, m);
  std::vector<double> z(values.begin(), values.end());
  std::partial_sort(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(k), z.end());
  double s = 0.0;
  for (std::size_t r = 0; r < k; ++r) s += z[r];
  return s / static_cast<double>(k);
}

MarginalProfile marginal_profile(const ObservationSet& obs, std::span<const double> alphas, std::span<const int> levels) {
  require(!obs.empty(), Errc::invalid_argument, "no observations");
  const std::size_t p = obs.factors();
  check_alphas(alphas, p);
  std::vector<int> lv(levels.begin(), levels.end());
  if (lv.empty()) lv = obs.design().observed_levels();
  require(lv.size() == p, Errc::dimension_mismatch, "level list does not match factor count");

  MarginalProfile out;
  out.alphas.assign(alphas.begin(), alphas.end());
  out.factors.resize(p);
  const auto& d = obs.design();
  const auto& y = obs.responses();
  for (std::size_t l = 0; l < p; ++l) {
    std::vector<std::vector<double>> slices(static_cast<std::size_t>(lv[l]));
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const int v = d.at(i, l);
      require(v <= lv[l], Errc::invalid_argument, "observed level exceeds factor range");
      slices[static_cast<std::size_t>(v - 1)].push_back(y[i]);
    }
    auto& row = out.factors[l];
    row.resize(slices.size());
    for (std::size_t j = 0; j < slices.size(); ++j) {
      row[j].level = static_cast<int>(j) + 1;
      row[j].count = slices[j].size();
      if (!slices[j].empty()) row[j].stat = tail_mean(slices[j], alphas[l]);
    }
  }
  return out;
}

Setting argmin_levels(const MarginalProfile& profile) {
  Setting out;
  out.reserve(profile.factors.size());
  for (std::size_t l = 0; l < profile.factors.size(); ++l) {
    const LevelStat* best = nullptr;
    for (const auto& s : profile.factors[l])
      if (s.stat && (!best || *s.stat < *best->stat)) best = &s;
    if (!best) fail(Errc::empty_slice, "factor " + std::to_string(l + 1) + " has no observed levels");
    out.push_back(best->level);
  }
  return out;
}

std::vector<int> worst_levels(const MarginalProfile& profile, const std::vector<std::vector<int>>& candidates) {
  std::vector<int> out;
  for (std::size_t l = 0; l < profile.factors.size(); ++l) {
    const LevelStat* worst = nullptr;
    for (const auto& s : profile.factors[l]) {
      if (!s.stat) continue;
      if (!candidates.empty()) {
        const auto& c = candidates[l];
        if (std::find(c.begin(), c.end(), s.level) == c.end()) continue;
      }
      if (!worst || *s.stat >= *worst->stat) worst = &s;
    }
    out.push_back(worst ? worst->level : 0);
  }
  return out;
}

Setting predict_atm(const ObservationSet& obs, std::span<const double> alphas, std::span<const int> levels) {
  return argmin_levels(marginal_profile(obs, alphas, levels));
}

Setting predict_am(const ObservationSet& obs, std::span<const int> levels) {
  const std::vector<double> ones(obs.factors(), 1.0);
  return predict_atm(obs, ones, levels);
}

Setting predict_pw(const ObservationSet& obs) {
  require(!obs.empty(), Errc::invalid_argument, "no observations");
  const auto& y = obs.responses();
  const auto best = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  return obs.design().setting(best);
}

void write_profile_csv(std::ostream& out, const MarginalProfile& profile) {
  out << "factor,level,alpha,stat,count\n";
  out << std::setprecision(17);
  for (std::size_t l = 0; l < profile.factors.size(); ++l)
    for (const auto& s : profile.factors[l]) {
      out << l + 1 << ',' << s.level << ',' << profile.alphas[l] << ',';
      if (s.stat) out << *s.stat;
      out << ',' << s.count << '\n';
    }
}

}  // namespace atm
