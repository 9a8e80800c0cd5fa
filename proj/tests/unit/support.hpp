#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "atm/factor_space.hpp"

namespace support {

// Pair-count check written independently of verify_oa.
inline bool is_strength2(const atm::Design& d, const std::vector<int>& levels) {
  const std::size_t n = d.runs(), p = d.factors();
  for (std::size_t a = 0; a < p; ++a) {
    std::map<int, int> single;
    for (std::size_t i = 0; i < n; ++i) single[d.at(i, a)]++;
    if (static_cast<int>(single.size()) != levels[a]) return false;
    for (auto& [lv, c] : single)
      if (c * levels[a] != static_cast<int>(n)) return false;
    for (std::size_t b = a + 1; b < p; ++b) {
      std::map<std::pair<int, int>, int> pairs;
      for (std::size_t i = 0; i < n; ++i) pairs[{d.at(i, a), d.at(i, b)}]++;
      if (static_cast<int>(pairs.size()) != levels[a] * levels[b]) return false;
      for (auto& [k, c] : pairs)
        if (c * levels[a] * levels[b] != static_cast<int>(n)) return false;
    }
  }
  return true;
}

inline std::vector<atm::Setting> full_grid(const std::vector<int>& levels) {
  std::vector<atm::Setting> rows;
  atm::Setting x(levels.size(), 1);
  while (true) {
    rows.push_back(x);
    int l = static_cast<int>(levels.size()) - 1;
    while (l >= 0 && ++x[l] > levels[l]) x[l--] = 1;
    if (l < 0) break;
  }
  return rows;
}

inline double sort_mean(std::vector<double> v, std::size_t k) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.begin() + static_cast<long>(k), 0.0) / static_cast<double>(k);
}

inline bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

}  // namespace support
