#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "atm/factor_space.hpp"

namespace atm {

using AlphaVector = std::vector<double>;

void check_alphas(std::span<const double> alphas, std::size_t p);

// Mean of the ceil(m * alpha) smallest values; the minimum when alpha == 0.
double tail_mean(std::span<const double> values, double alpha);

struct LevelStat {
  int level = 0;
  std::optional<double> stat;  // nullopt marks a level with no observations
  std::size_t count = 0;
};

struct MarginalProfile {
  std::vector<std::vector<LevelStat>> factors;
  AlphaVector alphas;
};

// Level counts default to the largest level observed per factor.
MarginalProfile marginal_profile(const ObservationSet& obs, std::span<const double> alphas,
                                 std::span<const int> levels = {});

// Per-factor argmin of the stat, lowest level on ties, missing levels skipped.
Setting argmin_levels(const MarginalProfile& profile);
// Per-factor argmax among `candidates[l]` (all non-missing when empty), highest level on ties.
std::vector<int> worst_levels(const MarginalProfile& profile, const std::vector<std::vector<int>>& candidates = {});

Setting predict_atm(const ObservationSet& obs, std::span<const double> alphas, std::span<const int> levels = {});
Setting predict_am(const ObservationSet& obs, std::span<const int> levels = {});
Setting predict_pw(const ObservationSet& obs);

// factor,level,alpha,stat,count (1-based factor; empty stat for missing levels)
void write_profile_csv(std::ostream& out, const MarginalProfile& profile);

}  // namespace atm
