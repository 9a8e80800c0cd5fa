#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atm/factor_space.hpp"

namespace atm {

struct HeredityConfig {
  int cv_folds = 5;             // leave-one-out below loo_below runs
  std::size_t loo_below = 15;
  int grid_size = 50;
  double grid_ratio = 1e-4;     // smallest lambda / lambda_max
  double tolerance = 1e-7;
  int max_sweeps = 10000;
  // Skip cross-validation and use this fraction of lambda_max.
  std::optional<double> lambda_fraction;
  std::uint64_t seed = 0;
};

// Main effects plus two-factor interactions, stored as per-level tables.
// Main tables sum to zero within each factor; interaction tables sum to zero
// along every row and column.
struct SurrogateModel {
  std::vector<int> levels;
  double intercept = 0.0;
  std::vector<std::vector<double>> main_effects;  // [factor][level - 1]
  // (a, b) with a < b -> table[(x_a - 1) * N_b + (x_b - 1)]
  std::map<std::pair<int, int>, std::vector<double>> interactions;
  std::vector<int> active_main;                  // factor indices, ascending
  std::vector<std::pair<int, int>> active_pairs;  // ascending
  double lambda = 0.0;
  double lambda_fraction = 0.0;
  double cv_error = 0.0;
  bool degenerate = false;  // intercept-only because the response is constant

  std::size_t factors() const { return levels.size(); }
};

// Two-stage heredity lasso: an L1 fit on effect-coded main-effect columns,
// then a joint L1 fit over the surviving mains and the interactions of every
// pair with at least one surviving parent. Interaction columns are projected
// off the span of the main-effect columns on the training rows, so they carry
// only what the mains cannot express. Interactions whose parents both drop
// out in the joint fit are removed and the joint fit is repeated.
SurrogateModel fit_surrogate(const ObservationSet& obs, std::span<const int> levels, const HeredityConfig& cfg = {});

double evaluate(const SurrogateModel& model, std::span<const int> setting);
std::vector<double> evaluate(const SurrogateModel& model, const Design& design);

// sum |interaction table entries| / (sum |main table entries| + 1e-12)
double interaction_strength(const SurrogateModel& model);

bool satisfies_weak_heredity(const SurrogateModel& model);

void to_json(nlohmann::json& j, const SurrogateModel& m);
void from_json(const nlohmann::json& j, SurrogateModel& m);

}  // namespace atm
