#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "atm/factor_space.hpp"
#include "atm/marginal.hpp"
#include "atm/tuner.hpp"

namespace atm {

enum class SelMethod { atm, mean, min };
const char* sel_method_name(SelMethod m) noexcept;
SelMethod parse_sel_method(const std::string& name);

struct SelConfig {
  SelMethod method = SelMethod::atm;
  std::uint64_t seed = 0;
  TuneConfig tune;
  // Copies of the stage OA per batch, indexed by stage; missing entries mean 1.
  std::vector<int> stage_multipliers;
  // Drop runs that use eliminated levels from all later statistics.
  bool exclude_dead_runs = true;
};

enum class SelPhase { ready, pending, absorbed };

struct StageRecord {
  int stage = 0;
  std::size_t runs = 0;          // runs absorbed during the stage
  AlphaVector alphas;            // alphas used for the elimination
  Setting prediction;            // original level indices
  std::vector<int> eliminated;   // per factor; 0 when the factor was skipped
};

struct SelPrediction {
  Setting setting;
  std::optional<double> value_estimate;
  AlphaVector alphas;
};

// Ask/tell state for one sequential-elimination session. Transitions return a
// new state; a state is never modified in place by the free functions below.
struct SelState {
  FactorSpace space;
  SelConfig config;
  std::vector<std::vector<int>> surviving;  // ascending original levels
  int stage = 0;
  int batch = 0;  // batches suggested in the current stage
  SelPhase phase = SelPhase::ready;
  ObservationSet accumulated;
  std::optional<Design> pending;
  std::vector<StageRecord> history;
  std::size_t stage_runs = 0;
  // Tuned alphas for the current stage, valid while accumulated.size() == tuned_at.
  std::optional<AlphaVector> tuned;
  std::size_t tuned_at = 0;

  std::vector<int> surviving_profile() const;
  bool finished() const;  // every factor has one level left
};

SelState sel_init(const FactorSpace& space, const SelConfig& config);

// Smallest randomized OA over the surviving profile, in original levels.
std::pair<SelState, Design> suggest_batch(const SelState& state);
SelState absorb(const SelState& state, const std::vector<double>& responses);

// Uses the configured method (tuning alphas for atm).
SelState eliminate(const SelState& state);
SelState eliminate_with_alphas(const SelState& state, std::span<const double> alphas);

// Tuned alphas for atm, fixed ones for mean/min.
std::pair<SelState, AlphaVector> stage_alphas(const SelState& state);
std::pair<SelState, SelPrediction> predict(const SelState& state);
SelPrediction predict_with_alphas(const SelState& state, std::span<const double> alphas);

// Data restricted to surviving levels and recoded to positions 1..k within
// each factor's surviving list.
struct RestrictedData {
  ObservationSet obs;
  std::vector<int> levels;
};
RestrictedData restricted_observations(const SelState& state);

void to_json(nlohmann::json& j, const SelState& s);
void from_json(const nlohmann::json& j, SelState& s);
void to_json(nlohmann::json& j, const SelConfig& c);
void from_json(const nlohmann::json& j, SelConfig& c);

SelState load_state_file(const std::string& path);
void save_state_file(const std::string& path, const SelState& state);

}  // namespace atm
