#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "atm/heredity.hpp"
#include "atm/marginal.hpp"

namespace atm {

struct TuneConfig {
  std::size_t candidate_count = 200;
  std::vector<double> common_alpha_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  // Upper bound on the synthetic design size; 0 means the number of observations.
  std::size_t synthetic_design_cap = 0;
  std::uint64_t seed = 0;
  HeredityConfig surrogate;
};

struct TuneCandidate {
  AlphaVector alphas;
  Setting prediction;  // ATM prediction on the synthetic data
  double score = 0.0;  // surrogate value at the prediction
};

struct TuneResult {
  AlphaVector alphas;
  SurrogateModel surrogate;
  Design synthetic_design;
  std::vector<TuneCandidate> candidates;  // in generation order
  std::size_t chosen = 0;
};

// All-zeros, all-ones, the common-alpha grid, then uniform draws up to
// candidate_count vectors in total.
std::vector<AlphaVector> alpha_candidates(std::size_t p, const TuneConfig& cfg, std::uint64_t seed);

// Fit the surrogate, draw a randomized smallest OA on the level profile
// (no larger than the data), score every candidate by the surrogate value at
// its ATM prediction, and keep the best. Ties go to the larger mean alpha,
// then to the lexicographically smaller vector.
TuneResult tune_alpha(const ObservationSet& obs, std::span<const int> levels, const TuneConfig& cfg = {});

// Same as tune_alpha with a prefit surrogate.
TuneResult tune_alpha_with(const SurrogateModel& surrogate, std::size_t n_obs, const TuneConfig& cfg);

// alpha_1..alpha_p,score,chosen
void write_tune_csv(std::ostream& out, const TuneResult& result);

}  // namespace atm
