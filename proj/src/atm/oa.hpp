#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atm/factor_space.hpp"

namespace atm {

struct OaRequest {
  std::vector<int> level_profile;  // N_l per factor; a 1 yields a constant column
  int strength = 2;
  std::optional<std::size_t> max_runs;
  bool allow_fallback = true;
};

// One array of the embedded construction set. Levels are stored 1-based,
// row-major, one column per entry of `column_levels`.
struct CatalogArray {
  std::string name;
  std::vector<int> column_levels;
  std::vector<int> cells;
  int strength = 2;

  std::size_t runs() const { return column_levels.empty() ? 0 : cells.size() / column_levels.size(); }
  Design design() const;
};

// The construction set, built once on first use. Ordered by run size.
const std::vector<CatalogArray>& oa_catalog();

// Smallest strength-2 array for the profile: exact catalog hit, then uniform
// level collapsing (N_l divides the column's level count), then full factorial,
// then a column-balanced random fallback (flagged `balanced-random`).
// Deterministic; columns keep catalog order.
Design smallest_oa(const OaRequest& request);
std::size_t smallest_oa_runs(std::span<const int> profile);

// Independent uniform level permutation per column plus a row shuffle.
Design randomize(const Design& design, std::uint64_t seed);

struct RandomizedDesign {
  Design design;
  std::vector<std::vector<int>> level_maps;  // level_maps[l][old - 1] = new level
  std::vector<std::size_t> row_order;         // new row i is old row row_order[i]
};
RandomizedDesign randomize_with_record(const Design& design, std::uint64_t seed);

struct OaReport {
  bool ok = false;
  double worst_imbalance = 0.0;
};

// Level counts per column are taken from `levels` when given, otherwise from
// the largest level observed in each column.
OaReport verify_oa(const Design& design, int strength, std::span<const int> levels = {});

enum class Augmentation { none, double_this_stage };
Design augment(const Design& design, Augmentation scheme, std::uint64_t seed);

// Column-balanced random design: every level appears floor(n/N_l) or
// ceil(n/N_l) times. With n = 0 the size is the smallest multiple of
// lcm(N_l) reaching 1 + sum(N_l - 1).
Design balanced_random_design(std::span<const int> profile, std::size_t runs, std::uint64_t seed);
std::size_t default_fallback_runs(std::span<const int> profile);

// Plain-text array format: one run per line, space-separated integer levels;
// '#' starts a comment. Values are returned as written.
std::vector<std::vector<int>> parse_array_text(std::string_view text);
std::string format_array_text(const Design& design);

}  // namespace atm
