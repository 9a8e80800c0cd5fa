#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace atm {

// Level indices are 1-based throughout; factor indices are 0-based.
using Setting = std::vector<int>;

enum class FactorKind { ordinal, nominal };

struct FactorSpec {
  int num_levels = 2;
  FactorKind kind = FactorKind::ordinal;
  // Optional physical value per level. Metadata only: predictors never read it.
  std::vector<double> physical_values;
  std::string units;
};

// The feasible set X = [N_1] x ... x [N_p].
class FactorSpace {
 public:
  FactorSpace() = default;
  explicit FactorSpace(std::vector<FactorSpec> factors);

  static FactorSpace uniform(std::size_t p, int levels, FactorKind kind = FactorKind::ordinal);
  static FactorSpace from_profile(std::span<const int> levels, FactorKind kind = FactorKind::ordinal);

  std::size_t size() const noexcept { return factors_.size(); }
  const FactorSpec& factor(std::size_t l) const { return factors_.at(l); }
  const std::vector<FactorSpec>& factors() const noexcept { return factors_; }
  int levels(std::size_t l) const { return factors_.at(l).num_levels; }
  std::vector<int> level_profile() const;
  std::vector<FactorKind> kinds() const;

  // Product of level counts, or nullopt when it overflows 64 bits.
  std::optional<std::uint64_t> cardinality() const;

  bool contains(std::span<const int> setting) const;
  void check_setting(std::span<const int> setting) const;

  friend bool operator==(const FactorSpace&, const FactorSpace&);

 private:
  std::vector<FactorSpec> factors_;
};

bool operator==(const FactorSpec& a, const FactorSpec& b);

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

// Visits every setting once in lexicographic order (last factor fastest).
// Throws Errc::capacity when the space exceeds `cap`.
void for_each_setting(const FactorSpace& space, const std::function<void(const Setting&)>& visit,
                      std::uint64_t cap = kDefaultEnumerationCap);
std::vector<Setting> enumerate(const FactorSpace& space, std::uint64_t cap = kDefaultEnumerationCap);

// Position of a setting in the lexicographic enumeration.
std::uint64_t setting_rank(std::span<const int> profile, std::span<const int> setting);

enum class Provenance { catalog_oa, permuted_oa, balanced_random, external };
const char* provenance_name(Provenance p) noexcept;
Provenance parse_provenance(const std::string& name);

// An n x p run matrix of level indices (row-major).
class Design {
 public:
  Design() = default;
  Design(std::size_t factors, std::vector<int> runs, Provenance provenance = Provenance::external);
  static Design from_rows(const std::vector<Setting>& rows, Provenance provenance = Provenance::external);

  std::size_t runs() const noexcept { return factors_ == 0 ? 0 : cells_.size() / factors_; }
  std::size_t factors() const noexcept { return factors_; }
  bool empty() const noexcept { return cells_.empty(); }
  int at(std::size_t run, std::size_t factor) const { return cells_[run * factors_ + factor]; }
  std::span<const int> run(std::size_t i) const { return {cells_.data() + i * factors_, factors_}; }
  Setting setting(std::size_t i) const;
  const std::vector<int>& cells() const noexcept { return cells_; }
  std::vector<int> column(std::size_t factor) const;
  Provenance provenance() const noexcept { return provenance_; }
  Design with_provenance(Provenance p) const;

  // Largest level seen in each column.
  std::vector<int> observed_levels() const;
  void validate(const FactorSpace& space) const;

  friend bool operator==(const Design&, const Design&) = default;

 private:
  std::size_t factors_ = 0;
  std::vector<int> cells_;
  Provenance provenance_ = Provenance::external;
};

Design stack(const Design& top, const Design& bottom);

// Design plus aligned responses.
class ObservationSet {
 public:
  ObservationSet() = default;
  ObservationSet(Design design, std::vector<double> responses, std::optional<double> noise_sd = std::nullopt);

  const Design& design() const noexcept { return design_; }
  const std::vector<double>& responses() const noexcept { return responses_; }
  std::optional<double> noise_sd() const noexcept { return noise_sd_; }
  std::size_t size() const noexcept { return responses_.size(); }
  std::size_t factors() const noexcept { return design_.factors(); }
  bool empty() const noexcept { return responses_.empty(); }

  ObservationSet append(const ObservationSet& more) const;
  ObservationSet subset(std::span<const std::size_t> rows) const;

 private:
  Design design_;
  std::vector<double> responses_;
  std::optional<double> noise_sd_;
};

// Responses of all runs with factor `factor` at `level`, in run order.
// Returns nullopt when the slice is empty.
std::optional<std::vector<double>> project_marginal(const ObservationSet& obs, std::size_t factor, int level);

// CSV dialect: header f1,...,fp[,y]; integer levels; optional response column.
struct LevelTable {
  Design design;
  std::optional<std::vector<double>> responses;
};
LevelTable read_level_csv(std::istream& in);
LevelTable read_level_csv_file(const std::string& path);
void write_design_csv(std::ostream& out, const Design& design);
void write_observations_csv(std::ostream& out, const ObservationSet& obs);

void to_json(nlohmann::json& j, const FactorSpace& space);
void from_json(const nlohmann::json& j, FactorSpace& space);
void to_json(nlohmann::json& j, const Design& design);
void from_json(const nlohmann::json& j, Design& design);
void to_json(nlohmann::json& j, const ObservationSet& obs);
void from_json(const nlohmann::json& j, ObservationSet& obs);

// Parses level profiles such as "4^9", "2^1 3^7", "2x3^2" or "6,3,6".
std::vector<int> parse_profile(const std::string& text);
std::string format_profile(std::span<const int> profile);
std::string format_setting(std::span<const int> setting, char sep = '-');

}  // namespace atm
