#include "atm/oa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "atm/error.hpp"
#include "atm/rng.hpp"

namespace atm {

namespace {

// Kuhn's augmenting-path matching of factors onto array columns.
class ColumnMatcher {
 public:
  ColumnMatcher(const std::vector<int>& factors, const std::vector<int>& columns, bool allow_collapse)
      : factors_(factors), columns_(columns), allow_collapse_(allow_collapse), owner_(columns.size(), -1) {}

  bool solve() {
    for (std::size_t f = 0; f < factors_.size(); ++f) {
      if (factors_[f] == 1) continue;
      seen_.assign(columns_.size(), false);
      if (augment(static_cast<int>(f), false)) continue;
      if (!allow_collapse_) return false;
      seen_.assign(columns_.size(), false);
      if (!augment(static_cast<int>(f), true)) return false;
    }
    return true;
  }

  // Column index per factor (-1 for single-level factors).
  std::vector<int> assignment() const {
    std::vector<int> out(factors_.size(), -1);
    for (std::size_t c = 0; c < owner_.size(); ++c)
      if (owner_[c] >= 0) out[static_cast<std::size_t>(owner_[c])] = static_cast<int>(c);
    return out;
  }

 private:
  bool fits(int f, std::size_t c, bool collapse) const {
    const int n = factors_[static_cast<std::size_t>(f)];
    const int s = columns_[c];
    return s == n || (collapse && s % n == 0);
  }

  bool augment(int f, bool collapse) {
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (seen_[c] || !fits(f, c, collapse)) continue;
      seen_[c] = true;
      if (owner_[c] < 0 || augment(owner_[c], allow_collapse_)) {
        owner_[c] = f;
        return true;
      }
    }
    return false;
  }

  const std::vector<int>& factors_;
  const std::vector<int>& columns_;
  bool allow_collapse_;
  std::vector<int> owner_;
  std::vector<bool> seen_;
};

std::optional<Design> fit_catalog_array(const CatalogArray& a, const std::vector<int>& profile) {
  std::vector<int> assign;
  ColumnMatcher exact(profile, a.column_levels, false);
  if (exact.solve()) {
    assign = exact.assignment();
  } else {
    ColumnMatcher loose(profile, a.column_levels, true);
    if (!loose.solve()) return std::nullopt;
    assign = loose.assignment();
  }
  const std::size_t n = a.runs();
  const std::size_t width = a.column_levels.size();
  const std::size_t p = profile.size();
  std::vector<int> cells(n * p, 1);
  for (std::size_t l = 0; l < p; ++l) {
    if (assign[l] < 0) continue;
    const auto c = static_cast<std::size_t>(assign[l]);
    for (std::size_t i = 0; i < n; ++i) cells[i * p + l] = (a.cells[i * width + c] - 1) % profile[l] + 1;
  }
  return Design(p, std::move(cells), Provenance::catalog_oa);
}

std::optional<std::size_t> product_within(const std::vector<int>& profile, std::size_t cap) {
  std::size_t prod = 1;
  for (int n : profile) {
    if (prod > cap / static_cast<std::size_t>(n)) return std::nullopt;
    prod *= static_cast<std::size_t>(n);
  }
  return prod;
}

Design full_factorial(const std::vector<int>& profile) {
  auto space = FactorSpace::from_profile(profile);
  std::vector<int> cells;
  for_each_setting(space, [&](const Setting& s) { cells.insert(cells.end(), s.begin(), s.end()); });
  return Design(profile.size(), std::move(cells), Provenance::catalog_oa);
}

std::size_t lcm_capped(std::span<const int> profile, std::size_t cap) {
  std::size_t l = 1;
  for (int n : profile) {
    l = std::lcm(l, static_cast<std::size_t>(n));
    if (l > cap) return cap + 1;
  }
  return l;
}

// Strength-1 array: column l cycles through its levels.
Design cyclic_array(const std::vector<int>& profile) {
  const std::size_t n = std::max<std::size_t>(1, lcm_capped(profile, 1u << 20));
  require(n <= (1u << 20), Errc::capacity, "level counts have no small common multiple");
  const std::size_t p = profile.size();
  std::vector<int> cells(n * p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < p; ++l) cells[i * p + l] = static_cast<int>(i % static_cast<std::size_t>(profile[l])) + 1;
  return Design(p, std::move(cells), Provenance::catalog_oa);
}

void check_profile(const std::vector<int>& profile) {
  require(!profile.empty(), Errc::invalid_argument, "level profile is empty");
  for (int n : profile) require(n >= 1, Errc::invalid_argument, "level counts must be positive");
}

}  // namespace

Design smallest_oa(const OaRequest& request) {
  const auto& profile = request.level_profile;
  check_profile(profile);
  require(request.strength >= 1, Errc::invalid_argument, "strength must be at least 1");
  if (request.strength > 2) fail(Errc::unsupported_profile, "strength above 2 is not supported");
  if (request.strength == 1) return cyclic_array(profile);

  const std::size_t cap = request.max_runs.value_or(std::numeric_limits<std::size_t>::max());
  std::optional<Design> best;
  if (std::all_of(profile.begin(), profile.end(), [](int n) { return n == 1; }))
    best = Design(profile.size(), std::vector<int>(profile.size(), 1), Provenance::catalog_oa);
  for (const auto& a : oa_catalog()) {
    if (best || a.runs() > cap) break;
    best = fit_catalog_array(a, profile);
  }
  if (auto ff = product_within(profile, cap); ff && (!best || *ff < best->runs())) best = full_factorial(profile);
  if (best) return *best;

  if (!request.allow_fallback) fail(Errc::unsupported_profile, "no orthogonal array for profile " + format_profile(profile));
  std::size_t n = default_fallback_runs(profile);
  if (request.max_runs) n = std::min(n, *request.max_runs);
  require(n >= 1, Errc::invalid_argument, "max_runs must be positive");
  return balanced_random_design(profile, n, derive_seed(0x0a, lcm_capped(profile, 1u << 30), profile.size()));
}

std::size_t smallest_oa_runs(std::span<const int> profile) {
  OaRequest req;
  req.level_profile.assign(profile.begin(), profile.end());
  return smallest_oa(req).runs();
}

RandomizedDesign randomize_with_record(const Design& design, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = design.runs();
  const std::size_t p = design.factors();
  const auto levels = design.observed_levels();
  RandomizedDesign out;
  out.level_maps.resize(p);
  for (std::size_t l = 0; l < p; ++l) {
    auto& m = out.level_maps[l];
    m.resize(static_cast<std::size_t>(levels[l]));
    std::iota(m.begin(), m.end(), 1);
    std::shuffle(m.begin(), m.end(), rng);
  }
  out.row_order.resize(n);
  std::iota(out.row_order.begin(), out.row_order.end(), std::size_t{0});
  std::shuffle(out.row_order.begin(), out.row_order.end(), rng);
  std::vector<int> cells(n * p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < p; ++l)
      cells[i * p + l] = out.level_maps[l][static_cast<std::size_t>(design.at(out.row_order[i], l) - 1)];
  const auto prov = design.provenance() == Provenance::catalog_oa ? Provenance::permuted_oa : design.provenance();
  out.design = Design(p, std::move(cells), prov);
  return out;
}

Design randomize(const Design& design, std::uint64_t seed) { return randomize_with_record(design, seed).design; }

OaReport verify_oa(const Design& design, int strength, std::span<const int> levels) {
  require(strength == 1 || strength == 2, Errc::invalid_argument, "verification supports strength 1 or 2");
  const std::size_t n = design.runs();
  const std::size_t p = design.factors();
  std::vector<int> lv(levels.begin(), levels.end());
  if (lv.empty()) lv = design.observed_levels();
  require(lv.size() == p, Errc::dimension_mismatch, "level list does not match design width");

  double worst = 0.0;
  auto score = [&](const std::vector<std::size_t>& counts, double ideal) {
    for (auto c : counts) worst = std::max(worst, std::abs(static_cast<double>(c) - ideal));
  };
  for (std::size_t a = 0; a < p; ++a) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(lv[a]), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int v = design.at(i, a);
      if (v > lv[a]) return {false, static_cast<double>(n)};
      ++counts[static_cast<std::size_t>(v - 1)];
    }
    score(counts, static_cast<double>(n) / lv[a]);
  }
  if (strength == 2) {
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = a + 1; b < p; ++b) {
        std::vector<std::size_t> counts(static_cast<std::size_t>(lv[a] * lv[b]), 0);
        for (std::size_t i = 0; i < n; ++i)
          ++counts[static_cast<std::size_t>((design.at(i, a) - 1) * lv[b] + design.at(i, b) - 1)];
        score(counts, static_cast<double>(n) / (lv[a] * lv[b]));
      }
  }
  return {worst == 0.0, worst};
}

Design augment(const Design& design, Augmentation scheme, std::uint64_t seed) {
  if (scheme == Augmentation::none) return design;
  return stack(design, randomize(design, seed)).with_provenance(design.provenance());
}

std::size_t default_fallback_runs(std::span<const int> profile) {
  std::size_t floor_runs = 1;
  for (int n : profile) floor_runs += static_cast<std::size_t>(n - 1);
  // When level counts share no small multiple, near-balance at the floor is
  // the best available.
  const std::size_t l = lcm_capped(profile, 4 * floor_runs);
  if (l > 4 * floor_runs) return floor_runs;
  return (floor_runs + l - 1) / l * l;
}

Design balanced_random_design(std::span<const int> profile, std::size_t runs, std::uint64_t seed) {
  std::vector<int> prof(profile.begin(), profile.end());
  check_profile(prof);
  if (runs == 0) runs = default_fallback_runs(profile);
  Rng rng(seed);
  const std::size_t p = prof.size();
  std::vector<int> cells(runs * p);
  // Each column starts at a random offset so the floor/ceil surplus is not
  // always carried by the low levels.
  for (std::size_t l = 0; l < p; ++l) {
    const auto nl = static_cast<std::size_t>(prof[l]);
    const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, nl - 1)(rng);
    std::vector<int> col(runs);
    for (std::size_t i = 0; i < runs; ++i) col[i] = static_cast<int>((i + offset) % nl) + 1;
    std::shuffle(col.begin(), col.end(), rng);
    for (std::size_t i = 0; i < runs; ++i) cells[i * p + l] = col[i];
  }
  return Design(p, std::move(cells), Provenance::balanced_random);
}

std::vector<std::vector<int>> parse_array_text(std::string_view text) {
  std::vector<std::vector<int>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<int> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) fail(Errc::parse, "line " + std::to_string(lineno) + ": bad level '" + tok + "'");
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      fail(Errc::parse, "line " + std::to_string(lineno) + ": expected " + std::to_string(rows.front().size()) + " levels");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_array_text(const Design& design) {
  std::string out;
  for (std::size_t i = 0; i < design.runs(); ++i) {
    for (std::size_t l = 0; l < design.factors(); ++l) {
      if (l) out += ' ';
      out += std::to_string(design.at(i, l));
    }
    out += '\n';
  }
  return out;
}

}  // namespace atm
