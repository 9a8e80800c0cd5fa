#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "atm/factor_space.hpp"
#include "atm/rng.hpp"

namespace atm {

struct ContinuousObjective {
  std::string name;
  std::vector<double> lo, hi;
  std::function<double(std::span<const double>)> f;

  std::size_t dims() const { return lo.size(); }
};

// friedman (p = 5), detpep10 (p = 3), detpep10e (p % 3 == 0),
// camel6 (p even), shubert (any p >= 1).
ContinuousObjective builtin(const std::string& name, std::size_t p);
std::vector<std::string> builtin_names();

// lo + (j - 0.5) (hi - lo) / n for j = 1..n
std::vector<double> mid_levels(double lo, double hi, int n);

// A black box over level indices. evaluate() is the budgeted call (counted,
// noisy when noise_sd > 0); evaluate_noiseless() is for scoring and oracles.
class DiscretizedObjective {
 public:
  using Evaluator = std::function<double(std::span<const int>)>;

  DiscretizedObjective(std::string name, FactorSpace space, Evaluator noiseless, double noise_sd = 0.0,
                       std::uint64_t noise_seed = 0);
  DiscretizedObjective(const DiscretizedObjective& other);
  DiscretizedObjective& operator=(const DiscretizedObjective& other);
  DiscretizedObjective(DiscretizedObjective&&) noexcept = default;
  DiscretizedObjective& operator=(DiscretizedObjective&&) noexcept = default;

  const std::string& name() const { return name_; }
  const FactorSpace& space() const { return space_; }
  double noise_sd() const { return noise_sd_; }
  std::uint64_t eval_count() const { return state_->counter.load(); }
  void reset_counter() { state_->counter.store(0); }

  double evaluate(std::span<const int> x) const;
  std::vector<double> evaluate(const Design& design) const;
  double evaluate_noiseless(std::span<const int> x) const;

  // Same black box with fresh noise stream and counter.
  DiscretizedObjective with_noise(double sd, std::uint64_t seed) const;

 private:
  struct State {
    std::atomic<std::uint64_t> counter{0};
    std::mutex mu;
    Rng rng;
  };

  std::string name_;
  FactorSpace space_;
  std::shared_ptr<const Evaluator> eval_;
  double noise_sd_ = 0.0;
  std::uint64_t noise_seed_ = 0;
  std::unique_ptr<State> state_;
};

DiscretizedObjective discretize(const ContinuousObjective& f, std::span<const int> levels);
DiscretizedObjective discretize_builtin(const std::string& name, std::size_t p, int levels);
DiscretizedObjective add_noise(const DiscretizedObjective& obj, double sd, std::uint64_t seed);

enum class ProbeScheme { corners, axial };

// f(x) = max over probe offsets t of |C(v(x) + t) - target|, v(x) the physical
// values of the setting and t_l in {-tol_l * range_l, 0, +tol_l * range_l}.
DiscretizedObjective robust_wrap(std::string name, const FactorSpace& space,
                                 std::function<double(std::span<const double>)> inner, double target,
                                 std::vector<double> tolerance, ProbeScheme scheme);

struct OracleResult {
  Setting argmin;
  double min = 0.0;
  std::vector<double> table;  // lexicographic order; empty unless requested
};
OracleResult brute_force(const DiscretizedObjective& obj, bool keep_table = false,
                         std::uint64_t cap = kDefaultEnumerationCap);

struct McWitness {
  std::size_t factor = 0;
  Setting slice;     // a setting carrying x_-l (factor l set to the AM level)
  int level = 0;     // level beating the AM level on this slice
  double gap = 0.0;  // f(AM level) - f(level) > 0
};
struct McReport {
  bool holds = true;
  Setting am_argmin;
  std::size_t violations = 0;
  std::vector<McWitness> witnesses;  // first max_witnesses violations
};
McReport check_mc(const FactorSpace& space, const std::vector<double>& table, std::size_t max_witnesses = 100);

// f1..fp,y for every setting
void write_table_csv(std::ostream& out, const FactorSpace& space, const std::vector<double>& table);

}  // namespace atm
