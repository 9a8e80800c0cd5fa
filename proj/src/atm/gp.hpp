#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "atm/factor_space.hpp"

namespace atm {

struct GpConfig {
  bool estimate_nugget = true;
  double nugget = 1e-8;  // nugget-to-variance ratio when not estimated
  int starts = 10;
  int iterations = 500;
  double theta_lo = 1e-6, theta_hi = 1e3;
  double nugget_lo = 1e-8, nugget_hi = 10.0;
  // Ordinal distances on physical level values instead of level indices.
  bool physical_ordinal = false;
  // Per-factor kinds override; empty means the space's kinds.
  std::vector<FactorKind> kinds;
};

// Gaussian process with constant mean and separable correlation
//   exp(-sum_l theta_l d_l(x1, x2)),
// d_l the squared coordinate difference for ordinal factors and a mismatch
// indicator for nominal ones. The nugget is stored as a ratio g to the process
// variance, so the training covariance is sigma2 * (R + g I).
struct GpModel {
  std::vector<FactorKind> kinds;
  std::vector<std::vector<double>> coords;  // ordinal coordinate per level
  std::vector<double> theta;
  double nugget_ratio = 0.0;
  double sigma2 = 1.0;  // in response units
  double mean = 0.0;    // in response units
  double loglik = 0.0;
  double jitter = 0.0;  // diagonal jitter needed for the factorization
  bool degenerate = false;

  std::vector<Setting> train_x;
  std::vector<double> train_y;
  Eigen::MatrixXd chol;    // lower factor of R + (g + jitter) I
  Eigen::VectorXd weights; // (R + g I)^-1 (y - mean)

  double nugget() const { return nugget_ratio * sigma2; }
  double correlation(std::span<const int> a, std::span<const int> b) const;
};

GpModel fit_gp(const ObservationSet& obs, const FactorSpace& space, const GpConfig& cfg, std::uint64_t seed);

// Builds a model at fixed hyperparameters (sigma2 and mean as given).
GpModel gp_with_parameters(const ObservationSet& obs, const FactorSpace& space, std::vector<double> theta, double nugget_ratio,
                           double sigma2, double mean, const GpConfig& cfg = {});

// Profile log-likelihood at (theta, g) after internal standardization of y.
double gp_profile_loglik(const ObservationSet& obs, const FactorSpace& space, std::span<const double> theta, double nugget_ratio,
                         const GpConfig& cfg = {});

double covariance(const GpModel& model, std::span<const int> a, std::span<const int> b);

struct Posterior {
  double mean = 0.0;
  double sd = 0.0;
};
Posterior posterior(const GpModel& model, std::span<const int> x);

double expected_improvement(double mu, double sd, double best);
double expected_improvement(const GpModel& model, std::span<const int> x, double best);

struct BatchSelection {
  std::vector<Setting> settings;
  bool exhausted = false;  // fewer than q candidates were available
  std::size_t candidates = 0;
};

// Greedy constant-liar batch: repeatedly take the EI maximizer among
// unvisited candidates and condition on it at the incumbent value.
// Candidates are the whole space when it fits under `cap`, otherwise `cap`
// distinct uniform draws; either way in lexicographic order.
BatchSelection select_batch(const GpModel& model, const FactorSpace& space, std::size_t q, std::uint64_t seed,
                            std::size_t cap = 100000, bool force_sampling = false);

// theta_1..theta_p,sigma2,nugget,loglik
void write_gp_csv(std::ostream& out, const GpModel& model);

}  // namespace atm
