#include "atm/gp.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <set>

#include "atm/error.hpp"
#include "atm/rng.hpp"

namespace atm {

namespace {

Eigen::VectorXd chol_solve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b) {
  const Eigen::VectorXd z = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(z);
}

std::vector<std::vector<double>> level_coords(const FactorSpace& space, bool physical) {
  std::vector<std::vector<double>> c(space.size());
  for (std::size_t l = 0; l < space.size(); ++l) {
    const auto& f = space.factor(l);
    c[l].resize(static_cast<std::size_t>(f.num_levels));
    for (int j = 0; j < f.num_levels; ++j)
      c[l][j] = physical && !f.physical_values.empty() ? f.physical_values[j] : static_cast<double>(j + 1);
  }
  return c;
}

// exp(-theta_l d_l(a, b)) for every level pair of every factor.
struct KernelTables {
  std::vector<int> levels;
  std::vector<std::vector<double>> t;

  KernelTables(const std::vector<FactorKind>& kinds, const std::vector<std::vector<double>>& coords, std::span<const double> theta) {
    const std::size_t p = kinds.size();
    t.resize(p);
    for (std::size_t l = 0; l < p; ++l) {
      const int n = static_cast<int>(coords[l].size());
      levels.push_back(n);
      t[l].resize(static_cast<std::size_t>(n * n));
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double d = 0.0;
          if (kinds[l] == FactorKind::ordinal) {
            const double diff = coords[l][a] - coords[l][b];
            d = diff * diff;
          } else {
            d = a == b ? 0.0 : 1.0;
          }
          t[l][a * n + b] = std::exp(-theta[l] * d);
        }
    }
  }

  double operator()(std::span<const int> x, std::span<const int> z) const {
    double r = 1.0;
    for (std::size_t l = 0; l < t.size(); ++l) r *= t[l][(x[l] - 1) * levels[l] + z[l] - 1];
    return r;
  }
};

Eigen::MatrixXd gram(const KernelTables& k, const std::vector<Setting>& x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) r(i, j) = r(j, i) = k(x[i], x[j]);
  }
  return r;
}

// Cholesky of r + g I, escalating diagonal jitter on failure.
std::optional<std::pair<Eigen::MatrixXd, double>> factor(const Eigen::MatrixXd& r, double g) {
  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd a = r;
    a.diagonal().array() += g + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
      return std::make_pair(Eigen::MatrixXd(llt.matrixL()), jitter);
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
    if (jitter > 1e-4 * 1.0000001) return std::nullopt;
  }
}

struct Standardized {
  Eigen::VectorXd y;
  double shift = 0.0, scale = 1.0;
  bool constant = false;
};

Standardized standardize(const std::vector<double>& y) {
  Standardized s;
  const auto n = static_cast<Eigen::Index>(y.size());
  s.y.resize(n);
  double m = 0.0;
  for (double v : y) m += v;
  m /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  s.shift = m;
  s.constant = sd <= 1e-12 * std::max(1.0, std::abs(m));
  s.scale = s.constant ? 1.0 : sd;
  for (Eigen::Index i = 0; i < n; ++i) s.y(i) = (y[i] - m) / s.scale;
  return s;
}

struct ProfileFit {
  double loglik = -std::numeric_limits<double>::infinity();
  double mu = 0.0, sigma2 = 0.0, jitter = 0.0;
  Eigen::MatrixXd chol;
};

ProfileFit profile(const KernelTables& k, const std::vector<Setting>& x, const Eigen::VectorXd& y, double g) {
  ProfileFit out;
  auto f = factor(gram(k, x), g);
  if (!f) return out;
  out.chol = std::move(f->first);
  out.jitter = f->second;
  const auto n = y.size();
  const auto L = out.chol.triangularView<Eigen::Lower>();
  const Eigen::VectorXd ly = L.solve(y);
  const Eigen::VectorXd l1 = L.solve(Eigen::VectorXd::Ones(n));
  out.mu = l1.dot(ly) / l1.squaredNorm();
  const Eigen::VectorXd res = ly - out.mu * l1;
  out.sigma2 = std::max(res.squaredNorm() / static_cast<double>(n), 1e-300);
  const double logdet = 2.0 * out.chol.diagonal().array().log().sum();
  out.loglik = -0.5 * (static_cast<double>(n) * std::log(out.sigma2) + logdet +
                       static_cast<double>(n) * (1.0 + std::log(2.0 * std::numbers::pi)));
  return out;
}

struct Objective {
  const std::vector<FactorKind>* kinds;
  const std::vector<std::vector<double>>* coords;
  const std::vector<Setting>* x;
  const Eigen::VectorXd* y;
  const GpConfig* cfg;

  std::size_t p() const { return kinds->size(); }

  // Maps optimizer coordinates to clamped (theta, g).
  std::pair<std::vector<double>, double> params(const gsl_vector* v) const {
    std::vector<double> th(p());
    for (std::size_t l = 0; l < p(); ++l)
      th[l] = std::clamp(std::exp(gsl_vector_get(v, l)), cfg->theta_lo, cfg->theta_hi);
    double g = cfg->nugget;
    if (cfg->estimate_nugget) g = std::clamp(std::exp(gsl_vector_get(v, p())), cfg->nugget_lo, cfg->nugget_hi);
    return {th, g};
  }

  double value(const gsl_vector* v) const {
    auto [th, g] = params(v);
    const auto pf = profile(KernelTables(*kinds, *coords, th), *x, *y, g);
    return std::isfinite(pf.loglik) ? -pf.loglik : 1e100;
  }
};

double nm_objective(const gsl_vector* v, void* data) { return static_cast<const Objective*>(data)->value(v); }

GpModel assemble(const ObservationSet& obs, std::vector<FactorKind> kinds, std::vector<std::vector<double>> coords,
                 std::vector<double> theta, double g, const Standardized& st, const ProfileFit& pf) {
  GpModel m;
  m.kinds = std::move(kinds);
  m.coords = std::move(coords);
  m.theta = std::move(theta);
  m.nugget_ratio = g;
  m.jitter = pf.jitter;
  m.degenerate = st.constant;
  m.mean = st.shift + st.scale * pf.mu;
  m.sigma2 = st.constant ? 1e-12 : pf.sigma2 * st.scale * st.scale;
  m.loglik = pf.loglik - static_cast<double>(obs.size()) * std::log(st.scale);
  for (std::size_t i = 0; i < obs.size(); ++i) m.train_x.push_back(obs.design().setting(i));
  m.train_y = obs.responses();
  m.chol = pf.chol;
  Eigen::VectorXd r(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) r(static_cast<Eigen::Index>(i)) = m.train_y[i] - m.mean;
  m.weights = chol_solve(m.chol, r);
  return m;
}

void check_inputs(const ObservationSet& obs, const FactorSpace& space) {
  require(obs.size() >= 1, Errc::invalid_argument, "GP needs observations");
  require(obs.factors() == space.size(), Errc::dimension_mismatch, "observations do not match the space");
  obs.design().validate(space);
}

std::vector<FactorKind> resolve_kinds(const FactorSpace& space, const GpConfig& cfg) {
  if (cfg.kinds.empty()) return space.kinds();
  require(cfg.kinds.size() == space.size(), Errc::dimension_mismatch, "kind list does not match the space");
  return cfg.kinds;
}

}  // namespace

double GpModel::correlation(std::span<const int> a, std::span<const int> b) const {
  require(a.size() == theta.size() && b.size() == theta.size(), Errc::dimension_mismatch, "setting width does not match model");
  double s = 0.0;
  for (std::size_t l = 0; l < theta.size(); ++l) {
    double d;
    if (kinds[l] == FactorKind::ordinal) {
      const double diff = coords[l][a[l] - 1] - coords[l][b[l] - 1];
      d = diff * diff;
    } else {
      d = a[l] == b[l] ? 0.0 : 1.0;
    }
    s += theta[l] * d;
  }
  return std::exp(-s);
}

double gp_profile_loglik(const ObservationSet& obs, const FactorSpace& space, std::span<const double> theta, double g,
                         const GpConfig& cfg) {
  check_inputs(obs, space);
  const auto kinds = resolve_kinds(space, cfg);
  const auto coords = level_coords(space, cfg.physical_ordinal);
  std::vector<Setting> x;
  for (std::size_t i = 0; i < obs.size(); ++i) x.push_back(obs.design().setting(i));
  const auto st = standardize(obs.responses());
  return profile(KernelTables(kinds, coords, theta), x, st.y, g).loglik - static_cast<double>(obs.size()) * std::log(st.scale);
}

GpModel fit_gp(const ObservationSet& obs, const FactorSpace& space, const GpConfig& cfg, std::uint64_t seed) {
  check_inputs(obs, space);
  require(obs.size() >= 3, Errc::invalid_argument, "GP fit needs at least 3 observations");
  const auto kinds = resolve_kinds(space, cfg);
  const auto coords = level_coords(space, cfg.physical_ordinal);
  std::vector<Setting> x;
  for (std::size_t i = 0; i < obs.size(); ++i) x.push_back(obs.design().setting(i));
  const auto st = standardize(obs.responses());
  const std::size_t p = space.size();

  if (st.constant) {
    std::vector<double> th(p, 1.0);
    const double g = cfg.estimate_nugget ? cfg.nugget_lo : cfg.nugget;
    auto pf = profile(KernelTables(kinds, coords, th), x, st.y, g);
    require(pf.chol.size() > 0, Errc::numerical, "covariance factorization failed");
    pf.mu = 0.0;
    return assemble(obs, kinds, coords, th, g, st, pf);
  }

  Objective obj{&kinds, &coords, &x, &st.y, &cfg};
  const std::size_t dim = p + (cfg.estimate_nugget ? 1 : 0);
  Rng rng(seed);
  std::uniform_real_distribution<double> ut(std::log(1e-3), std::log(10.0));
  std::uniform_real_distribution<double> ug(std::log(1e-6), std::log(1e-1));

  gsl_vector* start = gsl_vector_alloc(dim);
  gsl_vector* step = gsl_vector_alloc(dim);
  gsl_vector_set_all(step, 1.0);
  gsl_multimin_fminimizer* nm = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
  gsl_multimin_function fn{&nm_objective, dim, &obj};

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_v(dim, 0.0);
  for (int s = 0; s < cfg.starts; ++s) {
    for (std::size_t l = 0; l < p; ++l) gsl_vector_set(start, l, ut(rng));
    if (cfg.estimate_nugget) gsl_vector_set(start, p, ug(rng));
    gsl_multimin_fminimizer_set(nm, &fn, start, step);
    for (int it = 0; it < cfg.iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(nm) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(nm), 1e-6) == GSL_SUCCESS) break;
    }
    const double v = gsl_multimin_fminimizer_minimum(nm);
    if (v < best) {
      best = v;
      const gsl_vector* xm = gsl_multimin_fminimizer_x(nm);
      for (std::size_t d = 0; d < dim; ++d) best_v[d] = gsl_vector_get(xm, d);
    }
  }
  gsl_multimin_fminimizer_free(nm);
  gsl_vector_free(step);

  for (std::size_t d = 0; d < dim; ++d) gsl_vector_set(start, d, best_v[d]);
  auto [theta, g] = obj.params(start);
  gsl_vector_free(start);
  const auto pf = profile(KernelTables(kinds, coords, theta), x, st.y, g);
  require(std::isfinite(pf.loglik), Errc::numerical, "covariance factorization failed at every start");
  return assemble(obs, kinds, coords, theta, g, st, pf);
}

GpModel gp_with_parameters(const ObservationSet& obs, const FactorSpace& space, std::vector<double> theta, double g,
                           double sigma2, double mean, const GpConfig& cfg) {
  check_inputs(obs, space);
  require(theta.size() == space.size(), Errc::dimension_mismatch, "theta does not match the space");
  require(sigma2 > 0.0 && g >= 0.0, Errc::invalid_argument, "sigma2 must be positive and the nugget nonnegative");
  const auto kinds = resolve_kinds(space, cfg);
  const auto coords = level_coords(space, cfg.physical_ordinal);
  std::vector<Setting> x;
  for (std::size_t i = 0; i < obs.size(); ++i) x.push_back(obs.design().setting(i));
  auto f = factor(gram(KernelTables(kinds, coords, theta), x), g);
  require(f.has_value(), Errc::numerical, "covariance factorization failed even with jitter 1e-4");
  GpModel m;
  m.kinds = kinds;
  m.coords = coords;
  m.theta = std::move(theta);
  m.nugget_ratio = g;
  m.sigma2 = sigma2;
  m.mean = mean;
  m.jitter = f->second;
  m.train_x = std::move(x);
  m.train_y = obs.responses();
  m.chol = std::move(f->first);
  Eigen::VectorXd r(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) r(static_cast<Eigen::Index>(i)) = m.train_y[i] - mean;
  m.weights = chol_solve(m.chol, r);
  const double logdet = 2.0 * m.chol.diagonal().array().log().sum() + static_cast<double>(obs.size()) * std::log(sigma2);
  m.loglik = -0.5 * (r.dot(m.weights) / sigma2 + logdet +
                     static_cast<double>(obs.size()) * std::log(2.0 * std::numbers::pi));
  return m;
}

double covariance(const GpModel& model, std::span<const int> a, std::span<const int> b) {
  return model.sigma2 * model.correlation(a, b);
}

Posterior posterior(const GpModel& model, std::span<const int> x) {
  const auto n = static_cast<Eigen::Index>(model.train_x.size());
  if (model.nugget_ratio == 0.0) {
    // Exact conditioning: a training point is known without error.
    double sum = 0.0;
    int hits = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::equal(x.begin(), x.end(), model.train_x[i].begin())) {
        sum += model.train_y[i];
        ++hits;
      }
    if (hits) return {sum / hits, 0.0};
  }
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = model.correlation(x, model.train_x[i]);
  const Eigen::VectorXd v = model.chol.triangularView<Eigen::Lower>().solve(r);
  const double var = model.sigma2 * (1.0 - v.squaredNorm());
  return {model.mean + r.dot(model.weights), std::sqrt(std::max(var, 0.0))};
}

double expected_improvement(double mu, double sd, double best) {
  const double d = best - mu;
  if (!(sd > 0.0)) return std::max(d, 0.0);
  const double z = d / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return std::max(d * cdf + sd * pdf, 0.0);
}

double expected_improvement(const GpModel& model, std::span<const int> x, double best) {
  const auto post = posterior(model, x);
  return expected_improvement(post.mean, post.sd, best);
}

BatchSelection select_batch(const GpModel& model, const FactorSpace& space, std::size_t q, std::uint64_t seed,
                            std::size_t cap, bool force_sampling) {
  require(space.size() == model.theta.size(), Errc::dimension_mismatch, "space does not match model");
  require(!model.train_y.empty(), Errc::invalid_argument, "model has no training data");
  const std::set<Setting> visited(model.train_x.begin(), model.train_x.end());

  std::vector<Setting> cand;
  const auto card = space.cardinality();
  if (!force_sampling && card && *card <= cap) {
    for_each_setting(space, [&](const Setting& s) {
      if (!visited.count(s)) cand.push_back(s);
    }, cap);
  } else {
    std::set<Setting> pool;
    Rng rng(seed);
    const std::size_t target = card ? static_cast<std::size_t>(std::min<std::uint64_t>(*card, cap)) : cap;
    Setting s(space.size());
    for (std::size_t tries = 0; pool.size() < target && tries < 20 * cap; ++tries) {
      for (std::size_t l = 0; l < space.size(); ++l)
        s[l] = std::uniform_int_distribution<int>(1, space.levels(l))(rng);
      pool.insert(s);
    }
    for (const auto& c : pool)
      if (!visited.count(c)) cand.push_back(c);
  }

  BatchSelection out;
  out.candidates = cand.size();
  const std::size_t m = cand.size();
  const auto n = static_cast<Eigen::Index>(model.train_x.size());
  const KernelTables kt(model.kinds, model.coords, model.theta);

  // Whitened cross-correlations V = L^-1 r(train, candidates).
  Eigen::MatrixXd V(n, static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c)
    for (Eigen::Index i = 0; i < n; ++i) V(i, static_cast<Eigen::Index>(c)) = kt(cand[c], model.train_x[i]);
  std::vector<double> mu(m), var(m);
  for (std::size_t c = 0; c < m; ++c) mu[c] = model.mean + V.col(static_cast<Eigen::Index>(c)).dot(model.weights);
  model.chol.triangularView<Eigen::Lower>().solveInPlace(V);
  for (std::size_t c = 0; c < m; ++c)
    var[c] = std::max(model.sigma2 * (1.0 - V.col(static_cast<Eigen::Index>(c)).squaredNorm()), 0.0);

  const double best = *std::min_element(model.train_y.begin(), model.train_y.end());
  const double tau2 = model.nugget();
  std::vector<bool> taken(m, false);
  std::vector<std::vector<double>> basis;  // u_j over candidates
  for (std::size_t pick = 0; pick < q; ++pick) {
    std::size_t arg = m;
    double top = -1.0;
    for (std::size_t c = 0; c < m; ++c) {
      if (taken[c]) continue;
      const double ei = expected_improvement(mu[c], std::sqrt(var[c]), best);
      if (ei > top) {
        top = ei;
        arg = c;
      }
    }
    if (arg == m) {
      out.exhausted = true;
      break;
    }
    taken[arg] = true;
    out.settings.push_back(cand[arg]);
    if (pick + 1 == q) break;

    // Condition every candidate on the pick at the lie value.
    const double denom = var[arg] + tau2;
    if (denom <= 1e-14 * model.sigma2) continue;
    const Eigen::VectorXd rw = V.transpose() * V.col(static_cast<Eigen::Index>(arg));
    const double sd = std::sqrt(denom);
    const double shift = (best - mu[arg]) / sd;
    std::vector<double> u(m);
    for (std::size_t c = 0; c < m; ++c) {
      double cov = model.sigma2 * (kt(cand[c], cand[arg]) - rw(static_cast<Eigen::Index>(c)));
      for (const auto& b : basis) cov -= b[c] * b[arg];
      u[c] = cov / sd;
    }
    for (std::size_t c = 0; c < m; ++c) {
      mu[c] += u[c] * shift;
      var[c] = std::max(var[c] - u[c] * u[c], 0.0);
    }
    basis.push_back(std::move(u));
  }
  if (out.settings.size() < q) out.exhausted = true;
  return out;
}

void write_gp_csv(std::ostream& out, const GpModel& model) {
  for (std::size_t l = 0; l < model.theta.size(); ++l) out << "theta_" << l + 1 << ',';
  out << "sigma2,nugget,loglik\n" << std::setprecision(17);
  for (double t : model.theta) out << t << ',';
  out << model.sigma2 << ',' << model.nugget() << ',' << model.loglik << '\n';
}

}  // namespace atm
