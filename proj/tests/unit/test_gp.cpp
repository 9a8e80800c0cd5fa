#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "atm/error.hpp"
#include "atm/gp.hpp"
#include "atm/oa.hpp"
#include "atm/rng.hpp"
#include "atm/testbed.hpp"
#include "support.hpp"

using namespace atm;

namespace {

ObservationSet observe(const Design& d, const auto& f) {
  std::vector<double> y;
  for (std::size_t i = 0; i < d.runs(); ++i) y.push_back(f(d.run(i)));
  return ObservationSet(d, y);
}

double bowl(std::span<const int> x) {
  double s = 0;
  for (std::size_t l = 0; l < x.size(); ++l) s += (x[l] - 2.5) * (x[l] - 2.5) * (1.0 + 0.5 * static_cast<double>(l));
  return s + 0.3 * x[0] * x[1];
}

Design oa_for(const std::vector<int>& prof, std::uint64_t seed) {
  OaRequest rq;
  rq.level_profile = prof;
  return randomize(smallest_oa(rq), seed);
}

GpConfig fixed_nugget(double g) {
  GpConfig c;
  c.estimate_nugget = false;
  c.nugget = g;
  return c;
}

}  // namespace

TEST_SUITE("gp") {

TEST_CASE("covariance examples") {
  const Design d = Design::from_rows({{1, 1}, {2, 3}, {3, 2}});
  const ObservationSet obs(d, {0.0, 1.0, 2.0});
  const auto ord = FactorSpace::uniform(2, 3);
  const auto m = gp_with_parameters(obs, ord, {0.7, 1.3}, 0.0, 2.5, 0.0);
  CHECK(covariance(m, Setting{2, 2}, Setting{2, 2}) == 2.5);
  CHECK(covariance(m, Setting{1, 3}, Setting{3, 1}) == doctest::Approx(2.5 * std::exp(-0.7 * 4 - 1.3 * 4)));
  const auto flat = gp_with_parameters(obs, ord, {0.0, 0.0}, 0.1, 2.5, 0.0);
  CHECK(covariance(flat, Setting{1, 3}, Setting{3, 1}) == 2.5);

  const ObservationSet one(Design::from_rows({{1}, {2}}), {0.0, 1.0});
  const auto nom = gp_with_parameters(one, FactorSpace::uniform(1, 3, FactorKind::nominal), {std::log(2.0)}, 0.0, 3.0, 0.0);
  CHECK(covariance(nom, Setting{1}, Setting{3}) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(covariance(nom, Setting{1}, Setting{2}) == covariance(nom, Setting{2}, Setting{3}));
}

TEST_CASE("mixed kinds combine in one exponent") {
  FactorSpace space = FactorSpace::uniform(2, 4);
  GpConfig cfg;
  cfg.kinds = {FactorKind::ordinal, FactorKind::nominal};
  const ObservationSet obs(Design::from_rows({{1, 1}, {4, 4}}), {0.0, 1.0});
  const auto m = gp_with_parameters(obs, space, {0.2, 0.9}, 0.0, 1.0, 0.0, cfg);
  CHECK(m.correlation(Setting{1, 1}, Setting{3, 4}) == doctest::Approx(std::exp(-0.2 * 4 - 0.9)));
  CHECK(m.correlation(Setting{1, 2}, Setting{1, 4}) == doctest::Approx(std::exp(-0.9)));
}

TEST_CASE("covariance is symmetric and positive semidefinite") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> U(0, 2);
  for (int rep = 0; rep < 20; ++rep) {
    const std::vector<int> prof{3, 4, 5, 2};
    const auto space = FactorSpace::from_profile(prof, rep % 2 ? FactorKind::nominal : FactorKind::ordinal);
    const ObservationSet obs(Design::from_rows({{1, 1, 1, 1}}), {0.0});
    std::vector<double> th(4);
    for (auto& t : th) t = U(g);
    const double s2 = 0.5 + U(g);
    const auto m = gp_with_parameters(obs, space, th, 0.0, s2, 0.0);
    std::vector<Setting> xs(50, Setting(4));
    for (auto& x : xs)
      for (std::size_t l = 0; l < 4; ++l) x[l] = 1 + static_cast<int>(g() % static_cast<unsigned>(prof[l]));
    Eigen::MatrixXd K(50, 50);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        K(i, j) = covariance(m, xs[i], xs[j]);
        CHECK(K(i, j) == covariance(m, xs[j], xs[i]));
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * s2);
  }
}

TEST_CASE("noiseless fit interpolates the training data") {
  // A smooth quadratic drives theta towards 0 and R towards singularity, where
  // the 1e-8 nugget alone moves the fit by more than 1e-6; see README.
  for (const auto& [name, p] : std::vector<std::pair<std::string, std::size_t>>{
           {"shubert", 2}, {"camel6", 2}, {"detpep10e", 3}, {"friedman", 5}}) {
    CAPTURE(name);
    const auto f = discretize_builtin(name, p, 5);
    const Design d = oa_for(std::vector<int>(p, 5), 1);
    const ObservationSet obs(d, f.evaluate(d));
    const auto m = fit_gp(obs, f.space(), fixed_nugget(1e-8), 4);
    const auto& y = obs.responses();
    const double range = *std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end());
    for (std::size_t i = 0; i < obs.size(); ++i)
      CHECK(std::fabs(posterior(m, obs.design().run(i)).mean - y[i]) <= 1e-6 * range);
    CHECK(m.sigma2 > 0.0);
  }
}

TEST_CASE("duplicated rows with different responses force a nugget") {
  std::vector<Setting> rows;
  std::vector<double> y;
  std::mt19937_64 g(2);
  std::normal_distribution<double> N(0, 1);
  for (const auto& x : support::full_grid({3, 3}))
    for (int r = 0; r < 2; ++r) {
      rows.push_back(x);
      y.push_back(bowl(x) + N(g));
    }
  const auto m = fit_gp(ObservationSet(Design::from_rows(rows), y), FactorSpace::uniform(2, 3), GpConfig{}, 1);
  CHECK(m.nugget_ratio > 1e-3);
}

TEST_CASE("predictions are affine equivariant") {
  const std::vector<int> prof{4, 4, 4};
  const auto space = FactorSpace::from_profile(prof);
  const Design d = stack(oa_for(prof, 1), oa_for(prof, 2));
  const auto obs = observe(d, bowl);
  std::vector<double> y2;
  for (double v : obs.responses()) y2.push_back(3.0 * v + 5.0);
  const auto a = fit_gp(obs, space, GpConfig{}, 9);
  const auto b = fit_gp(ObservationSet(d, y2), space, GpConfig{}, 9);
  for (std::size_t l = 0; l < 3; ++l) CHECK(a.theta[l] == doctest::Approx(b.theta[l]).epsilon(1e-6));
  for (const auto& x : support::full_grid(prof)) {
    const auto pa = posterior(a, x), pb = posterior(b, x);
    CHECK(pb.mean == doctest::Approx(3.0 * pa.mean + 5.0).epsilon(1e-6));
    CHECK(pb.sd == doctest::Approx(3.0 * pa.sd).epsilon(1e-5));
  }
}

TEST_CASE("constant responses give a flagged model") {
  const Design d = oa_for({3, 3, 3}, 1);
  const auto m = fit_gp(ObservationSet(d, std::vector<double>(d.runs(), 7.0)), FactorSpace::uniform(3, 3), GpConfig{}, 1);
  CHECK(m.degenerate);
  CHECK(posterior(m, Setting{2, 2, 2}).mean == doctest::Approx(7.0));
  CHECK_THROWS_AS(fit_gp(ObservationSet(Design::from_rows({{1}, {2}}), {1, 2}), FactorSpace::uniform(1, 2), GpConfig{}, 1), Error);
}

TEST_CASE("posterior at a training point without nugget") {
  const Design d = Design::from_rows({{1, 1}, {2, 3}, {3, 2}});
  const ObservationSet obs(d, {4.0, 1.0, 2.0});
  const auto m = gp_with_parameters(obs, FactorSpace::uniform(2, 3), {0.5, 0.5}, 0.0, 1.0, 2.0);
  const auto p = posterior(m, Setting{2, 3});
  CHECK(p.mean == 1.0);
  CHECK(p.sd <= 1e-8);
  CHECK(expected_improvement(m, Setting{2, 3}, 1.0) <= 1e-10);
}

TEST_CASE("prior reversion far from the data") {
  const auto space = FactorSpace::uniform(3, 3, FactorKind::nominal);
  const ObservationSet obs(Design::from_rows({{1, 1, 1}, {2, 2, 2}}), {0.0, 3.0});
  const auto m = gp_with_parameters(obs, space, {1e3, 1e3, 1e3}, 0.0, 2.0, 1.25);
  const auto p = posterior(m, Setting{3, 3, 3});
  CHECK(p.mean == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(p.sd * p.sd == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("two-point conditioning matches the hand-solved oracle") {
  const ObservationSet obs(Design::from_rows({{1}, {3}}), {2.0, -1.0});
  const double th = 0.3, s2 = 1.7, mu = 0.4;
  const auto m = gp_with_parameters(obs, FactorSpace::uniform(1, 4), {th}, 0.0, s2, mu);
  for (int x = 1; x <= 4; ++x) {
    if (x == 1 || x == 3) continue;
    const double r1 = std::exp(-th * (x - 1) * (x - 1)), r2 = std::exp(-th * (x - 3) * (x - 3));
    const double c = std::exp(-th * 4.0), det = 1.0 - c * c;
    const double e1 = 2.0 - mu, e2 = -1.0 - mu;
    // (R^-1) = [[1, -c], [-c, 1]] / det
    const double w1 = (e1 - c * e2) / det, w2 = (e2 - c * e1) / det;
    const double mean = mu + r1 * w1 + r2 * w2;
    const double quad = (r1 * r1 + r2 * r2 - 2.0 * c * r1 * r2) / det;
    const auto p = posterior(m, Setting{x});
    CHECK(std::fabs(p.mean - mean) <= 1e-10);
    CHECK(std::fabs(p.sd - std::sqrt(s2 * (1.0 - quad))) <= 1e-10);
  }
}

TEST_CASE("expected improvement closed form") {
  CHECK(expected_improvement(3.0, 0.0, 3.0) == 0.0);
  CHECK(expected_improvement(2.0, 0.0, 3.0) == 1.0);
  CHECK(expected_improvement(4.0, 0.0, 3.0) == 0.0);
  CHECK(expected_improvement(3.0, 1.0, 3.0) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  // (best - mu) Phi(z) + s phi(z) at best - mu = 1, s = 2
  const double z = 0.5;
  const double ref = 1.0 * 0.5 * std::erfc(-z / std::sqrt(2.0)) + 2.0 * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  CHECK(expected_improvement(2.0, 2.0, 3.0) == doctest::Approx(ref).epsilon(1e-14));
  std::mt19937_64 g(4);
  std::normal_distribution<double> N(0, 10);
  for (int i = 0; i < 1000; ++i) CHECK(expected_improvement(N(g), std::fabs(N(g)), N(g)) >= 0.0);
  CHECK(expected_improvement(-50.0, 1e-3, 0.0) == doctest::Approx(50.0));
  CHECK(expected_improvement(50.0, 1.0, 0.0) >= 0.0);
}

TEST_CASE("likelihood at the optimum beats every start") {
  const std::vector<int> prof{4, 4, 4};
  const auto space = FactorSpace::from_profile(prof);
  std::mt19937_64 g(6);
  std::normal_distribution<double> N(0, 0.3);
  const Design d = stack(oa_for(prof, 3), oa_for(prof, 4));
  const auto obs = observe(d, [&](std::span<const int> x) { return bowl(x) + N(g); });
  const GpConfig cfg;
  const std::uint64_t seed = 12;
  const auto m = fit_gp(obs, space, cfg, seed);
  CHECK(m.loglik == doctest::Approx(gp_profile_loglik(obs, space, m.theta, m.nugget_ratio)).epsilon(1e-9));
  // Reproduce the start points drawn by the fitter.
  Rng rng(seed);
  std::uniform_real_distribution<double> ut(std::log(1e-3), std::log(10.0));
  std::uniform_real_distribution<double> ug(std::log(1e-6), std::log(1e-1));
  for (int s = 0; s < cfg.starts; ++s) {
    std::vector<double> th(3);
    for (auto& t : th) t = std::exp(ut(rng));
    const double nug = std::exp(ug(rng));
    CHECK(m.loglik >= gp_profile_loglik(obs, space, th, nug) - 1e-9);
  }
  CHECK(fit_gp(obs, space, cfg, seed).theta == m.theta);
}

TEST_CASE("batch selection") {
  const std::vector<int> prof{5, 5, 5};
  const auto space = FactorSpace::from_profile(prof);
  const auto obs = observe(oa_for(prof, 2), bowl);
  const auto m = fit_gp(obs, space, GpConfig{}, 3);
  const auto& y = obs.responses();
  const double best = *std::min_element(y.begin(), y.end());
  const std::set<Setting> seen(m.train_x.begin(), m.train_x.end());

  const auto one = select_batch(m, space, 1, 5);
  REQUIRE(one.settings.size() == 1);
  CHECK(one.candidates == 125 - seen.size());
  const double top = expected_improvement(m, one.settings[0], best);
  for (const auto& x : support::full_grid(prof))
    if (!seen.count(x)) CHECK(expected_improvement(m, x, best) <= top + 1e-12);

  const auto four = select_batch(m, space, 4, 5);
  CHECK(four.settings.size() == 4);
  CHECK(four.settings[0] == one.settings[0]);
  CHECK(std::set<Setting>(four.settings.begin(), four.settings.end()).size() == 4);
  for (const auto& x : four.settings) CHECK_FALSE(seen.count(x));

  const auto sampled = select_batch(m, space, 4, 5, 100000, true);
  CHECK(sampled.settings == four.settings);
}

TEST_CASE("exhausted candidates give a short, flagged batch") {
  const ObservationSet obs(Design::from_rows({{1, 1}, {1, 2}, {2, 1}}), {1.0, 2.0, 3.0});
  const auto space = FactorSpace::uniform(2, 2);
  const auto m = gp_with_parameters(obs, space, {0.5, 0.5}, 1e-6, 1.0, 2.0);
  const auto b = select_batch(m, space, 3, 1);
  CHECK(b.settings == std::vector<Setting>{{2, 2}});
  CHECK(b.exhausted);
}

TEST_CASE("hyperparameter csv") {
  const ObservationSet obs(Design::from_rows({{1, 1}, {2, 2}}), {0.0, 1.0});
  const auto m = gp_with_parameters(obs, FactorSpace::uniform(2, 2), {0.5, 2.0}, 0.01, 1.5, 0.0);
  std::ostringstream os;
  write_gp_csv(os, m);
  const auto s = os.str();
  CHECK(s.rfind("theta_1,theta_2,sigma2,nugget,loglik\n0.5,2,1.5,", 0) == 0);
  std::istringstream row(s.substr(s.find('\n') + 1));
  std::vector<double> v;
  for (std::string cell; std::getline(row, cell, ',');) v.push_back(std::stod(cell));
  REQUIRE(v.size() == 5);
  CHECK(v[3] == m.nugget());
  CHECK(v[4] == m.loglik);
}

}
