#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "atm/error.hpp"
#include "atm/heredity.hpp"
#include "atm/oa.hpp"
#include "support.hpp"

using namespace atm;

namespace {

struct Additive {
  std::vector<std::vector<double>> me;
  double operator()(std::span<const int> x) const {
    double s = 0;
    for (std::size_t l = 0; l < x.size(); ++l) s += me[l][static_cast<std::size_t>(x[l] - 1)];
    return s;
  }
};

Additive random_additive(std::mt19937_64& g, const std::vector<int>& prof) {
  std::normal_distribution<double> N(0, 1);
  Additive f;
  for (int n : prof) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = N(g);
    f.me.push_back(v);
  }
  return f;
}

ObservationSet observe(const Design& d, const auto& f) {
  std::vector<double> y;
  for (std::size_t i = 0; i < d.runs(); ++i) y.push_back(f(d.run(i)));
  return ObservationSet(d, y);
}

double main_mass(const SurrogateModel& m) {
  double s = 0;
  for (const auto& t : m.main_effects)
    for (double v : t) s += std::fabs(v);
  return s;
}

double inter_mass(const SurrogateModel& m) {
  double s = 0;
  for (const auto& [_, t] : m.interactions)
    for (double v : t) s += std::fabs(v);
  return s;
}

void check_sum_to_zero(const SurrogateModel& m) {
  for (const auto& t : m.main_effects) CHECK(std::fabs(std::accumulate(t.begin(), t.end(), 0.0)) < 1e-9);
  for (const auto& [pr, t] : m.interactions) {
    const int na = m.levels[pr.first], nb = m.levels[pr.second];
    for (int a = 0; a < na; ++a) {
      double r = 0;
      for (int b = 0; b < nb; ++b) r += t[a * nb + b];
      CHECK(std::fabs(r) < 1e-9);
    }
    for (int b = 0; b < nb; ++b) {
      double c = 0;
      for (int a = 0; a < na; ++a) c += t[a * nb + b];
      CHECK(std::fabs(c) < 1e-9);
    }
  }
}

}  // namespace

TEST_SUITE("heredity") {

TEST_CASE("additive data on the 32-run 4^9 array: interaction mass below 5%") {
  const std::vector<int> prof(9, 4);
  OaRequest rq;
  rq.level_profile = prof;
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::mt19937_64 g(100 + s);
    const auto f = random_additive(g, prof);
    const auto obs = observe(randomize(smallest_oa(rq), s), f);
    const auto m = fit_surrogate(obs, prof);
    CHECK(satisfies_weak_heredity(m));
    CHECK((m.interactions.empty() || inter_mass(m) < 0.05 * main_mass(m)));
    CHECK(interaction_strength(m) < 0.05);
  }
}

TEST_CASE("additive data at the smallest grid point stays additive") {
  const std::vector<int> prof(9, 4);
  OaRequest rq;
  rq.level_profile = prof;
  std::mt19937_64 g(5);
  const auto f = random_additive(g, prof);
  const auto obs = observe(randomize(smallest_oa(rq), 1), f);
  HeredityConfig cfg;
  cfg.lambda_fraction = 1e-4;
  const auto m = fit_surrogate(obs, prof, cfg);
  CHECK(interaction_strength(m) < 0.05);
}

TEST_CASE("x1*x2 on a replicated 2^2 factorial activates the pair") {
  std::vector<Setting> rows;
  for (int r = 0; r < 4; ++r)
    for (const auto& x : support::full_grid({2, 2})) rows.push_back(x);
  std::vector<double> y;
  for (const auto& x : rows) y.push_back(static_cast<double>(x[0] * x[1]));
  const auto m = fit_surrogate(ObservationSet(Design::from_rows(rows), y), std::vector<int>{2, 2});
  CHECK(m.interactions.count({0, 1}) == 1);
  CHECK(satisfies_weak_heredity(m));
}

TEST_CASE("constant response gives a flagged intercept-only model") {
  const Design d = Design::from_rows(support::full_grid({3, 3}));
  const auto m = fit_surrogate(ObservationSet(d, std::vector<double>(9, 2.5)), std::vector<int>{3, 3});
  CHECK(m.degenerate);
  CHECK(m.intercept == 2.5);
  CHECK(main_mass(m) == 0.0);
  CHECK(m.interactions.empty());
  CHECK(evaluate(m, Setting{2, 3}) == 2.5);
}

TEST_CASE("evaluate by definition") {
  SurrogateModel m;
  m.levels = {3, 2};
  m.intercept = 1.0;
  m.main_effects = {{-0.5, 0.75, -0.25}, {0.0, 0.0}};
  m.active_main = {0};
  CHECK(evaluate(m, Setting{2, 1}) == 1.75);
  m.interactions[{0, 1}] = {0.1, -0.1, 0.2, -0.2, -0.3, 0.3};
  CHECK(evaluate(m, Setting{3, 2}) == doctest::Approx(1.0 - 0.25 + 0.3));
  CHECK_THROWS_AS(evaluate(m, Setting{1}), Error);
  SurrogateModel empty;
  CHECK(interaction_strength(empty) == 0.0);
}

TEST_CASE("interaction strength with zero mains is large and finite") {
  SurrogateModel m;
  m.levels = {2, 2};
  m.main_effects = {{0, 0}, {0, 0}};
  m.interactions[{0, 1}] = {1, -1, -1, 1};
  const double s = interaction_strength(m);
  CHECK(std::isfinite(s));
  CHECK(s > 1e9);
}

TEST_CASE("held-out accuracy on additive data") {
  const std::vector<int> prof(5, 4);
  OaRequest rq;
  rq.level_profile = prof;
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::mt19937_64 g(200 + s);
    const auto f = random_additive(g, prof);
    const Design d = stack(randomize(smallest_oa(rq), 2 * s), randomize(smallest_oa(rq), 2 * s + 1));
    const auto m = fit_surrogate(observe(d, f), prof);
    double se = 0, var = 0, mean = 0;
    const auto all = support::full_grid(prof);
    for (const auto& x : all) mean += f(x) / static_cast<double>(all.size());
    for (const auto& x : all) {
      se += std::pow(evaluate(m, x) - f(x), 2);
      var += std::pow(f(x) - mean, 2);
    }
    CHECK(std::sqrt(se / var) < 0.1);
  }
}

TEST_CASE("invariants on random data") {
  std::mt19937_64 g(9);
  std::normal_distribution<double> N(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> prof;
    const int p = 3 + rep % 4;
    for (int l = 0; l < p; ++l) prof.push_back(2 + static_cast<int>(g() % 3));
    OaRequest rq;
    rq.level_profile = prof;
    const Design d = stack(randomize(smallest_oa(rq), g()), randomize(smallest_oa(rq), g()));
    std::vector<double> y(d.runs());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = N(g) + (d.at(i, 0) == d.at(i, 1) ? 2.0 : 0.0);
    const ObservationSet obs(d, y);
    const auto m = fit_surrogate(obs, prof);
    CHECK(satisfies_weak_heredity(m));
    check_sum_to_zero(m);

    // Row order does not matter.
    std::vector<std::size_t> perm(obs.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), g);
    const auto m2 = fit_surrogate(obs.subset(perm), prof);
    CHECK(m2.active_main == m.active_main);
    CHECK(m2.active_pairs == m.active_pairs);
    CHECK(m2.lambda_fraction == m.lambda_fraction);
    for (const auto& x : support::full_grid(prof)) CHECK(evaluate(m2, x) == doctest::Approx(evaluate(m, x)).epsilon(1e-6));
  }
}

TEST_CASE("huge lambda degenerates to intercept-only") {
  const std::vector<int> prof{3, 3, 3};
  std::mt19937_64 g(4);
  const auto f = random_additive(g, prof);
  const auto obs = observe(Design::from_rows(support::full_grid(prof)), f);
  HeredityConfig cfg;
  cfg.lambda_fraction = 1.0;
  const auto m = fit_surrogate(obs, prof, cfg);
  CHECK(m.active_main.empty());
  CHECK(m.interactions.empty());
  CHECK(main_mass(m) == 0.0);
  const double ybar = std::accumulate(obs.responses().begin(), obs.responses().end(), 0.0) / 27.0;
  CHECK(m.intercept == doctest::Approx(ybar));
}

TEST_CASE("in-sample residual vanishes at the smallest grid point") {
  // Main effects plus one interaction on a 3^3 full factorial: 27 runs, 19 parameters.
  const std::vector<int> prof{3, 3, 3};
  std::mt19937_64 g(6);
  std::normal_distribution<double> N(0, 1);
  const auto add = random_additive(g, prof);
  std::vector<double> inter(9);
  for (auto& v : inter) v = N(g);
  auto f = [&](std::span<const int> x) { return add(x) + inter[static_cast<std::size_t>((x[0] - 1) * 3 + x[1] - 1)]; };
  const auto obs = observe(Design::from_rows(support::full_grid(prof)), f);
  HeredityConfig cfg;
  cfg.lambda_fraction = 1e-4;
  const auto m = fit_surrogate(obs, prof, cfg);
  double rss = 0, tss = 0;
  const double ybar = std::accumulate(obs.responses().begin(), obs.responses().end(), 0.0) / 27.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    rss += std::pow(evaluate(m, obs.design().run(i)) - obs.responses()[i], 2);
    tss += std::pow(obs.responses()[i] - ybar, 2);
  }
  CHECK(std::sqrt(rss / tss) < 1e-2);
}

TEST_CASE("fit is deterministic and json round-trips") {
  const std::vector<int> prof{4, 4, 4};
  OaRequest rq;
  rq.level_profile = prof;
  std::mt19937_64 g(8);
  const auto f = random_additive(g, prof);
  const auto obs = observe(stack(randomize(smallest_oa(rq), 1), randomize(smallest_oa(rq), 2)), f);
  const auto a = fit_surrogate(obs, prof);
  const auto b = fit_surrogate(obs, prof);
  nlohmann::json ja = a, jb = b;
  CHECK(ja == jb);
  const auto back = ja.get<SurrogateModel>();
  for (const auto& x : support::full_grid(prof)) CHECK(evaluate(back, x) == evaluate(a, x));
  CHECK(back.active_main == a.active_main);
}

TEST_CASE("dimension errors") {
  const ObservationSet obs(Design::from_rows({{1, 2}, {2, 1}}), {1, 2});
  CHECK_THROWS_AS(fit_surrogate(obs, std::vector<int>{2}), Error);
  CHECK_THROWS_AS(fit_surrogate(obs, std::vector<int>{1, 2}), Error);
}

}
