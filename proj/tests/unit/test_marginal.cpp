#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "atm/error.hpp"
#include "atm/marginal.hpp"
#include "atm/oa.hpp"
#include "support.hpp"

using namespace atm;

namespace {

ObservationSet grid2x2(double a, double b, double c, double d) {
  return ObservationSet(Design::from_rows({{1, 1}, {1, 2}, {2, 1}, {2, 2}}), {a, b, c, d});
}

double value_at(const ObservationSet& obs, const Setting& x) {
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (obs.design().setting(i) == x) return obs.responses()[i];
  return std::nan("");
}

// Random OA data with integer responses so that affine maps stay exact.
ObservationSet random_obs(std::mt19937_64& g, std::vector<int>& prof) {
  const int p = 2 + static_cast<int>(g() % 5);
  prof.clear();
  for (int l = 0; l < p; ++l) prof.push_back(2 + static_cast<int>(g() % 4));
  OaRequest rq;
  rq.level_profile = prof;
  const Design d = randomize(smallest_oa(rq), g());
  std::vector<double> y;
  for (std::size_t i = 0; i < d.runs(); ++i) y.push_back(static_cast<double>(g() % 100000));
  return ObservationSet(d, y);
}

}  // namespace

TEST_SUITE("marginal") {

TEST_CASE("tail mean examples") {
  const std::vector<double> v{0.4, 0.1, 0.3, 0.2};
  CHECK(tail_mean(v, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(tail_mean(v, 0.0) == 0.1);
  CHECK(tail_mean(v, 0.5) == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("tail mean against sort-and-average") {
  std::mt19937_64 g(1);
  std::normal_distribution<double> N(0, 1);
  std::uniform_real_distribution<double> U(0, 1);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> v(1 + g() % 20);
    for (auto& x : v) x = N(g);
    const double a = U(g);
    std::size_t k = static_cast<std::size_t>(std::ceil(v.size() * a));
    // Values of m*a within rounding of an integer are skipped: the guard is deliberate.
    if (std::fabs(v.size() * a - std::round(v.size() * a)) < 1e-6) continue;
    k = std::max<std::size_t>(k, 1);
    CHECK(tail_mean(v, a) == doctest::Approx(support::sort_mean(v, k)).epsilon(1e-12));
  }
}

TEST_CASE("tail mean at exact multiples") {
  const std::vector<double> v{9, 1, 8, 2, 7, 3, 6, 4, 5, 0};
  CHECK(tail_mean(v, 0.3) == doctest::Approx(1.0));
  CHECK(tail_mean(v, 0.7) == doctest::Approx(3.0));
}

TEST_CASE("tail mean endpoint bounds and permutation invariance") {
  std::mt19937_64 g(2);
  std::normal_distribution<double> N(0, 1);
  std::uniform_real_distribution<double> U(0, 1);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> v(1 + g() % 30);
    for (auto& x : v) x = N(g);
    const double a = U(g);
    const double t = tail_mean(v, a);
    CHECK(tail_mean(v, 0.0) <= t + 1e-12);
    CHECK(t <= tail_mean(v, 1.0) + 1e-12);
    auto w = v;
    std::shuffle(w.begin(), w.end(), g);
    CHECK(tail_mean(w, a) == doctest::Approx(t).epsilon(1e-12));
  }
}

TEST_CASE("tail mean errors") {
  const std::vector<double> empty, withnan{1.0, std::nan("")}, ok{1.0};
  try {
    tail_mean(empty, 0.5);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_slice);
  }
  CHECK_THROWS_AS(tail_mean(withnan, 0.5), Error);
  CHECK_THROWS_AS(tail_mean(ok, 1.5), Error);
}

TEST_CASE("marginal profile on the 2x2 grid") {
  const auto obs = grid2x2(1, 2, 3, 4);
  const std::vector<double> ones{1, 1}, zeros{0, 0};
  auto m = marginal_profile(obs, ones);
  CHECK(*m.factors[0][0].stat == 1.5);
  CHECK(*m.factors[0][1].stat == 3.5);
  CHECK(*m.factors[1][0].stat == 2.0);
  CHECK(*m.factors[1][1].stat == 3.0);
  CHECK(m.factors[0][0].count == 2);
  m = marginal_profile(obs, zeros);
  CHECK(*m.factors[0][0].stat == 1.0);
  CHECK(*m.factors[0][1].stat == 3.0);
  CHECK(*m.factors[1][0].stat == 1.0);
  CHECK(*m.factors[1][1].stat == 2.0);
}

TEST_CASE("missing levels are marked, not imputed") {
  const ObservationSet obs(Design::from_rows({{1, 1}, {3, 2}}), {5, 1});
  const std::vector<double> ones{1, 1};
  const std::vector<int> lv{3, 2};
  const auto m = marginal_profile(obs, ones, lv);
  CHECK_FALSE(m.factors[0][1].stat.has_value());
  CHECK(m.factors[0][1].count == 0);
  CHECK(predict_atm(obs, ones, lv) == Setting{3, 2});
}

TEST_CASE("predictors on the MC-violating grid") {
  const auto obs = grid2x2(0, 7, 5, 1);
  const std::vector<double> ones{1, 1}, zeros{0, 0};
  const auto m = marginal_profile(obs, ones);
  CHECK(*m.factors[0][0].stat == 3.5);
  CHECK(*m.factors[0][1].stat == 3.0);
  CHECK(*m.factors[1][0].stat == 2.5);
  CHECK(*m.factors[1][1].stat == 4.0);
  const Setting am = predict_atm(obs, ones);
  CHECK(am == Setting{2, 1});
  CHECK(value_at(obs, am) == 5.0);
  const Setting mn = predict_atm(obs, zeros);
  CHECK(mn == Setting{1, 1});
  CHECK(value_at(obs, mn) == 0.0);
  CHECK(predict_am(obs) == am);
  CHECK(predict_pw(obs) == Setting{1, 1});
}

TEST_CASE("predict_am on the increasing grid") { CHECK(predict_am(grid2x2(1, 2, 3, 4)) == Setting{1, 1}); }

TEST_CASE("additive full 3x3 grid: AM finds the argmin") {
  std::mt19937_64 g(7);
  std::normal_distribution<double> N(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(3), b(3);
    for (auto& x : a) x = N(g);
    for (auto& x : b) x = N(g);
    std::vector<Setting> rows = support::full_grid({3, 3});
    std::vector<double> y;
    for (auto& r : rows) y.push_back(a[r[0] - 1] + b[r[1] - 1]);
    const ObservationSet obs(Design::from_rows(rows), y);
    const Setting x = predict_am(obs);
    CHECK(value_at(obs, x) == *std::min_element(y.begin(), y.end()));
  }
}

TEST_CASE("ties go to the lowest level") {
  const auto obs = grid2x2(1, 1, 1, 1);
  const std::vector<double> half{0.5, 0.5};
  CHECK(predict_atm(obs, half) == Setting{1, 1});
  CHECK(worst_levels(marginal_profile(obs, half)) == std::vector<int>{2, 2});
}

TEST_CASE("pw: single run, earliest tie, full grid") {
  const ObservationSet one(Design::from_rows({{2, 3}}), {4.0});
  CHECK(predict_pw(one) == Setting{2, 3});
  const ObservationSet tie(Design::from_rows({{2, 1}, {1, 1}, {1, 2}}), {0.0, 0.0, 1.0});
  CHECK(predict_pw(tie) == Setting{2, 1});
}

TEST_CASE("atm all-ones equals am on random data") {
  std::mt19937_64 g(11);
  std::vector<int> prof;
  for (int rep = 0; rep < 200; ++rep) {
    const auto obs = random_obs(g, prof);
    const std::vector<double> ones(prof.size(), 1.0);
    CHECK(predict_atm(obs, ones, prof) == predict_am(obs, prof));
  }
}

TEST_CASE("atm all-zeros keeps the minimal observation in every chosen level") {
  std::mt19937_64 g(12);
  std::vector<int> prof;
  for (int rep = 0; rep < 200; ++rep) {
    const auto obs = random_obs(g, prof);
    const std::vector<double> zeros(prof.size(), 0.0);
    const Setting x = predict_atm(obs, zeros, prof);
    const auto& y = obs.responses();
    const double ymin = *std::min_element(y.begin(), y.end());
    for (std::size_t l = 0; l < prof.size(); ++l) {
      const auto s = project_marginal(obs, l, x[l]);
      CHECK(*std::min_element(s->begin(), s->end()) == ymin);
    }
    // With a unique minimum the prediction is the PW winner.
    if (std::count(y.begin(), y.end(), ymin) == 1) CHECK(x == predict_pw(obs));
  }
}

TEST_CASE("predictions invariant under increasing affine maps") {
  std::mt19937_64 g(13);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<int> prof;
  for (int rep = 0; rep < 200; ++rep) {
    const auto obs = random_obs(g, prof);
    std::vector<double> y2;
    for (double v : obs.responses()) y2.push_back(4.0 * v + 1024.0);
    const ObservationSet obs2(obs.design(), y2);
    std::vector<double> a(prof.size());
    for (auto& x : a) x = U(g);
    CHECK(predict_atm(obs, a, prof) == predict_atm(obs2, a, prof));
    CHECK(predict_am(obs, prof) == predict_am(obs2, prof));
    CHECK(predict_pw(obs) == predict_pw(obs2));
  }
}

TEST_CASE("alpha validation") {
  const auto obs = grid2x2(1, 2, 3, 4);
  const std::vector<double> bad{0.5, 1.5}, shortv{0.5};
  CHECK_THROWS_AS(predict_atm(obs, bad), Error);
  CHECK_THROWS_AS(predict_atm(obs, shortv), Error);
}

TEST_CASE("profile csv") {
  const auto obs = grid2x2(1, 2, 3, 4);
  const std::vector<double> a{1, 0};
  std::ostringstream os;
  write_profile_csv(os, marginal_profile(obs, a));
  const std::string s = os.str();
  CHECK(s.rfind("factor,level,alpha,stat,count\n", 0) == 0);
  CHECK(s.find("1,1,1,1.5,2\n") != std::string::npos);
  CHECK(s.find("2,2,0,2,2\n") != std::string::npos);
}

}
