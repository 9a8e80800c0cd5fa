#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "atm/error.hpp"
#include "atm/factor_space.hpp"
#include "atm/oa.hpp"
#include "support.hpp"

using namespace atm;

TEST_SUITE("factor_space") {

TEST_CASE("enumerate 2x2 in lexicographic order") {
  const auto all = enumerate(FactorSpace::uniform(2, 2));
  const std::vector<Setting> want{{1, 1}, {1, 2}, {2, 1}, {2, 2}};
  CHECK(all == want);
}

TEST_CASE("enumeration sizes 5^5 and 5^3") {
  CHECK(enumerate(FactorSpace::uniform(5, 5)).size() == 3125);
  CHECK(enumerate(FactorSpace::uniform(3, 5)).size() == 125);
}

TEST_CASE("enumeration visits each setting once and matches setting_rank") {
  const std::vector<int> prof{3, 2, 4};
  const auto all = enumerate(FactorSpace::from_profile(prof));
  REQUIRE(all.size() == 24);
  for (std::size_t k = 0; k < all.size(); ++k) CHECK(setting_rank(prof, all[k]) == k);
  CHECK(all == support::full_grid(prof));
}

TEST_CASE("capacity error above the cap") {
  const auto space = FactorSpace::uniform(4, 10);
  CHECK_THROWS_AS(enumerate(space, 9999), Error);
  try {
    enumerate(space, 9999);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::capacity);
  }
  CHECK(enumerate(space, 10000).size() == 10000);
}

TEST_CASE("cardinality overflow is reported") {
  CHECK_FALSE(FactorSpace::uniform(70, 9).cardinality().has_value());
  CHECK(FactorSpace::uniform(3, 5).cardinality().value() == 125);
}

TEST_CASE("space invariants") {
  CHECK_THROWS_AS(FactorSpace::uniform(2, 1), Error);
  FactorSpec bad{3, FactorKind::ordinal, {0.1, 0.2}, ""};
  CHECK_THROWS_AS(FactorSpace({bad}), Error);
  const auto s = FactorSpace::uniform(2, 3);
  const Setting ok{1, 3}, out{0, 2}, shortset{1};
  CHECK(s.contains(ok));
  CHECK_FALSE(s.contains(out));
  CHECK_THROWS_AS(s.check_setting(shortset), Error);
}

TEST_CASE("project_marginal examples") {
  const Design d = Design::from_rows({{1, 1}, {1, 2}, {2, 1}});
  const ObservationSet obs(d, {5, 7, 3});
  CHECK(project_marginal(obs, 0, 1).value() == std::vector<double>{5, 7});
  CHECK(project_marginal(obs, 1, 2).value() == std::vector<double>{7});
  CHECK_FALSE(project_marginal(obs, 1, 3).has_value());
}

TEST_CASE("12-run two-level array gives slices of 6") {
  OaRequest rq;
  rq.level_profile.assign(9, 2);
  const Design d = smallest_oa(rq);
  REQUIRE(d.runs() == 12);
  std::vector<double> y(d.runs());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i);
  const ObservationSet obs(d, y);
  for (std::size_t l = 0; l < 9; ++l)
    for (int v = 1; v <= 2; ++v) CHECK(project_marginal(obs, l, v)->size() == 6);
}

TEST_CASE("slices over levels partition the responses") {
  std::mt19937_64 g(3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Setting> rows;
    std::vector<double> y;
    for (int i = 0; i < 15; ++i) {
      rows.push_back({static_cast<int>(g() % 3) + 1, static_cast<int>(g() % 4) + 1});
      y.push_back(static_cast<double>(g() % 1000));
    }
    const ObservationSet obs(Design::from_rows(rows), y);
    for (std::size_t l = 0; l < 2; ++l) {
      std::vector<double> all;
      for (int v = 1; v <= 4; ++v)
        if (auto s = project_marginal(obs, l, v)) all.insert(all.end(), s->begin(), s->end());
      auto a = all, b = y;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("balanced design slices have n / N_l entries") {
  OaRequest rq;
  rq.level_profile = {3, 3, 3, 3};
  const Design d = randomize(smallest_oa(rq), 11);
  const ObservationSet obs(d, std::vector<double>(d.runs(), 1.0));
  for (std::size_t l = 0; l < 4; ++l)
    for (int v = 1; v <= 3; ++v) CHECK(project_marginal(obs, l, v)->size() == d.runs() / 3);
}

TEST_CASE("observations reject misaligned or non-finite responses") {
  const Design d = Design::from_rows({{1, 1}, {2, 2}});
  CHECK_THROWS_AS(ObservationSet(d, {1.0}), Error);
  CHECK_THROWS_AS(ObservationSet(d, {1.0, std::nan("")}), Error);
}

TEST_CASE("level csv round trip") {
  const Design d = Design::from_rows({{1, 2, 3}, {3, 2, 1}});
  const ObservationSet obs(d, {0.5, -1.25});
  std::stringstream ss;
  write_observations_csv(ss, obs);
  CHECK(ss.str().rfind("f1,f2,f3,y\n", 0) == 0);
  const auto t = read_level_csv(ss);
  CHECK(t.design.cells() == d.cells());
  REQUIRE(t.responses.has_value());
  CHECK(*t.responses == obs.responses());

  std::stringstream ds;
  write_design_csv(ds, d);
  const auto t2 = read_level_csv(ds);
  CHECK_FALSE(t2.responses.has_value());
  CHECK(t2.design.cells() == d.cells());
}

TEST_CASE("malformed csv is a parse error") {
  std::istringstream bad("f1,f2,y\n1,x,2\n");
  try {
    read_level_csv(bad);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse);
  }
}

TEST_CASE("json round trip") {
  FactorSpec a{3, FactorKind::nominal, {0.1, 0.5, 0.9}, "mm"};
  FactorSpec b{2, FactorKind::ordinal, {}, ""};
  const FactorSpace space({a, b});
  nlohmann::json j = space;
  CHECK(j.get<FactorSpace>() == space);

  const ObservationSet obs(Design::from_rows({{1, 2}, {3, 1}}, Provenance::permuted_oa), {1.5, 2.5}, 0.1);
  nlohmann::json jo = obs;
  const auto back = jo.get<ObservationSet>();
  CHECK(back.design() == obs.design());
  CHECK(back.responses() == obs.responses());
  CHECK(back.noise_sd() == obs.noise_sd());
}

TEST_CASE("profile parsing") {
  CHECK(parse_profile("4^9") == std::vector<int>(9, 4));
  CHECK(parse_profile("2^1 3^7") == std::vector<int>{2, 3, 3, 3, 3, 3, 3, 3});
  CHECK(parse_profile("6,3,6") == std::vector<int>{6, 3, 6});
  CHECK(format_profile(std::vector<int>{2, 3, 3}) == "2^1 3^2");
  CHECK_THROWS_AS(parse_profile("4^"), Error);
  CHECK_THROWS_AS(parse_profile(""), Error);
}

}
