#include "doctest.h"
#include "support.hpp"
#include "utc/controllers.hpp"

using namespace utc;

TEST_CASE("webster cycle") {
  // two phases sharing Y = 0.675, L = 10
  const std::vector<double> y{0.3, 0.375};
  auto r = webster_cycle(y, 10.0);
  // (1.5 * 10 + 5) / (1 - 0.675)
  const double c = 20.0 / 0.325;
  CHECK(std::abs(r.raw_cycle - c) <= 1e-9);
  CHECK(r.cycle == doctest::Approx(c));
  CHECK(r.greens[0] == doctest::Approx((c - 10.0) * 0.3 / 0.675));
  CHECK(r.greens[0] + r.greens[1] == doctest::Approx(c - 10.0));

  const std::vector<double> none{0.0, 0.0};
  auto z = webster_cycle(none, 8.0);
  CHECK(z.cycle == kWebsterMinCycle);
  CHECK(z.greens[0] == z.greens[1]);

  const std::vector<double> full{0.5, 0.5};
  try {
    webster_cycle(full, 10.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::oversaturated);
  }
}

TEST_CASE("webster plan stays valid when saturated") {
  auto net = testing::toy_net();
  const Junction& a = net->junction("A");
  const std::vector<double> over{0.7, 0.6};
  SignalPlan p = webster_plan(a, over);
  ActionBundle b;
  b.signals["A"] = p;
  CHECK(validate_action(*net, b).ok());
  CHECK(p.greens[0] == p.greens[1]);

  SignalPlan u = uniform_plan(a);
  CHECK(u.cycle_time == doctest::Approx(a.fixed_cycle));
}

TEST_CASE("alinea") {
  CHECK(alinea_update(30.0, 0.25, 0.25, 100.0) == 30.0);
  CHECK(alinea_update(30.0, 0.35, 0.25, 100.0) == doctest::Approx(20.0).epsilon(1e-12));
  double open = 30.0;
  double prev = open;
  for (int k = 0; k < 20; ++k) {
    open = alinea_update(open, 0.9, 0.25, 100.0);
    CHECK(open <= prev);
    prev = open;
  }
  CHECK(open == 0.0);
  CHECK(alinea_update(55.0, 0.0, 0.25, 100.0) == kRampMeterCycle);
  CHECK_THROWS_AS(alinea_update(10.0, 1.5, 0.25, 100.0), Error);
}

TEST_CASE("greedy dispatch") {
  std::vector<TaxiSnapshot> one{{"T1", true, {0, 0}}};
  std::vector<ReservationSnapshot> two{{"R1", {1, 0}, 0}, {"R2", {5, 0}, 1}};
  auto d = greedy_dispatch(one, two);
  REQUIRE(d.assignments.size() == 1);
  CHECK(d.assignments[0] == std::pair<Id, Id>{"T1", "R1"});

  std::vector<TaxiSnapshot> pair{{"T1", true, {0, 0}}, {"T2", true, {10, 0}}};
  std::vector<ReservationSnapshot> near{{"R1", {9, 0}, 0}};
  CHECK(greedy_dispatch(pair, near).assignments[0].first == "T2");

  std::vector<TaxiSnapshot> tied{{"T2", true, {2, 0}}, {"T1", true, {-2, 0}}};
  std::vector<ReservationSnapshot> mid{{"R1", {0, 0}, 0}};
  CHECK(greedy_dispatch(tied, mid).assignments[0].first == "T1");

  std::vector<TaxiSnapshot> busy{{"T1", false, {0, 0}}};
  CHECK(greedy_dispatch(busy, mid).assignments.empty());
}

TEST_CASE("fixed headway schedule") {
  TransitRoute r;
  r.id = "R1";
  auto s = fixed_headway_schedule(r, 600.0, 0.0, 3600.0);
  CHECK(departures(s, 0.0, 3600.0).size() == 6);
  CHECK_NOTHROW(fixed_headway_schedule(r, 60.0));
  CHECK_THROWS_AS(fixed_headway_schedule(r, 30.0), Error);
}

TEST_CASE("validate_action reports every plan") {
  auto net = testing::toy_net();
  ActionBundle b;
  b.signals["A"] = uniform_plan(net->junction("A"));
  CHECK(validate_action(*net, b).ok());

  auto corridor = load_network(testing::fixture("corridor.network.json"));
  ActionBundle r;
  r.ramps["RM1"] = RampMeterPlan{"RM1", 75.0};
  auto rep = validate_action(corridor, r);
  CHECK_FALSE(rep.ok());
  CHECK(rep.first_failure().find("exceeds 60 s cycle") != std::string::npos);

  ActionBundle d;
  DispatchAssignment a;
  a.repositions = {{"T0", "ZA"}, {"T0", "ZB"}};
  d.dispatch = a;
  auto dup = validate_action(*net, d);
  CHECK_FALSE(dup.ok());
  CHECK(dup.first_failure().find("duplicate taxi id T0") != std::string::npos);

  ActionBundle bad;
  SignalPlan p = uniform_plan(net->junction("B"));
  p.cycle_time += 3.0;
  bad.signals["B"] = p;
  bad.transit["R1"] = TransitSchedule{"R1", 30.0, {}, 0.0, 86400.0};
  auto both = validate_action(*net, bad);
  int failures = 0;
  for (const auto& c : both.checks) failures += c.ok ? 0 : 1;
  CHECK(failures == 2);
}

TEST_CASE("bundle json round trip") {
  auto net = testing::toy_net();
  ActionBundle b;
  b.signals["A"] = uniform_plan(net->junction("A"));
  b.transit["R1"] = TransitSchedule{"R1", 420.0, {{"S_A", 15.0}}, 0.0, 86400.0};
  DispatchAssignment d;
  d.repositions = {{"T0", "ZC"}};
  b.dispatch = d;
  nlohmann::json j = b;
  CHECK(parse_bundle(j) == b);
  CHECK_THROWS_AS(parse_bundle(nlohmann::json{{"signals", 3}}), Error);
}
