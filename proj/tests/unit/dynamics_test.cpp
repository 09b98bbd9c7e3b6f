#include "doctest.h"
#include "support.hpp"
#include "tee.hpp"
#include "utc/dynamics.hpp"
#include "utc/harness.hpp"

using namespace utc;

namespace {

std::uint32_t ix(const EnvState& s, const char* lane) { return static_cast<std::uint32_t>(s.net().lane_index(lane)); }

EnvState toy_state(std::uint64_t seed = 7) {
  Scenario sc = load_scenario(testing::scenario("toy_grid.json"));
  BuiltDemand d = build_demand(sc, seed);
  DynamicsParams p = sc.controllers;
  p.start_time = 25200.0;
  return init_state(d.net, d.trips, sc.fleet_size, seed, p);
}

}  // namespace

TEST_CASE("red blocks discharge and waiting accrues") {
  EnvState s = init_state(testing::tee_net(), {}, 0, 1);
  const auto l1 = ix(s, "L1"), l2 = ix(s, "L2");
  for (int k = 0; k < 3; ++k) place_queued_vehicle(s, l1, {l1, l2});
  for (int k = 0; k < 10; ++k) step(s, ActionBundle{});
  CHECK(s.lanes[l1].queue.size() == 3);
  double waiting = 0.0;
  for (const auto& [id, v] : s.vehicles) waiting += current_waiting(s, v);
  CHECK(waiting == doctest::Approx(30.0));
}

TEST_CASE("green discharges at saturation flow") {
  EnvState s = init_state(testing::tee_net(), {}, 0, 1);
  const auto l3 = ix(s, "L3"), l2 = ix(s, "L2");
  for (int k = 0; k < 8; ++k) place_queued_vehicle(s, l3, {l3, l2});
  for (int k = 0; k < 10; ++k) step(s, ActionBundle{});
  CHECK(s.lanes[l3].queue.size() == 3);
  CHECK(s.lanes[l2].traversing.size() == 5);
}

TEST_CASE("full downstream blocks discharge") {
  // L2 is 15 m: two vehicles fill it, and C holds them on red.
  EnvState s = init_state(testing::tee_net(300.0, 300.0, 15.0, true), {}, 0, 1);
  const auto l3 = ix(s, "L3"), l2 = ix(s, "L2");
  REQUIRE(s.net().lanes()[l2].storage_capacity() == 2);
  place_queued_vehicle(s, l2);
  place_queued_vehicle(s, l2);
  for (int k = 0; k < 3; ++k) place_queued_vehicle(s, l3, {l3, l2});
  for (int k = 0; k < 10; ++k) step(s, ActionBundle{});
  CHECK(s.lanes[l3].queue.size() == 3);
  CHECK(s.lanes[l2].count() == 2);
  CHECK_FALSE(check_invariants(s).has_value());
}

TEST_CASE("init_state") {
  auto net = testing::toy_net();
  EnvState s = init_state(net, {}, 5, 3);
  CHECK(s.taxis.size() == 5);
  for (const Taxi& t : s.taxis) CHECK(t.status == TaxiStatus::idle);
  for (const LaneState& l : s.lanes) CHECK(l.count() == 0);
  CHECK(state_hash(s) == state_hash(init_state(net, {}, 5, 3)));

  std::vector<Trip> unsorted{{1, "ZA", "ZB", Mode::vehicle, 50.0}, {2, "ZA", "ZB", Mode::vehicle, 10.0}};
  CHECK_THROWS_AS(init_state(net, unsorted, 0, 3), Error);
}

TEST_CASE("run_horizon equals stepping and leaves no trace at horizon 0") {
  EnvState s = toy_state();
  HorizonResult h = run_horizon(s, ActionBundle{}, 600.0);
  EnvState t = s;
  for (int k = 0; k < 600; ++k) step(t, ActionBundle{});
  CHECK(state_hash(h.state) == state_hash(t));

  HorizonResult zero = run_horizon(s, ActionBundle{}, 0.0);
  CHECK(state_hash(zero.state) == state_hash(s));
  CHECK(zero.metrics.throughput == 0.0);

  HorizonResult again = run_horizon(s, ActionBundle{}, 600.0);
  CHECK(again.metrics.to_json() == h.metrics.to_json());
}

TEST_CASE("clones are independent") {
  EnvState s = toy_state();
  EnvState c = clone_state(s);
  CHECK(state_hash(c) == state_hash(s));
  const auto before = state_hash(c);
  for (int k = 0; k < 100; ++k) step(s, ActionBundle{});
  CHECK(state_hash(c) == before);
  EnvState c2 = clone_state(c);
  for (int k = 0; k < 100; ++k) {
    step(c, ActionBundle{});
    step(c2, ActionBundle{});
  }
  CHECK(state_hash(c) == state_hash(c2));
}

TEST_CASE("conservation over an hour of the toy grid") {
  EnvState s = toy_state();
  for (int k = 0; k < 3600; ++k) {
    step(s, ActionBundle{});
    auto bad = check_invariants(s);
    if (bad) FAIL(*bad);
  }
  CHECK(s.entered > 0);
}

TEST_CASE("invalid plans are rejected by step") {
  EnvState s = toy_state();
  ActionBundle b;
  b.ramps["AB"] = RampMeterPlan{"AB", 30.0};
  CHECK_THROWS_AS(step(s, b), Error);
}

TEST_CASE("consumption model") {
  CHECK(consumption_update(VehicleKind::bus, 0, 0, 0) == 0.0);
  CHECK(consumption_update(VehicleKind::bus, 1000, 60, 2) == doctest::Approx(90.2).epsilon(1e-12));
  CHECK(consumption_update(VehicleKind::bus, 2000, 120, 4) == doctest::Approx(180.4).epsilon(1e-12));
  CHECK(consumption_update(VehicleKind::subway, 1000, 60, 2) == doctest::Approx(2600.0));
  CHECK_THROWS_AS(consumption_update(VehicleKind::bus, -1, 0, 0), Error);
}
