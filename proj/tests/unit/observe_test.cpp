#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "tee.hpp"
#include "utc/dynamics.hpp"
#include "utc/observe.hpp"

using namespace utc;

namespace {

std::uint32_t ix(const EnvState& s, const char* lane) { return static_cast<std::uint32_t>(s.net().lane_index(lane)); }

History record_now(const EnvState& s) {
  History h(s.ctx->net);
  h.record(s);
  return h;
}

LaneObservation lane_now(const History& h, const char* lane) {
  const Id ids[] = {lane};
  return read_lane_traffic_states(h, ids, 0.0).front().samples.back().second;
}

}  // namespace

TEST_CASE("lane observation counts halting and moving vehicles") {
  EnvState s = init_state(testing::tee_net(), {}, 0, 1);
  const auto l3 = ix(s, "L3"), l2 = ix(s, "L2");
  place_queued_vehicle(s, l3, {l3, l2});
  place_queued_vehicle(s, l3, {l3, l2});
  for (int k = 0; k < 4; ++k) step(s, ActionBundle{});
  for (int k = 0; k < 3; ++k) place_queued_vehicle(s, l2);
  History h = record_now(s);
  auto o = lane_now(h, "L2");
  CHECK(o.vehicle_count == 5);
  CHECK(o.halting_number == 3);
  CHECK(o.moving_vehicles == 2);
  CHECK(o.queue_length == 3);
  CHECK(o.vehicle_details.size() == 5);

  auto empty = lane_now(h, "L1");
  CHECK(empty.queue_length == 0);
  CHECK(empty.occupancy == 0);
  CHECK(empty.average_speed == 10.0);

  const Id bad[] = {"L99"};
  CHECK_THROWS_AS(read_lane_traffic_states(h, bad, 0.0), Error);
  CHECK_THROWS_AS(read_lane_traffic_states(h, bad, 7200.0), Error);
}

TEST_CASE("zone congestion level is the mean lane occupancy") {
  // 75 m lanes hold 10 cells each
  EnvState s = init_state(testing::tee_net(75.0, 75.0), {}, 0, 1);
  for (int k = 0; k < 2; ++k) place_queued_vehicle(s, ix(s, "L1"));
  for (int k = 0; k < 8; ++k) place_queued_vehicle(s, ix(s, "L3"));
  History h = record_now(s);
  auto z = analyze_zone_traffic(h, "ZB", 0.0);
  CHECK(z.congestion_level == doctest::Approx(0.5));
  CHECK(z.lane_count == 2);
  auto empty = analyze_zone_traffic(record_now(init_state(testing::tee_net(), {}, 0, 1)), "ZB", 0.0);
  CHECK(empty.congestion_level == 0.0);
  auto za = analyze_zone_traffic(h, "ZA", 0.0);
  CHECK(za.lane_count == 0);
  CHECK(za.avg_speed == 0.0);
  CHECK_THROWS_AS(analyze_zone_traffic(h, "Z99", 0.0), Error);

  auto net_metrics = calculate_network_metrics(h, 0.0);
  CHECK(net_metrics.global.lane_count == 4);
  CHECK(net_metrics.global.congestion_level == doctest::Approx(1.0 / 4.0));
}

TEST_CASE("congestion hotspots") {
  EnvState s = init_state(testing::tee_net(), {}, 0, 1);
  CHECK(identify_congestion_hotspots(record_now(s), 20, 2.0).empty());
  for (int k = 0; k < 30; ++k) place_queued_vehicle(s, ix(s, "L2"));
  auto hot = identify_congestion_hotspots(record_now(s), 20, 2.0);
  REQUIRE(hot.size() == 1);
  CHECK(hot[0].lane == "L2");
  CHECK(hot[0].queue_length == 30);

  EnvState t = init_state(testing::tee_net(), {}, 0, 1);
  for (int k = 0; k < 3; ++k) {
    place_queued_vehicle(t, ix(t, "L3"));
    place_queued_vehicle(t, ix(t, "L1"));
  }
  auto tie = identify_congestion_hotspots(record_now(t), 2, 0.5);
  REQUIRE(tie.size() == 2);
  CHECK(tie[0].lane == "L1");
  CHECK(tie[1].lane == "L3");
  CHECK_THROWS_AS(identify_congestion_hotspots(record_now(t), 0, 0.5), Error);
}

TEST_CASE("taxi utilisation") {
  EnvState s = init_state(testing::toy_net(), {}, 10, 1);
  for (int k = 0; k < 6; ++k) s.taxis[k].status = TaxiStatus::occupied;
  auto o = read_taxi_traffic_states(record_now(s), 0.0).samples.back().second;
  CHECK(o.fleet_size == 10);
  CHECK(o.idle_count == 4);
  CHECK(o.utilization_rate == doctest::Approx(0.6));
}

TEST_CASE("highway at its default limit in free flow") {
  auto net = std::make_shared<const TrafficNetwork>(load_network(testing::fixture("corridor.network.json")));
  EnvState s = init_state(net, {}, 0, 1);
  const Id seg[] = {"H1"};
  auto o = read_highway_traffic_states(record_now(s), seg, 0.0).front().samples.back().second;
  CHECK(o.segment_speed_ratio == 1.0);
  CHECK(o.segment_speed_limit == o.segment_default_speed_limit);
}

// identifier keys are not features; a list of records contributes its record's fields
std::size_t feature_count(const nlohmann::json& j) {
  std::size_t n = 0;
  for (const auto& [k, v] : j.items()) {
    if (k == "id" || k == "segment_id" || k == "ramp_id" || k == "route_id") continue;
    if (v.is_array() && !v.empty() && v.front().is_object()) n += feature_count(v.front());
    else ++n;
  }
  return n;
}

TEST_CASE("observation records carry the documented field counts") {
  auto net = std::make_shared<const TrafficNetwork>(load_network(testing::fixture("corridor.network.json")));
  EnvState s = init_state(net, {}, 4, 1);
  History h = record_now(s);
  const Id seg[] = {"H1"}, ramp[] = {"RM1"};
  CHECK(feature_count(to_json(read_highway_traffic_states(h, seg, 0).front().samples.back().second)) == 13);
  CHECK(feature_count(to_json(read_ramp_lane_traffic_states(h, ramp, 0).front().samples.back().second)) == 17);

  TransitObservation bus;
  bus.vehicles.emplace_back();
  CHECK(feature_count(to_json(bus)) == 16);
  bus.mode = TransitMode::subway;
  CHECK(feature_count(to_json(bus)) == 16);
  TaxiObservation taxi = read_taxi_traffic_states(h, 0).samples.back().second;
  REQUIRE(taxi.taxi_state.size() == 4);
  CHECK(feature_count(to_json(taxi)) == 14);
}

TEST_CASE("history keeps one sample per resolution step") {
  EnvState s = init_state(testing::toy_net(), {}, 0, 1);
  History h(s.ctx->net);
  for (int k = 0; k < 100; ++k) {
    h.observe(s);
    step(s, ActionBundle{});
  }
  CHECK(h.size() == 10);
  CHECK(h.window(30.0).size() == 4);
}

TEST_CASE("forecaster") {
  std::vector<double> c(8, 4.0);
  for (int p = 1; p <= 2; ++p) {
    for (int d = 0; d <= 1; ++d) {
      auto f = predict_arima(c, 3, p, d);
      for (double v : f.values) CHECK(v == doctest::Approx(4.0));
    }
  }

  std::vector<double> ar{1.0};
  for (int k = 0; k < 9; ++k) ar.push_back(2.0 * ar.back());
  auto f = predict_arima(ar, 3, 1, 0);
  CHECK(std::abs(f.coefficients[0] - 2.0) <= 1e-6);
  CHECK(std::abs(f.values[0] - 1024.0) <= 1e-6);
  CHECK(std::abs(f.values[2] - 4096.0) <= 1e-6);

  std::vector<double> ramp;
  for (int k = 0; k < 10; ++k) ramp.push_back(5.0 + 3.0 * k);
  auto r = predict_arima(ramp, 4, 1, 1);
  for (int h = 0; h < 4; ++h) CHECK(std::abs(r.values[h] - (5.0 + 3.0 * (10 + h))) <= 1e-6);

  std::vector<double> zeros(6, 0.0);
  auto z = predict_arima(zeros, 2, 1, 0);
  CHECK(z.fallback);
  CHECK(z.values == std::vector<double>{0.0, 0.0});

  std::vector<double> tiny{1.0, 2.0};
  CHECK_THROWS_AS(predict_arima(tiny, 1, 1, 1), Error);
}

TEST_CASE("idle taxis ranked by distance") {
  std::vector<TaxiSnapshot> fleet{{"T3", true, {3, 0}}, {"T1", true, {0, 1}}, {"T2", true, {0, 2}},
                                  {"T0", false, {0, 0}}};
  CHECK(rank_idle_taxis_by_distance(fleet, {0, 0}) == std::vector<Id>{"T1", "T2", "T3"});
  std::vector<TaxiSnapshot> tied{{"Tb", true, {1, 0}}, {"Ta", true, {0, 1}}};
  CHECK(rank_idle_taxis_by_distance(tied, {0, 0}) == std::vector<Id>{"Ta", "Tb"});
  std::vector<TaxiSnapshot> busy{{"T0", false, {0, 0}}};
  CHECK(rank_idle_taxis_by_distance(busy, {0, 0}).empty());
}
