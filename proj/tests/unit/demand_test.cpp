#include <random>

#include "doctest.h"
#include "support.hpp"
#include "utc/demand.hpp"

using nlohmann::json;
using namespace utc;

namespace {

json zones_doc(const std::vector<std::pair<double, double>>& pop_poi) {
  json doc;
  doc["zones"] = json::array();
  doc["junctions"] = json::array();
  doc["lanes"] = json::array();
  for (std::size_t i = 0; i < pop_poi.size(); ++i) {
    const std::string j = "J" + std::to_string(i);
    doc["junctions"].push_back({{"id", j}, {"position", {{"x", 500.0 * i}, {"y", 0}}}});
    doc["zones"].push_back({{"id", "Z" + std::to_string(i + 1)},
                            {"centroid", {{"x", 500.0 * i}, {"y", 0}}},
                            {"population_density", pop_poi[i].first},
                            {"poi_count", pop_poi[i].second},
                            {"infrastructure", {j}}});
  }
  return doc;
}

ODMatrix single_cell(double d12, const ModeShares& shares) {
  ODMatrix od;
  od.zones = {"Z1", "Z2"};
  od.total = {0.0, d12, 0.0, 0.0};
  ModeSplitTable t;
  t.set("c", shares);
  return apply_mode_split(od, t, [](std::size_t, std::size_t) { return std::string("c"); });
}

}  // namespace

TEST_CASE("activity is min-max normalised per input") {
  auto net = TrafficNetwork::from_json(zones_doc({{0, 0}, {100, 10}}));
  auto q = compute_activity(net, 1.0, 1.0);
  CHECK(q.intensity == std::vector<double>{0.0, 2.0});

  auto same = TrafficNetwork::from_json(zones_doc({{40, 3}, {40, 3}, {40, 3}}));
  auto qs = compute_activity(same, 0.5, 0.5);
  CHECK(qs.intensity[0] == qs.intensity[1]);
  CHECK(qs.intensity[1] == qs.intensity[2]);

  CHECK_THROWS_AS(compute_activity(net, 0.0, 0.0), Error);
}

TEST_CASE("gravity demand: symmetric case, scale invariance, degenerate input") {
  ActivityProfile a{{"Z1", "Z2"}, {1.0, 1.0}};
  const std::vector<double> e(4, 100.0);
  auto od = gravity_demand(a, e, 400.0);
  for (double v : od.total) CHECK(v == doctest::Approx(100.0).epsilon(1e-12));

  ActivityProfile b{{"Z1", "Z2", "Z3"}, {0.3, 1.1, 0.7}};
  const std::vector<double> e3{60, 240, 410, 250, 60, 120, 390, 150, 60};
  auto od1 = gravity_demand(b, e3, 1000.0);
  for (double& q : b.intensity) q *= 2.0;
  auto od2 = gravity_demand(b, e3, 1000.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(od1.total[k] == doctest::Approx(od2.total[k]).epsilon(1e-12));
    sum += od1.total[k];
  }
  CHECK(sum == doctest::Approx(1000.0).epsilon(1e-12));

  ActivityProfile z{{"Z1", "Z2"}, {0.0, 0.0}};
  CHECK_THROWS_AS(gravity_demand(z, e, 10.0), Error);
  CHECK_THROWS_AS(gravity_demand(a, e, 0.0), Error);
}

TEST_CASE("3-zone gravity matches brute-force evaluation") {
  ActivityProfile a{{"Z1", "Z2", "Z3"}, {0.2, 1.5, 0.9}};
  const std::vector<double> e{60, 300, 500, 280, 60, 150, 520, 170, 60};
  auto od = gravity_demand(a, e, 900.0);
  double denom = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) denom += a.intensity[i] * a.intensity[j] / e[i * 3 + j];
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double want = 900.0 * (a.intensity[i] * a.intensity[j] / e[i * 3 + j]) / denom;
      CHECK(std::abs(od.at(i, j) - want) <= 1e-9);
    }
  }
}

TEST_CASE("mode split rows") {
  auto od = single_cell(100.0, {0.2, 0.3, 0.3, 0.1, 0.1});
  CHECK(od.mode_demand(0, 1, Mode::walk) == doctest::Approx(20.0));
  CHECK(od.mode_demand(0, 1, Mode::vehicle) == doctest::Approx(30.0));
  CHECK(od.mode_demand(0, 1, Mode::bus) == doctest::Approx(30.0));
  CHECK(od.mode_demand(0, 1, Mode::subway) == doctest::Approx(10.0));
  CHECK(od.mode_demand(0, 1, Mode::taxi) == doctest::Approx(10.0));

  auto taxi = single_cell(100.0, {0, 0, 0, 0, 1});
  CHECK(taxi.mode_demand(0, 1, Mode::taxi) == 100.0);

  ODMatrix plain;
  plain.zones = {"Z1"};
  plain.total = {5.0};
  try {
    apply_mode_split(plain, ModeSplitTable::defaults(), [](std::size_t, std::size_t) { return std::string("nope"); });
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_found);
    CHECK(std::string(e.what()).find("nope") != std::string::npos);
  }

  ModeSplitTable t;
  CHECK_THROWS_AS(t.set("bad", {0.5, 0.5, 0.5, 0, 0}), Error);
  CHECK_THROWS_AS(t.set("neg", {-0.1, 0.6, 0.5, 0, 0}), Error);
}

TEST_CASE("default mode table rows sum to one") {
  const ModeSplitTable t = ModeSplitTable::defaults();
  for (const auto& [cat, row] : t.rows()) {
    double s = 0.0;
    for (double p : row) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sampling is deterministic and respects the profile support") {
  auto od = single_cell(500.0, {0.2, 0.3, 0.3, 0.1, 0.1});
  auto a = sample_trips(od, rush_hour_profile(), 42);
  auto b = sample_trips(od, rush_hour_profile(), 42);
  CHECK(a == b);
  for (std::size_t k = 1; k < a.size(); ++k) CHECK(a[k - 1].departure_time <= a[k].departure_time);

  TemporalProfile eight{};
  eight[8] = 1.0;
  for (const Trip& t : sample_trips(od, eight, 3)) {
    CHECK(t.departure_time >= 28800.0);
    CHECK(t.departure_time < 32400.0);
  }
  CHECK_THROWS_AS(sample_trips(od, TemporalProfile{}, 1), Error);
}

TEST_CASE("uniform profile, 240 taxi trips/day: mean hourly count 10 over 200 seeds") {
  auto od = single_cell(240.0, {0, 0, 0, 0, 1});
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) total += static_cast<double>(sample_trips(od, uniform_profile(), seed).size());
  const double hourly = total / 200.0 / 24.0;
  CHECK(hourly >= 9.0);
  CHECK(hourly <= 11.0);
}

TEST_CASE("demand stats report transit as bus plus subway") {
  std::vector<Trip> trips{{1, "Z1", "Z2", Mode::bus, 0},
                          {2, "Z1", "Z2", Mode::subway, 1},
                          {3, "Z1", "Z2", Mode::taxi, 2},
                          {4, "Z1", "Z2", Mode::walk, 3}};
  auto s = demand_stats(trips);
  CHECK(s.public_transit() == 2.0);
  CHECK(s.total() == 4.0);
  auto j = s.to_json();
  for (const char* col : {"Taxi", "Public Transit", "Walk", "Total"}) CHECK(j.contains(col));
}
