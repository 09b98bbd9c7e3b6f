#include <fstream>
#include <functional>
#include <limits>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "utc/network.hpp"

using nlohmann::json;
using namespace utc;

namespace {

// n junctions J0..Jn-1 at distinct points, one zone per junction, lanes from
// `edges` (from, to, length). Every lane continues onto every lane leaving its end.
json graph_doc(int n, const std::vector<std::tuple<int, int, double>>& edges, double speed = 10.0) {
  json doc;
  doc["zones"] = json::array();
  doc["junctions"] = json::array();
  doc["lanes"] = json::array();
  for (int i = 0; i < n; ++i) {
    const std::string j = "J" + std::to_string(i);
    doc["junctions"].push_back({{"id", j}, {"position", {{"x", 1000.0 * i}, {"y", 0}}}});
    doc["zones"].push_back({{"id", "Z" + std::to_string(i + 1)},
                            {"centroid", {{"x", 1000.0 * i}, {"y", 0}}},
                            {"population_density", 10 + i},
                            {"poi_count", 1 + i},
                            {"infrastructure", {j}}});
  }
  for (const auto& [a, b, len] : edges) {
    json succ = json::array();
    for (const auto& [c, d, l2] : edges) {
      if (c == b) succ.push_back("L" + std::to_string(c) + "_" + std::to_string(d));
    }
    doc["lanes"].push_back({{"id", "L" + std::to_string(a) + "_" + std::to_string(b)},
                            {"upstream", "J" + std::to_string(a)},
                            {"downstream", "J" + std::to_string(b)},
                            {"length", len},
                            {"speed_limit", speed},
                            {"successors", succ}});
  }
  return doc;
}

bool has_issue(const std::vector<NetworkIssue>& issues, Errc code, const std::string& needle) {
  for (const auto& i : issues) {
    if (i.code == code && i.message.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("toy grid fixture loads with 4 junctions and 8 lanes") {
  auto net = testing::toy_net();
  CHECK(net->junctions().size() == 4);
  CHECK(net->lanes().size() == 8);
  CHECK(net->zones().size() == 4);
  CHECK(net->stations().size() == 2);
  CHECK(net->routes().size() == 1);
  // storage = floor(400 / 7.5)
  CHECK(net->lane("AB").storage_capacity() == 53);
}

TEST_CASE("empty zone section is a validation error") {
  json doc = graph_doc(2, {{0, 1, 100.0}});
  doc["zones"] = json::array();
  auto issues = network_issues(doc);
  CHECK(has_issue(issues, Errc::validation, "network must contain ≥ 1 zone"));
  CHECK_THROWS_AS(TrafficNetwork::from_json(doc), Error);
}

TEST_CASE("lane referencing an unknown junction is a dangling reference naming it") {
  json doc = graph_doc(2, {{0, 1, 100.0}});
  doc["lanes"][0]["downstream"] = "J9";
  auto issues = network_issues(doc);
  CHECK(has_issue(issues, Errc::dangling_reference, "J9"));
  try {
    TrafficNetwork::from_json(doc);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dangling_reference);
    CHECK(std::string(e.what()).find("J9") != std::string::npos);
  }
}

TEST_CASE("parse errors carry a line number") {
  auto dir = testing::scratch("bad_json");
  {
    std::ofstream f(dir / "net.json");
    f << "{\n  \"zones\": [\n    {\"id\": \"Z1\",,}\n  ]\n}\n";
  }
  try {
    load_network(dir / "net.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("free-flow time over one lane is length over speed") {
  auto net = TrafficNetwork::from_json(graph_doc(2, {{0, 1, 1000.0}, {1, 0, 1000.0}}, 10.0));
  CHECK(free_flow_travel_time(net, "Z1", "Z2") == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(free_flow_travel_time(net, "Z2", "Z2") == 60.0);
  CHECK(free_flow_travel_time(net, "Z2", "Z2", 45.0) == 45.0);
}

TEST_CASE("unreachable pair names both zones") {
  auto net = TrafficNetwork::from_json(graph_doc(2, {{0, 1, 1000.0}}));
  try {
    free_flow_travel_time(net, "Z2", "Z1");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unreachable);
    CHECK(std::string(e.what()).find("Z2") != std::string::npos);
    CHECK(std::string(e.what()).find("Z1") != std::string::npos);
  }
}

TEST_CASE("free-flow time equals brute-force simple path enumeration") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> len(100.0, 3000.0);
  for (int instance = 0; instance < 5; ++instance) {
    const int n = 5;
    std::vector<std::tuple<int, int, double>> edges;
    // ring keeps it strongly connected, chords add alternatives
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n, len(gen));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j && j != (i + 1) % n && gen() % 3 == 0) edges.emplace_back(i, j, len(gen));
      }
    }
    auto net = TrafficNetwork::from_json(graph_doc(n, edges));

    for (int o = 0; o < n; ++o) {
      for (int d = 0; d < n; ++d) {
        if (o == d) continue;
        double best = std::numeric_limits<double>::infinity();
        std::vector<bool> seen(n, false);
        std::function<void(int, double)> dfs = [&](int at, double t) {
          if (at == d) {
            best = std::min(best, t);
            return;
          }
          seen[at] = true;
          for (const auto& [a, b, l] : edges) {
            if (a == at && !seen[b]) dfs(b, t + l / 10.0);
          }
          seen[at] = false;
        };
        dfs(o, 0.0);
        CHECK(free_flow_travel_time(net, "Z" + std::to_string(o + 1), "Z" + std::to_string(d + 1)) ==
              doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("zone infrastructure listing and its inverse") {
  json doc = graph_doc(3, {{0, 1, 500.0}, {1, 0, 500.0}, {1, 2, 500.0}, {2, 1, 500.0}});
  doc["zones"][0]["infrastructure"] = {"L0_1", "L1_0"};
  doc["zones"][1]["infrastructure"] = json::array();
  doc["zones"][2]["infrastructure"] = {"J2"};
  doc["routes"] = {{{"id", "R"}, {"mode", "bus"}, {"stations", {"S1", "S3"}}, {"edges", {"L0_1", "L1_2"}}}};
  doc["stations"] = {{{"id", "S1"}, {"zone", "Z1"}, {"junction", "J0"}, {"routes", {"R"}}},
                     {{"id", "S3"}, {"zone", "Z3"}, {"junction", "J2"}, {"routes", {"R"}}}};
  doc["zones"][0]["infrastructure"].push_back("S1");
  doc["zones"][2]["infrastructure"].push_back("S3");
  auto net = TrafficNetwork::from_json(doc);

  auto z1 = get_zone_infrastructure(net, "Z1");
  CHECK(z1.size() == 3);
  CHECK(z1.lanes == std::vector<Id>{"L0_1", "L1_0"});
  CHECK(z1.stations == std::vector<Id>{"S1"});
  CHECK(get_zone_infrastructure(net, "Z2").size() == 0);
  CHECK_THROWS_AS(get_zone_infrastructure(net, "Z99"), Error);

  CHECK(get_zones_by_infrastructure(net, InfraKind::station) == std::vector<Id>{"Z1", "Z3"});
  CHECK(get_zones_by_infrastructure(net, InfraKind::ramp).empty());
  CHECK_THROWS_AS(get_zones_by_infrastructure(net, std::string_view("tunnel")), Error);

  for (InfraKind kind : {InfraKind::lane, InfraKind::junction, InfraKind::station}) {
    for (const Id& z : get_zones_by_infrastructure(net, kind)) {
      CHECK_FALSE(get_zone_infrastructure(net, z).of(kind).empty());
    }
  }
}

TEST_CASE("corridor fixture classifies highways and ramps") {
  auto net = load_network(testing::fixture("corridor.network.json"));
  CHECK(net.lane("H1").kind == LaneKind::highway_segment);
  CHECK(net.lane("RM1").kind == LaneKind::ramp);
  CHECK(net.lane("RM1").direction == "on");
}
