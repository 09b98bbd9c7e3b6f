#pragma once

#include <memory>

#include "json.hpp"
#include "utc/network.hpp"

namespace testing {

// A (L1) and D (L3) feed signalized B, which releases onto L2 towards C.
// B phase 0 serves L3, phase 1 serves L1; C gates L2 the same way against L5 (E -> C)
// when `gate_c` is set. Saturation flow 0.5 veh/s, 10 m/s everywhere.
inline nlohmann::json tee_doc(double len1 = 300.0, double len3 = 300.0, double len2 = 1000.0, bool gate_c = false) {
  using nlohmann::json;
  auto junction = [](const char* id, double x, double y) {
    return json{{"id", id}, {"position", {{"x", x}, {"y", y}}}};
  };
  auto lane = [](const char* id, const char* up, const char* down, double len, json succ) {
    return json{{"id", id},     {"upstream", up},     {"downstream", down},      {"length", len},
                {"speed_limit", 10.0}, {"saturation_flow", 0.5}, {"successors", succ}};
  };
  json doc;
  doc["junctions"] = json::array({junction("A", 0, 0), junction("D", 1000, -1000), junction("B", 1000, 0),
                                  junction("C", 2000, 0), junction("E", 2000, 1000)});
  doc["junctions"][2]["signalized"] = true;
  doc["junctions"][2]["fixed_cycle"] = 60;
  doc["junctions"][2]["phases"] = {{{"id", "B1"}, {"min_green", 5}, {"max_green", 90}, {"green_movements", json::array({json::array({"L3", "L2"})})}},
                                   {{"id", "B2"}, {"min_green", 5}, {"max_green", 90}, {"green_movements", json::array({json::array({"L1", "L2"})})}}};
  if (gate_c) {
    doc["junctions"][3]["signalized"] = true;
    doc["junctions"][3]["fixed_cycle"] = 60;
    doc["junctions"][3]["phases"] = {{{"id", "C1"}, {"min_green", 5}, {"max_green", 90}, {"green_movements", json::array({"L5"})}},
                                     {{"id", "C2"}, {"min_green", 5}, {"max_green", 90}, {"green_movements", json::array({"L2"})}}};
  }
  doc["lanes"] = json::array({lane("L1", "A", "B", len1, {"L2"}), lane("L3", "D", "B", len3, {"L2"}),
                              lane("L2", "B", "C", len2, json::array()), lane("L5", "E", "C", 300.0, json::array())});
  doc["zones"] = json::array({{{"id", "ZA"}, {"centroid", {{"x", 0}, {"y", 0}}}, {"population_density", 1}, {"poi_count", 1},
                               {"infrastructure", {"A"}}},
                              {{"id", "ZB"}, {"centroid", {{"x", 1000}, {"y", 0}}}, {"population_density", 2}, {"poi_count", 2},
                               {"infrastructure", {"B", "L1", "L3"}}},
                              {{"id", "ZC"}, {"centroid", {{"x", 2000}, {"y", 0}}}, {"population_density", 3}, {"poi_count", 0},
                               {"infrastructure", {"C", "L2"}}}});
  return doc;
}

inline std::shared_ptr<const utc::TrafficNetwork> tee_net(double len1 = 300.0, double len3 = 300.0, double len2 = 1000.0,
                                                          bool gate_c = false) {
  return std::make_shared<const utc::TrafficNetwork>(utc::TrafficNetwork::from_json(tee_doc(len1, len3, len2, gate_c)));
}

}  // namespace testing
