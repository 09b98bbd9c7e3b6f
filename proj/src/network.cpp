#include "utc/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace utc {

using nlohmann::json;

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::parse: return "parse_error";
    case Errc::validation: return "validation_error";
    case Errc::dangling_reference: return "dangling_reference";
    case Errc::not_found: return "not_found";
    case Errc::unreachable: return "unreachable";
    case Errc::precondition: return "precondition";
    case Errc::invalid_action: return "invalid_action";
    case Errc::oversaturated: return "oversaturated";
    case Errc::duplicate: return "duplicate";
    case Errc::singular: return "singular";
    case Errc::protocol: return "protocol_error";
    case Errc::turn_limit: return "turn_limit";
    case Errc::not_enabled: return "not_enabled";
    case Errc::missing_baseline: return "missing_baseline";
    case Errc::scenario_mismatch: return "scenario_mismatch";
    case Errc::io: return "io_error";
  }
  return "unknown";
}

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

std::string_view to_string(LaneKind kind) noexcept {
  switch (kind) {
    case LaneKind::urban: return "urban";
    case LaneKind::highway_segment: return "highway_segment";
    case LaneKind::ramp: return "ramp";
    case LaneKind::transit_only: return "transit_only";
  }
  return "urban";
}

std::string_view to_string(TransitMode mode) noexcept {
  return mode == TransitMode::bus ? "bus" : "subway";
}

std::string_view to_string(InfraKind kind) noexcept {
  switch (kind) {
    case InfraKind::lane: return "lane";
    case InfraKind::junction: return "junction";
    case InfraKind::highway: return "highway";
    case InfraKind::ramp: return "ramp";
    case InfraKind::station: return "station";
  }
  return "lane";
}

InfraKind parse_infra_kind(std::string_view text) {
  if (text == "lane" || text == "lanes") return InfraKind::lane;
  if (text == "junction" || text == "junctions" || text == "intersection") return InfraKind::junction;
  if (text == "highway" || text == "highways") return InfraKind::highway;
  if (text == "ramp" || text == "ramps") return InfraKind::ramp;
  if (text == "station" || text == "stations") return InfraKind::station;
  throw Error(Errc::precondition, "unknown infrastructure kind '" + std::string(text) +
                                      "' (expected lane, junction, highway, ramp, station)");
}

int Lane::storage_capacity() const noexcept {
  return std::max(1, static_cast<int>(std::floor(length / kVehicleLength)));
}

const std::vector<Id>& ZoneInfrastructure::of(InfraKind kind) const {
  switch (kind) {
    case InfraKind::lane: return lanes;
    case InfraKind::junction: return junctions;
    case InfraKind::highway: return highways;
    case InfraKind::ramp: return ramps;
    case InfraKind::station: return stations;
  }
  return lanes;
}

std::size_t ZoneInfrastructure::size() const noexcept {
  return lanes.size() + junctions.size() + highways.size() + ramps.size() + stations.size();
}

namespace {

// Field reader that records issues with a JSON-path context instead of
// throwing on the first problem.
class Reader {
 public:
  explicit Reader(std::vector<NetworkIssue>& issues) : issues_(issues) {}

  void issue(Errc code, std::string message) { issues_.push_back({code, std::move(message)}); }

  std::string str(const json& obj, const char* key, const std::string& where, bool required = true) {
    if (!obj.contains(key)) {
      if (required) issue(Errc::validation, where + ": missing field '" + key + "'");
      return {};
    }
    if (!obj[key].is_string()) {
      issue(Errc::validation, where + "." + key + ": expected string");
      return {};
    }
    return obj[key].get<std::string>();
  }

  double num(const json& obj, const char* key, const std::string& where, std::optional<double> fallback = {}) {
    if (!obj.contains(key)) {
      if (fallback) return *fallback;
      issue(Errc::validation, where + ": missing field '" + key + "'");
      return 0.0;
    }
    if (!obj[key].is_number()) {
      issue(Errc::validation, where + "." + key + ": expected number");
      return 0.0;
    }
    return obj[key].get<double>();
  }

  std::vector<Id> ids(const json& obj, const char* key, const std::string& where, bool required = false) {
    std::vector<Id> out;
    if (!obj.contains(key)) {
      if (required) issue(Errc::validation, where + ": missing field '" + key + "'");
      return out;
    }
    if (!obj[key].is_array()) {
      issue(Errc::validation, where + "." + key + ": expected array of identifiers");
      return out;
    }
    for (const auto& v : obj[key]) {
      if (v.is_string()) {
        out.push_back(v.get<std::string>());
      } else {
        issue(Errc::validation, where + "." + key + ": identifiers must be strings");
      }
    }
    return out;
  }

  Point point(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) {
      issue(Errc::validation, where + ": missing field '" + key + "'");
      return {};
    }
    const auto& v = obj[key];
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      return {v[0].get<double>(), v[1].get<double>()};
    }
    if (v.is_object() && v.contains("x") && v.contains("y")) {
      return {v["x"].get<double>(), v["y"].get<double>()};
    }
    issue(Errc::validation, where + "." + key + ": expected [x, y]");
    return {};
  }

  const json& section(const json& doc, const char* key, bool required) {
    static const json empty = json::array();
    if (!doc.contains(key)) {
      if (required) issue(Errc::validation, std::string("missing top-level section '") + key + "'");
      return empty;
    }
    if (!doc[key].is_array()) {
      issue(Errc::validation, std::string("section '") + key + "' must be an array");
      return empty;
    }
    return doc[key];
  }

 private:
  std::vector<NetworkIssue>& issues_;
};

template <class T>
void index_ids(const std::vector<T>& items, std::unordered_map<Id, std::size_t>& ix,
               const char* what, Reader& rd) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id.empty()) {
      rd.issue(Errc::validation, std::string(what) + "[" + std::to_string(i) + "]: empty identifier");
      continue;
    }
    if (!ix.emplace(items[i].id, i).second) {
      rd.issue(Errc::validation, std::string("duplicate ") + what + " identifier '" + items[i].id + "'");
    }
  }
}

LaneKind parse_lane_kind(const std::string& s, const std::string& where, Reader& rd) {
  if (s.empty() || s == "urban") return LaneKind::urban;
  if (s == "highway_segment" || s == "highway") return LaneKind::highway_segment;
  if (s == "ramp") return LaneKind::ramp;
  if (s == "transit_only") return LaneKind::transit_only;
  rd.issue(Errc::validation, where + ".kind: unknown lane kind '" + s + "'");
  return LaneKind::urban;
}

std::optional<std::size_t> lookup(const std::unordered_map<Id, std::size_t>& ix, const Id& id) {
  auto it = ix.find(id);
  if (it == ix.end()) return std::nullopt;
  return it->second;
}

[[noreturn]] void throw_missing(const char* what, const Id& id) {
  throw Error(Errc::not_found, std::string("unknown ") + what + " '" + id + "'");
}

}  // namespace

TrafficNetwork TrafficNetwork::build(const json& doc, std::vector<NetworkIssue>& issues) {
  Reader rd(issues);
  TrafficNetwork net;
  if (!doc.is_object()) {
    rd.issue(Errc::validation, "network document must be an object");
    return net;
  }

  const json& zones = rd.section(doc, "zones", true);
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const auto& z = zones[i];
    const std::string where = "zones[" + std::to_string(i) + "]";
    Zone zone;
    zone.id = rd.str(z, "id", where);
    zone.centroid = rd.point(z, "centroid", where);
    zone.population_density = rd.num(z, "population_density", where, 0.0);
    zone.poi_count = rd.num(z, "poi_count", where, 0.0);
    zone.contained_infrastructure = rd.ids(z, "infrastructure", where);
    if (zone.population_density < 0) rd.issue(Errc::validation, where + ": population_density must be >= 0");
    if (zone.poi_count < 0) rd.issue(Errc::validation, where + ": poi_count must be >= 0");
    net.zones_.push_back(std::move(zone));
  }
  if (doc.contains("zones") && net.zones_.empty()) {
    rd.issue(Errc::validation, "network must contain ≥ 1 zone");
  }

  const json& junctions = rd.section(doc, "junctions", true);
  for (std::size_t i = 0; i < junctions.size(); ++i) {
    const auto& j = junctions[i];
    const std::string where = "junctions[" + std::to_string(i) + "]";
    Junction jn;
    jn.id = rd.str(j, "id", where);
    jn.position = rd.point(j, "position", where);
    jn.signalized = j.value("signalized", false);
    jn.fixed_cycle = rd.num(j, "fixed_cycle", where, 60.0);
    jn.incoming_lanes = rd.ids(j, "incoming_lanes", where);
    if (j.contains("phases")) {
      for (std::size_t p = 0; p < j["phases"].size(); ++p) {
        const auto& ph = j["phases"][p];
        const std::string pw = where + ".phases[" + std::to_string(p) + "]";
        Phase phase;
        phase.id = rd.str(ph, "id", pw);
        phase.min_green = rd.num(ph, "min_green", pw, 5.0);
        phase.max_green = rd.num(ph, "max_green", pw, 90.0);
        if (ph.contains("green_movements")) {
          for (const auto& mv : ph["green_movements"]) {
            if (mv.is_string()) {
              phase.green_movements.push_back({mv.get<std::string>(), "*"});
            } else if (mv.is_array() && mv.size() == 2 && mv[0].is_string() && mv[1].is_string()) {
              phase.green_movements.push_back({mv[0].get<std::string>(), mv[1].get<std::string>()});
            } else {
              rd.issue(Errc::validation, pw + ".green_movements: expected [from, to] or lane id");
            }
          }
        }
        if (!(phase.min_green > 0 && phase.min_green <= phase.max_green)) {
          rd.issue(Errc::validation, pw + ": requires 0 < min_green <= max_green");
        }
        jn.phases.push_back(std::move(phase));
      }
    }
    if (jn.fixed_cycle <= 0) rd.issue(Errc::validation, where + ": fixed_cycle must be > 0");
    net.junctions_.push_back(std::move(jn));
  }

  const json& lanes = rd.section(doc, "lanes", true);
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const auto& l = lanes[i];
    const std::string where = "lanes[" + std::to_string(i) + "]";
    Lane lane;
    lane.id = rd.str(l, "id", where);
    lane.length = rd.num(l, "length", where);
    lane.speed_limit = rd.num(l, "speed_limit", where);
    lane.saturation_flow = rd.num(l, "saturation_flow", where, 0.5);
    lane.upstream = rd.str(l, "upstream", where);
    lane.downstream = rd.str(l, "downstream", where);
    lane.successors = rd.ids(l, "successors", where);
    lane.kind = parse_lane_kind(rd.str(l, "kind", where, false), where, rd);
    lane.road = rd.str(l, "road", where, false);
    if (lane.road.empty()) lane.road = lane.id;
    lane.direction = rd.str(l, "direction", where, false);
    if (lane.direction.empty() && lane.kind == LaneKind::ramp) lane.direction = "on";
    if (!(lane.length > 0)) rd.issue(Errc::validation, where + ": length must be > 0");
    if (!(lane.speed_limit > 0)) rd.issue(Errc::validation, where + ": speed_limit must be > 0");
    if (!(lane.saturation_flow > 0)) rd.issue(Errc::validation, where + ": saturation_flow must be > 0");
    net.lanes_.push_back(std::move(lane));
  }

  const json& routes = rd.section(doc, "routes", false);
  for (std::size_t i = 0; i < routes.size(); ++i) {
    const auto& r = routes[i];
    const std::string where = "routes[" + std::to_string(i) + "]";
    TransitRoute route;
    route.id = rd.str(r, "id", where);
    const std::string mode = rd.str(r, "mode", where);
    if (mode == "bus") {
      route.mode = TransitMode::bus;
    } else if (mode == "subway") {
      route.mode = TransitMode::subway;
    } else if (!mode.empty()) {
      rd.issue(Errc::validation, where + ".mode: expected bus or subway");
    }
    route.station_sequence = rd.ids(r, "stations", where, true);
    route.edge_sequence = rd.ids(r, "edges", where, true);
    route.default_headway = rd.num(r, "default_headway", where, 600.0);
    route.vehicle_capacity = static_cast<int>(rd.num(r, "capacity", where, 60.0));
    if (route.station_sequence.size() < 2) rd.issue(Errc::validation, where + ": needs >= 2 stations");
    if (route.edge_sequence.empty()) rd.issue(Errc::validation, where + ": needs >= 1 edge");
    if (!(route.default_headway > 0)) rd.issue(Errc::validation, where + ": default_headway must be > 0");
    if (route.vehicle_capacity <= 0) rd.issue(Errc::validation, where + ": capacity must be > 0");
    net.routes_.push_back(std::move(route));
  }

  const json& stations = rd.section(doc, "stations", false);
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const auto& s = stations[i];
    const std::string where = "stations[" + std::to_string(i) + "]";
    Station st;
    st.id = rd.str(s, "id", where);
    st.zone = rd.str(s, "zone", where);
    st.junction = rd.str(s, "junction", where);
    st.routes_served = rd.ids(s, "routes", where);
    if (st.routes_served.empty()) rd.issue(Errc::validation, where + ": routes_served must be non-empty");
    net.stations_.push_back(std::move(st));
  }

  index_ids(net.zones_, net.zone_ix_, "zone", rd);
  index_ids(net.junctions_, net.junction_ix_, "junction", rd);
  index_ids(net.lanes_, net.lane_ix_, "lane", rd);
  index_ids(net.routes_, net.route_ix_, "route", rd);
  index_ids(net.stations_, net.station_ix_, "station", rd);

  net.derive(issues);
  return net;
}

void TrafficNetwork::derive(std::vector<NetworkIssue>& issues) {
  Reader rd(issues);
  auto dangling = [&](const std::string& where, const char* what, const Id& id) {
    rd.issue(Errc::dangling_reference, where + " references unknown " + what + " '" + id + "'");
  };

  const std::size_t nl = lanes_.size();
  lane_up_.assign(nl, 0);
  lane_down_.assign(nl, 0);
  lane_graph_.assign(nl, {});
  lanes_from_junction_.assign(junctions_.size(), {});
  bool lanes_ok = true;
  for (std::size_t i = 0; i < nl; ++i) {
    const Lane& l = lanes_[i];
    auto up = lookup(junction_ix_, l.upstream);
    auto down = lookup(junction_ix_, l.downstream);
    if (!up && !l.upstream.empty()) dangling("lane '" + l.id + "'", "junction", l.upstream);
    if (!down && !l.downstream.empty()) dangling("lane '" + l.id + "'", "junction", l.downstream);
    if (!up || !down) {
      lanes_ok = false;
      continue;
    }
    lane_up_[i] = *up;
    lane_down_[i] = *down;
    lanes_from_junction_[*up].push_back(i);
  }
  for (std::size_t i = 0; i < nl; ++i) {
    for (const Id& s : lanes_[i].successors) {
      auto succ = lookup(lane_ix_, s);
      if (!succ) {
        dangling("lane '" + lanes_[i].id + "'", "successor lane", s);
        continue;
      }
      if (lanes_ok && lane_up_[*succ] != lane_down_[i]) {
        rd.issue(Errc::validation, "lane '" + lanes_[i].id + "' successor '" + s +
                                       "' does not start at its downstream junction");
      }
      lane_graph_[i].push_back(*succ);
    }
  }

  for (std::size_t j = 0; j < junctions_.size(); ++j) {
    Junction& jn = junctions_[j];
    const std::string where = "junction '" + jn.id + "'";
    if (jn.incoming_lanes.empty() && lanes_ok) {
      for (std::size_t i = 0; i < nl; ++i) {
        if (lane_down_[i] == j) jn.incoming_lanes.push_back(lanes_[i].id);
      }
    }
    for (const Id& in : jn.incoming_lanes) {
      auto li = lookup(lane_ix_, in);
      if (!li) {
        dangling(where, "incoming lane", in);
      } else if (lanes_[*li].downstream != jn.id) {
        rd.issue(Errc::validation, where + ": incoming lane '" + in + "' ends elsewhere");
      }
    }
    if (jn.signalized && jn.phases.empty()) {
      rd.issue(Errc::validation, where + ": signalized junction needs at least one phase");
    }
    for (const Phase& ph : jn.phases) {
      for (const Movement& mv : ph.green_movements) {
        if (std::find(jn.incoming_lanes.begin(), jn.incoming_lanes.end(), mv.from) == jn.incoming_lanes.end()) {
          rd.issue(Errc::validation, where + " phase '" + ph.id + "': movement from '" + mv.from +
                                         "' is not an incoming lane");
          continue;
        }
        if (mv.to != "*") {
          const Lane& from = lanes_[lane_ix_.at(mv.from)];
          if (std::find(from.successors.begin(), from.successors.end(), mv.to) == from.successors.end()) {
            rd.issue(Errc::validation, where + " phase '" + ph.id + "': '" + mv.to +
                                           "' is not a successor of '" + mv.from + "'");
          }
        }
      }
    }
    if (jn.signalized && lanes_ok) {
      for (const Id& in : jn.incoming_lanes) {
        auto li = lookup(lane_ix_, in);
        if (!li || lanes_[*li].kind == LaneKind::transit_only) continue;
        for (const Id& to : lanes_[*li].successors) {
          bool served = false;
          for (const Phase& ph : jn.phases) {
            for (const Movement& mv : ph.green_movements) served = served || mv.matches(in, to);
          }
          if (!served) {
            rd.issue(Errc::validation, where + ": movement " + in + " -> " + to + " is never green");
          }
        }
      }
    }
  }

  for (const Zone& z : zones_) {
    for (const Id& c : z.contained_infrastructure) {
      if (!junction_ix_.count(c) && !lane_ix_.count(c) && !station_ix_.count(c)) {
        dangling("zone '" + z.id + "'", "infrastructure", c);
      }
    }
  }

  for (const Station& s : stations_) {
    const std::string where = "station '" + s.id + "'";
    if (!zone_ix_.count(s.zone)) dangling(where, "zone", s.zone);
    if (!junction_ix_.count(s.junction)) dangling(where, "junction", s.junction);
    for (const Id& r : s.routes_served) {
      if (!route_ix_.count(r)) dangling(where, "route", r);
    }
  }

  route_stops_.assign(routes_.size(), {});
  for (std::size_t r = 0; r < routes_.size(); ++r) {
    const TransitRoute& route = routes_[r];
    const std::string where = "route '" + route.id + "'";
    bool ok = lanes_ok;
    std::vector<std::size_t> edges;
    for (const Id& e : route.edge_sequence) {
      auto li = lookup(lane_ix_, e);
      if (!li) {
        dangling(where, "lane", e);
        ok = false;
      } else {
        edges.push_back(*li);
      }
    }
    std::vector<std::size_t> stops;
    for (const Id& s : route.station_sequence) {
      auto si = lookup(station_ix_, s);
      if (!si) {
        dangling(where, "station", s);
        ok = false;
      } else {
        stops.push_back(*si);
      }
    }
    if (!ok || edges.empty() || stops.size() < 2) continue;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      const auto& succ = lane_graph_[edges[k]];
      if (std::find(succ.begin(), succ.end(), edges[k + 1]) == succ.end()) {
        rd.issue(Errc::validation, where + ": edge '" + lanes_[edges[k + 1]].id + "' does not follow '" +
                                       lanes_[edges[k]].id + "'");
        ok = false;
      }
    }
    if (!ok) continue;
    std::vector<std::size_t> seq{lane_up_[edges.front()]};
    for (std::size_t e : edges) seq.push_back(lane_down_[e]);
    std::vector<std::optional<std::size_t>> at(seq.size());
    std::size_t pos = 0;
    bool matched = true;
    for (std::size_t k = 0; k < stops.size(); ++k) {
      const std::size_t sj = junction_ix_.count(stations_[stops[k]].junction)
                                 ? junction_ix_.at(stations_[stops[k]].junction)
                                 : seq.size() + 1;
      while (pos < seq.size() && seq[pos] != sj) ++pos;
      if (pos == seq.size()) {
        matched = false;
        break;
      }
      at[pos] = stops[k];
      ++pos;
    }
    if (!matched || !at.front() || !at.back()) {
      rd.issue(Errc::validation, where + ": edge_sequence must connect its stations in order, "
                                         "starting and ending at a station");
      continue;
    }
    route_stops_[r] = std::move(at);
  }

  zone_anchor_.assign(zones_.size(), 0);
  for (std::size_t z = 0; z < zones_.size(); ++z) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < junctions_.size(); ++j) {
      const double d = distance(zones_[z].centroid, junctions_[j].position);
      if (d < best || (d == best && junctions_[j].id < junctions_[zone_anchor_[z]].id)) {
        best = d;
        zone_anchor_[z] = j;
      }
    }
  }

  junction_zone_.assign(junctions_.size(), 0);
  for (std::size_t j = 0; j < junctions_.size(); ++j) {
    std::optional<std::size_t> owner;
    for (std::size_t z = 0; z < zones_.size() && !owner; ++z) {
      const auto& c = zones_[z].contained_infrastructure;
      if (std::find(c.begin(), c.end(), junctions_[j].id) != c.end()) owner = z;
    }
    if (!owner) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t z = 0; z < zones_.size(); ++z) {
        const double d = distance(zones_[z].centroid, junctions_[j].position);
        if (d < best) {
          best = d;
          owner = z;
        }
      }
    }
    junction_zone_[j] = owner.value_or(0);
  }

  zone_graph_.assign(zones_.size(), {});
  if (lanes_ok && !zones_.empty()) {
    for (std::size_t i = 0; i < nl; ++i) {
      if (lanes_[i].kind == LaneKind::transit_only) continue;
      const std::size_t a = junction_zone_[lane_up_[i]];
      const std::size_t b = junction_zone_[lane_down_[i]];
      if (a != b) zone_graph_[a].push_back(b);
    }
    for (auto& adj : zone_graph_) {
      std::sort(adj.begin(), adj.end());
      adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
  }
}

TrafficNetwork TrafficNetwork::from_json(const json& doc) {
  std::vector<NetworkIssue> issues;
  TrafficNetwork net = build(doc, issues);
  if (!issues.empty()) {
    std::ostringstream msg;
    for (std::size_t i = 0; i < issues.size(); ++i) {
      if (i) msg << "; ";
      msg << issues[i].message;
    }
    throw Error(issues.front().code, msg.str());
  }
  return net;
}

std::vector<NetworkIssue> network_issues(const json& doc) {
  std::vector<NetworkIssue> issues;
  (void)TrafficNetwork::build(doc, issues);
  return issues;
}

#define UTC_INDEX_ACCESSORS(name, member, what)                                     \
  std::optional<std::size_t> TrafficNetwork::find_##name(const Id& id) const {      \
    return lookup(member, id);                                                      \
  }                                                                                 \
  std::size_t TrafficNetwork::name##_index(const Id& id) const {                    \
    auto it = member.find(id);                                                      \
    if (it == member.end()) throw_missing(what, id);                                \
    return it->second;                                                              \
  }

UTC_INDEX_ACCESSORS(zone, zone_ix_, "zone")
UTC_INDEX_ACCESSORS(junction, junction_ix_, "junction")
UTC_INDEX_ACCESSORS(lane, lane_ix_, "lane")
UTC_INDEX_ACCESSORS(route, route_ix_, "route")
UTC_INDEX_ACCESSORS(station, station_ix_, "station")

#undef UTC_INDEX_ACCESSORS

ZoneInfrastructure TrafficNetwork::zone_infrastructure(std::size_t zone) const {
  ZoneInfrastructure out;
  for (const Id& id : zones_[zone].contained_infrastructure) {
    if (auto li = lookup(lane_ix_, id)) {
      switch (lanes_[*li].kind) {
        case LaneKind::highway_segment: out.highways.push_back(id); break;
        case LaneKind::ramp: out.ramps.push_back(id); break;
        default: out.lanes.push_back(id); break;
      }
    } else if (junction_ix_.count(id)) {
      out.junctions.push_back(id);
    } else if (station_ix_.count(id)) {
      out.stations.push_back(id);
    }
  }
  return out;
}

std::optional<std::vector<std::size_t>> TrafficNetwork::shortest_lane_path(
    std::size_t from_junction, std::size_t to_junction, bool transit_lanes) const {
  if (from_junction == to_junction) return std::vector<std::size_t>{};
  auto usable = [&](std::size_t l) {
    return (lanes_[l].kind == LaneKind::transit_only) == transit_lanes;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(lanes_.size(), inf);
  std::vector<std::size_t> prev(lanes_.size(), lanes_.size());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  for (std::size_t l : lanes_from_junction_[from_junction]) {
    if (!usable(l)) continue;
    dist[l] = lanes_[l].free_flow_time();
    open.push({dist[l], l});
  }
  while (!open.empty()) {
    auto [d, l] = open.top();
    open.pop();
    if (d > dist[l]) continue;
    if (lane_down_[l] == to_junction) {
      std::vector<std::size_t> path;
      for (std::size_t cur = l; cur != lanes_.size(); cur = prev[cur]) path.push_back(cur);
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (std::size_t s : lane_graph_[l]) {
      if (!usable(s)) continue;
      const double nd = d + lanes_[s].free_flow_time();
      if (nd < dist[s]) {
        dist[s] = nd;
        prev[s] = l;
        open.push({nd, s});
      }
    }
  }
  return std::nullopt;
}

double TrafficNetwork::lane_km() const noexcept {
  double total = 0.0;
  for (const Lane& l : lanes_) total += l.length;
  return total / 1000.0;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(Errc::parse, path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                 ": " + e.what());
  }
}

TrafficNetwork load_network(const std::filesystem::path& path) {
  return TrafficNetwork::from_json(read_json_file(path));
}

double free_flow_travel_time(const TrafficNetwork& net, const Id& origin, const Id& dest,
                             double intra_zone_floor) {
  const std::size_t o = net.zone_index(origin);
  const std::size_t d = net.zone_index(dest);
  if (o == d) return intra_zone_floor;
  const std::size_t jo = net.zone_anchor(o);
  const std::size_t jd = net.zone_anchor(d);
  if (jo == jd) return intra_zone_floor;
  auto path = net.shortest_lane_path(jo, jd);
  if (!path) {
    throw Error(Errc::unreachable, "no lane path from zone '" + origin + "' to zone '" + dest + "'");
  }
  double t = 0.0;
  for (std::size_t l : *path) t += net.lanes()[l].free_flow_time();
  return t;
}

std::vector<double> impedance_matrix(const TrafficNetwork& net, double intra_zone_floor) {
  const std::size_t n = net.zones().size();
  std::vector<double> e(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      e[i * n + j] = free_flow_travel_time(net, net.zones()[i].id, net.zones()[j].id, intra_zone_floor);
    }
  }
  return e;
}

ZoneInfrastructure get_zone_infrastructure(const TrafficNetwork& net, const Id& zone) {
  auto z = net.find_zone(zone);
  if (!z) throw_missing("zone", zone);
  return net.zone_infrastructure(*z);
}

std::vector<Id> get_zones_by_infrastructure(const TrafficNetwork& net, InfraKind kind) {
  std::vector<Id> out;
  for (std::size_t z = 0; z < net.zones().size(); ++z) {
    if (!net.zone_infrastructure(z).of(kind).empty()) out.push_back(net.zones()[z].id);
  }
  return out;
}

std::vector<Id> get_zones_by_infrastructure(const TrafficNetwork& net, std::string_view kind) {
  return get_zones_by_infrastructure(net, parse_infra_kind(kind));
}

}  // namespace utc
