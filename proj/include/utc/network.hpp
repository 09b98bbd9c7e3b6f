#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "utc/error.hpp"

namespace utc {

using Id = std::string;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b) noexcept;

enum class LaneKind { urban, highway_segment, ramp, transit_only };
enum class TransitMode { bus, subway };
enum class InfraKind { lane, junction, highway, ramp, station };

std::string_view to_string(LaneKind kind) noexcept;
std::string_view to_string(TransitMode mode) noexcept;
std::string_view to_string(InfraKind kind) noexcept;
InfraKind parse_infra_kind(std::string_view text);

/// Effective vehicle footprint used to derive lane storage.
inline constexpr double kVehicleLength = 7.5;
inline constexpr double kDefaultIntraZoneFloor = 60.0;

/// A permitted (from, to) lane movement; `to == "*"` permits every successor.
struct Movement {
  Id from;
  Id to;

  bool matches(const Id& from_lane, const Id& to_lane) const {
    return from == from_lane && (to == "*" || to == to_lane);
  }
};

struct Phase {
  Id id;
  std::vector<Movement> green_movements;
  double min_green = 5.0;
  double max_green = 90.0;
};

struct Junction {
  Id id;
  Point position;
  std::vector<Id> incoming_lanes;
  std::vector<Phase> phases;
  bool signalized = false;
  double fixed_cycle = 60.0;  // cycle of the uniform fixed-time default plan
};

struct Lane {
  Id id;
  double length = 0.0;
  double speed_limit = 0.0;
  double saturation_flow = 0.0;
  Id upstream;
  Id downstream;
  std::vector<Id> successors;
  LaneKind kind = LaneKind::urban;
  Id road;                     // defaults to the lane id
  std::string direction = "";  // free-form, e.g. "on" / "off" for ramps

  int storage_capacity() const noexcept;
  double free_flow_time() const noexcept { return length / speed_limit; }
};

struct TransitRoute {
  Id id;
  TransitMode mode = TransitMode::bus;
  std::vector<Id> station_sequence;
  std::vector<Id> edge_sequence;
  double default_headway = 600.0;
  int vehicle_capacity = 60;
};

/// Stations sit at junctions; a route stops at a station when it reaches that
/// junction at the end of one of its edges (or departs from it).
struct Station {
  Id id;
  Id zone;
  Id junction;
  std::vector<Id> routes_served;
};

struct Zone {
  Id id;
  Point centroid;
  double population_density = 0.0;
  double poi_count = 0.0;
  std::vector<Id> contained_infrastructure;
};

struct ZoneInfrastructure {
  std::vector<Id> lanes;
  std::vector<Id> junctions;
  std::vector<Id> highways;
  std::vector<Id> ramps;
  std::vector<Id> stations;

  const std::vector<Id>& of(InfraKind kind) const;
  std::size_t size() const noexcept;
};

struct NetworkIssue {
  Errc code;
  std::string message;
};

/// Immutable, validated network. Entities keep file order; lookups by id go
/// through hash indices.
class TrafficNetwork {
 public:
  static TrafficNetwork from_json(const nlohmann::json& doc);

  const std::vector<Zone>& zones() const noexcept { return zones_; }
  const std::vector<Junction>& junctions() const noexcept { return junctions_; }
  const std::vector<Lane>& lanes() const noexcept { return lanes_; }
  const std::vector<TransitRoute>& routes() const noexcept { return routes_; }
  const std::vector<Station>& stations() const noexcept { return stations_; }

  std::size_t zone_index(const Id& id) const;
  std::size_t junction_index(const Id& id) const;
  std::size_t lane_index(const Id& id) const;
  std::size_t route_index(const Id& id) const;
  std::size_t station_index(const Id& id) const;
  std::optional<std::size_t> find_zone(const Id& id) const;
  std::optional<std::size_t> find_junction(const Id& id) const;
  std::optional<std::size_t> find_lane(const Id& id) const;
  std::optional<std::size_t> find_route(const Id& id) const;
  std::optional<std::size_t> find_station(const Id& id) const;

  const Zone& zone(const Id& id) const { return zones_[zone_index(id)]; }
  const Junction& junction(const Id& id) const { return junctions_[junction_index(id)]; }
  const Lane& lane(const Id& id) const { return lanes_[lane_index(id)]; }

  /// lane_graph: successor lane indices per lane.
  const std::vector<std::vector<std::size_t>>& lane_graph() const noexcept { return lane_graph_; }
  /// zone_graph: zones reachable over a single lane crossing a zone boundary.
  const std::vector<std::vector<std::size_t>>& zone_graph() const noexcept { return zone_graph_; }

  std::size_t lane_upstream(std::size_t lane) const { return lane_up_[lane]; }
  std::size_t lane_downstream(std::size_t lane) const { return lane_down_[lane]; }
  /// Junction nearest to the zone centroid (ties by id).
  std::size_t zone_anchor(std::size_t zone) const { return zone_anchor_[zone]; }
  /// Zone a junction belongs to: explicit containment, else nearest centroid.
  std::size_t junction_zone(std::size_t junction) const { return junction_zone_[junction]; }

  ZoneInfrastructure zone_infrastructure(std::size_t zone) const;

  /// Dijkstra over the lane graph on free-flow time. Road lanes only unless
  /// `transit_lanes` is set. Empty path when the junctions coincide.
  std::optional<std::vector<std::size_t>> shortest_lane_path(
      std::size_t from_junction, std::size_t to_junction, bool transit_lanes = false) const;

  /// For each position along the route's junction sequence (start junction,
  /// then the downstream junction of every edge) the station served there.
  const std::vector<std::optional<std::size_t>>& route_stops(std::size_t route) const {
    return route_stops_[route];
  }

  double lane_km() const noexcept;

 private:
  std::vector<Zone> zones_;
  std::vector<Junction> junctions_;
  std::vector<Lane> lanes_;
  std::vector<TransitRoute> routes_;
  std::vector<Station> stations_;

  std::unordered_map<Id, std::size_t> zone_ix_, junction_ix_, lane_ix_, route_ix_, station_ix_;
  std::vector<std::vector<std::size_t>> lane_graph_;
  std::vector<std::vector<std::size_t>> zone_graph_;
  std::vector<std::size_t> lane_up_, lane_down_;
  std::vector<std::size_t> zone_anchor_;
  std::vector<std::size_t> junction_zone_;
  std::vector<std::vector<std::size_t>> lanes_from_junction_;
  std::vector<std::vector<std::optional<std::size_t>>> route_stops_;

  static TrafficNetwork build(const nlohmann::json& doc, std::vector<NetworkIssue>& issues);
  void derive(std::vector<NetworkIssue>& issues);

  friend std::vector<NetworkIssue> network_issues(const nlohmann::json& doc);
};

/// Every structural and cross-reference problem in a network document.
std::vector<NetworkIssue> network_issues(const nlohmann::json& doc);

/// Parses and validates a network file. Parse errors carry line/column.
TrafficNetwork load_network(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

double free_flow_travel_time(const TrafficNetwork& net, const Id& origin, const Id& dest,
                             double intra_zone_floor = kDefaultIntraZoneFloor);

/// Row-major zone x zone free-flow impedance table (zones in network order).
std::vector<double> impedance_matrix(const TrafficNetwork& net,
                                     double intra_zone_floor = kDefaultIntraZoneFloor);

ZoneInfrastructure get_zone_infrastructure(const TrafficNetwork& net, const Id& zone);
std::vector<Id> get_zones_by_infrastructure(const TrafficNetwork& net, InfraKind kind);
std::vector<Id> get_zones_by_infrastructure(const TrafficNetwork& net, std::string_view kind);

}  // namespace utc
