#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "utc/controllers.hpp"
#include "utc/state.hpp"

namespace utc {

inline constexpr double kHistoryResolution = 10.0;
inline constexpr double kHistoryRetention = 3600.0;

struct VehicleDetail {
  VehicleId id = 0;
  double speed = 0.0;
  double position = 0.0;  // meters from the upstream end
  double waiting_time = 0.0;
};

/// Field formulas are listed in docs/observation_fields.md.
struct LaneObservation {
  Id lane;
  double queue_length = 0.0;
  double queue_density = 0.0;
  double moving_vehicles = 0.0;
  double average_speed = 0.0;
  double average_waiting_time = 0.0;
  double cell_occupancy = 0.0;
  double lane_density = 0.0;
  double throughput_potential = 0.0;
  double occupancy = 0.0;
  double halting_number = 0.0;
  double max_speed = 0.0;
  double arrival_rate = 0.0;
  double entering_vehicles = 0.0;
  double vehicle_count = 0.0;
  std::vector<VehicleDetail> vehicle_details;
};

struct HighwayObservation {
  Id segment;
  double segment_speed = 0.0;
  double segment_density = 0.0;
  double segment_occupancy = 0.0;
  double segment_speed_limit = 0.0;
  double segment_default_speed_limit = 0.0;
  double segment_congestion_ratio = 0.0;
  double segment_speed_ratio = 0.0;
  double segment_speed_pressure = 0.0;
  double road_speed = 0.0;
  double road_density = 0.0;
  double road_occupancy = 0.0;
  std::map<Id, double> current_speed_limits;
  std::map<Id, double> default_speed_limits;
};

struct RampObservation {
  Id ramp;
  double vehicle_count = 0.0;
  double queue_length = 0.0;
  double queue_density = 0.0;
  double moving_vehicles = 0.0;
  double average_speed = 0.0;
  double average_waiting_time = 0.0;
  double cell_occupancy = 0.0;
  double lane_density = 0.0;
  double occupancy = 0.0;
  double halting_number = 0.0;
  double max_speed = 0.0;
  double arrival_rate = 0.0;
  double lane_length = 0.0;
  Id road_id;
  std::string direction;
  Id start_intersection;
  Id end_intersection;
};

struct TransitVehicleObservation {
  std::string id;
  double departure_time = 0.0;
  double travel_time = 0.0;
  std::string current_edge;  // empty while at the origin terminal
  double speed = 0.0;
  double passenger_count = 0.0;
  double capacity = 0.0;
  double load_ratio = 0.0;
  std::string next_station;
  double next_station_dwell_time = 0.0;
};

/// One record per route; bus and subway share the shape, only the count key differs.
struct TransitObservation {
  Id route;
  TransitMode mode = TransitMode::bus;
  double active_vehicles = 0.0;
  double headway = 0.0;
  double station_count = 0.0;
  std::vector<TransitVehicleObservation> vehicles;
  double waiting_count = 0.0;
  double avg_waiting_time = 0.0;
  double max_waiting_time = 0.0;
  std::array<double, 4> waiting_time_distribution{};  // 0-60, 60-180, 180-300, >300 s
};

struct TaxiStateObservation {
  Id id;
  std::string taxi_state;
  std::string customers;  // reservation id or empty
  std::string current_edge;
  Id current_taz;
  Point position;
  double speed = 0.0;
  double cumulative_income = 0.0;
  double recent_order_count = 0.0;
};

struct TaxiObservation {
  double fleet_size = 0.0;
  double idle_count = 0.0;
  double pickup_count = 0.0;
  double occupied_count = 0.0;
  double utilization_rate = 0.0;
  double pending_reservations = 0.0;
  std::vector<TaxiStateObservation> taxi_state;
};

struct GlobalObservation {
  double total_vehicles = 0.0;
  double avg_queue_length = 0.0;
  double avg_speed = 0.0;
  double avg_waiting_time = 0.0;
  double congestion_level = 0.0;
  double intersection_count = 0.0;
  double lane_count = 0.0;
};

struct NetworkMetrics {
  GlobalObservation global;
  double congestion_index = 0.0;
  double throughput_potential = 0.0;
};

struct Snapshot {
  double time = 0.0;
  std::vector<std::uint64_t> lane_entered;  // cumulative, for arrival rates
  std::vector<LaneObservation> lanes;
  std::vector<TransitObservation> routes;
  TaxiObservation taxi;
};

/// Compute a snapshot of the state; `previous` supplies the entering counts.
Snapshot take_snapshot(const EnvState& state, const Snapshot* previous);

/// Ring buffer of snapshots at kHistoryResolution spacing, kHistoryRetention deep.
class History {
 public:
  History() = default;
  explicit History(std::shared_ptr<const TrafficNetwork> net) : net_(std::move(net)) {}

  /// Records a snapshot when at least one resolution step has passed since
  /// the last one (always on the first call).
  void observe(const EnvState& state);
  /// Records unconditionally.
  void record(const EnvState& state);

  bool empty() const noexcept { return samples_.empty(); }
  std::size_t size() const noexcept { return samples_.size(); }
  const Snapshot& latest() const;
  /// Samples with time in [latest - window, latest], oldest first.
  std::vector<const Snapshot*> window(double seconds) const;
  const TrafficNetwork& net() const { return *net_; }

 private:
  std::shared_ptr<const TrafficNetwork> net_;
  std::deque<Snapshot> samples_;
};

template <class T>
struct ObservationWindow {
  Id entity;
  std::vector<std::pair<double, T>> samples;
};

std::vector<ObservationWindow<LaneObservation>> read_lane_traffic_states(const History& h, std::span<const Id> lanes,
                                                                         double window);
std::vector<ObservationWindow<HighwayObservation>> read_highway_traffic_states(const History& h,
                                                                               std::span<const Id> segments,
                                                                               double window);
std::vector<ObservationWindow<RampObservation>> read_ramp_lane_traffic_states(const History& h,
                                                                              std::span<const Id> ramps,
                                                                              double window);
std::vector<ObservationWindow<TransitObservation>> read_bus_states(const History& h, std::span<const Id> routes,
                                                                   double window);
std::vector<ObservationWindow<TransitObservation>> read_subway_states(const History& h, std::span<const Id> routes,
                                                                      double window);
ObservationWindow<TaxiObservation> read_taxi_traffic_states(const History& h, double window);

/// Lane-mean aggregates over the zone's lanes (including highways and ramps),
/// averaged over the window's samples.
GlobalObservation analyze_zone_traffic(const History& h, const Id& zone, double window);
NetworkMetrics calculate_network_metrics(const History& h, double window);
GlobalObservation aggregate_lanes(const TrafficNetwork& net, const Snapshot& snap, std::span<const std::size_t> lanes,
                                  std::size_t intersections);

/// Lanes with queue >= queue_threshold or speed <= speed_threshold in the
/// latest sample, by queue descending then id.
std::vector<LaneObservation> identify_congestion_hotspots(const History& h, double queue_threshold,
                                                          double speed_threshold);

struct Forecast {
  Id entity;
  std::string feature;
  int horizon = 1;
  int p = 1;
  int d = 0;
  std::vector<double> coefficients;
  std::vector<double> values;
  bool fallback = false;  // singular regression: last-value forecast
};

/// AR(p) on the d-times differenced series, least squares without intercept,
/// recursive forecast, then un-differenced.
Forecast predict_arima(std::span<const double> series, int horizon, int p, int d);
/// Numeric lane feature over a window, oldest first.
std::vector<double> lane_feature_series(const History& h, const Id& lane, const std::string& feature, double window);

std::vector<TaxiSnapshot> taxi_snapshots(const EnvState& state);
std::vector<Id> rank_idle_taxis_by_distance(std::span<const TaxiSnapshot> fleet, Point target);

nlohmann::json to_json(const LaneObservation& o);
nlohmann::json to_json(const HighwayObservation& o);
nlohmann::json to_json(const RampObservation& o);
nlohmann::json to_json(const TransitObservation& o);
nlohmann::json to_json(const TaxiObservation& o);
nlohmann::json to_json(const GlobalObservation& o);
nlohmann::json to_json(const NetworkMetrics& o);
nlohmann::json to_json(const Forecast& f);

template <class T>
nlohmann::json to_json(const ObservationWindow<T>& w) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& [t, obs] : w.samples) samples.push_back({{"time", t}, {"observation", to_json(obs)}});
  return nlohmann::json{{"entity", w.entity}, {"samples", samples}};
}

}  // namespace utc
