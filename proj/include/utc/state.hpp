#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "utc/demand.hpp"
#include "utc/network.hpp"
#include "utc/plans.hpp"
#include "utc/rng.hpp"

namespace utc {

using VehicleId = std::uint64_t;

enum class VehicleKind : std::uint8_t { car, taxi, bus, subway };
std::string_view to_string(VehicleKind kind) noexcept;

struct ConsumptionModel {
  double bus_g_per_m = 0.07;
  double bus_g_per_idle_s = 0.17;
  double bus_g_per_stop = 5.0;
  double subway_wh_per_m = 2.5;
  double subway_wh_per_stop = 50.0;
};

struct DynamicsParams {
  double start_time = 0.0;
  double dwell_base = 10.0;
  double dwell_per_boarding = 2.0;
  double fare_base = 3.0;
  double fare_per_km = 1.5;
  double recent_order_window = 600.0;
  ConsumptionModel consumption;
};

/// Road vehicle occupying lanes. `pos` indexes the current lane in `path`.
struct Vehicle {
  VehicleId id = 0;
  VehicleKind kind = VehicleKind::car;
  std::uint64_t trip = 0;
  std::vector<std::uint32_t> path;
  std::uint32_t pos = 0;
  double depart_time = 0.0;
  double lane_enter_time = 0.0;
  double queue_since = 0.0;  // also the buffer-entry time before the first lane
  double waiting = 0.0;      // closed halting spells
  double distance = 0.0;
  double highway_distance = 0.0;
  double highway_time = 0.0;
  bool used_ramp = false;
};

struct Traverser {
  VehicleId id = 0;
  double until = 0.0;
};

struct LaneState {
  std::deque<Traverser> traversing;  // ordered by arrival at the queue
  std::vector<Traverser> dwelling;   // transit vehicles stopped at the downstream station
  std::deque<VehicleId> queue;
  std::deque<VehicleId> entry_buffer;  // vehicles waiting to enter from outside the network
  double effective_speed_limit = 0.0;
  double credit = 0.0;
  std::uint64_t entered = 0;
  std::uint64_t exited = 0;

  std::size_t count() const noexcept { return traversing.size() + dwelling.size() + queue.size(); }
};

struct SignalState {
  SignalPlan plan;
  double plan_start = 0.0;
};

struct Passenger {
  std::uint64_t trip = 0;
  double arrival = 0.0;
  std::uint32_t route = 0;
  std::uint32_t alight_stop = 0;  // position in the route's stop sequence
};

struct TransitVehicle {
  std::string name;
  std::uint32_t route = 0;
  VehicleId vehicle = 0;  // road vehicle while on lanes
  bool at_terminal = true;
  double dwell_until = 0.0;
  double departed_at = 0.0;
  std::vector<Passenger> onboard;
  double distance = 0.0;
  double idle = 0.0;
  int stops = 0;
  double consumption = 0.0;  // grams (bus) or watt-hours (subway)
};

struct RouteState {
  TransitSchedule schedule;
  std::uint64_t dispatched = 0;
  std::uint64_t completed_runs = 0;
  double consumption = 0.0;  // cumulative over finished and running vehicles
  double distance = 0.0;
  double idle = 0.0;
  std::uint64_t stops = 0;
};

enum class TaxiStatus : std::uint8_t { idle, pickup, occupied };
std::string_view to_string(TaxiStatus status) noexcept;

struct Taxi {
  Id id;
  TaxiStatus status = TaxiStatus::idle;
  std::uint32_t junction = 0;  // parked junction, or last junction left
  std::uint32_t target = 0;
  std::optional<VehicleId> vehicle;
  std::optional<std::uint64_t> reservation;
  bool repositioning = false;
  double income = 0.0;
  std::uint64_t dropoffs = 0;
  std::deque<double> recent_orders;
  double leg_distance = 0.0;
};

struct Reservation {
  std::uint64_t id = 0;
  std::uint32_t origin = 0;       // junction
  std::uint32_t destination = 0;  // junction
  double request_time = 0.0;
  double pickup_time = 0.0;
};

inline std::string reservation_name(std::uint64_t id) { return "R" + std::to_string(id); }

struct ExitRecord {
  VehicleId id = 0;
  VehicleKind kind = VehicleKind::car;
  double depart = 0.0;
  double exit = 0.0;
  double waiting = 0.0;
  double distance = 0.0;
  double highway_distance = 0.0;
  double highway_time = 0.0;
  bool used_ramp = false;
};

struct BoardRecord {
  std::uint32_t route = 0;
  double time = 0.0;
  double wait = 0.0;
};

struct DropoffRecord {
  double time = 0.0;
  double fare = 0.0;
};

struct Event {
  std::uint64_t tick = 0;
  std::string kind;
  std::string entity;
  double value = 0.0;
};

struct Logs {
  std::vector<ExitRecord> exits;
  std::vector<BoardRecord> boardings;
  std::vector<DropoffRecord> dropoffs;
  std::vector<double> route_consumption;     // cumulative per route
  std::vector<double> ramp_queue_integral;   // vehicle-seconds per lane (ramps only)
  std::uint64_t walk_trips = 0;
  std::uint64_t unroutable_trips = 0;
  std::uint64_t unserved_transit = 0;
  std::uint64_t cancelled_reservations = 0;
};

/// Immutable inputs shared by a state and all of its clones.
struct SimContext {
  std::shared_ptr<const TrafficNetwork> net;
  std::vector<Trip> trips;
  DynamicsParams params;
  /// Road paths between junctions (row-major from x to); nullopt = unreachable.
  std::vector<std::optional<std::vector<std::uint32_t>>> road_paths;
  /// Shortest outgoing road lane per junction, used for intra-junction trips.
  std::vector<std::optional<std::uint32_t>> loop_lane;
  /// Transit options per (origin zone, dest zone, mode): (route, board pos, alight pos).
  std::map<std::tuple<std::uint32_t, std::uint32_t, int>,
           std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>>>
      transit_options;
  std::vector<bool> signalized_gate;  // per lane: discharge governed by a signal
  std::vector<bool> exit_gated;       // per lane: exits wait for a phase serving the lane
};

struct EnvState {
  std::shared_ptr<const SimContext> ctx;
  double clock = 0.0;
  std::uint64_t tick = 0;
  std::size_t next_trip = 0;
  VehicleId next_vehicle = 1;
  std::uint64_t entered = 0;
  std::uint64_t exited = 0;
  CounterRng rng;

  std::vector<LaneState> lanes;
  std::vector<std::optional<SignalState>> signals;  // per junction
  std::vector<double> ramp_open;                    // per lane
  std::vector<RouteState> routes;
  std::vector<std::deque<Passenger>> stations;
  std::map<VehicleId, Vehicle> vehicles;
  std::map<VehicleId, TransitVehicle> transit;  // keyed by the transit run's vehicle id
  std::vector<Taxi> taxis;
  std::vector<Reservation> pending;
  std::map<std::uint64_t, Reservation> assigned;
  std::uint64_t dispatch_digest = 0;

  Logs logs;
  bool record_events = false;
  std::vector<Event> events;

  const TrafficNetwork& net() const noexcept { return *ctx->net; }
  /// Vehicles on lanes; excludes those still waiting to enter.
  std::uint64_t in_network() const noexcept { return entered - exited; }
};

nlohmann::json to_json(const Event& e);

}  // namespace utc
