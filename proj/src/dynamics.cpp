#include "utc/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <set>

#include "utc/controllers.hpp"

namespace utc {

namespace {

constexpr double kEps = 1e-9;
constexpr std::size_t kExit = std::numeric_limits<std::size_t>::max();

void record(EnvState& s, const char* kind, const std::string& entity, double value) {
  if (s.record_events) s.events.push_back(Event{s.tick, kind, entity, value});
}

bool is_transit(VehicleKind k) { return k == VehicleKind::bus || k == VehicleKind::subway; }

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t digest_text(const std::string& text) {
  return fnv_bytes(0xcbf29ce484222325ULL, text.data(), text.size());
}

// ---- construction -------------------------------------------------------

std::shared_ptr<const SimContext> build_context(std::shared_ptr<const TrafficNetwork> net, std::vector<Trip> trips,
                                                DynamicsParams params) {
  auto ctx = std::make_shared<SimContext>();
  const TrafficNetwork& n = *net;
  const std::size_t J = n.junctions().size();
  const std::size_t L = n.lanes().size();

  ctx->road_paths.resize(J * J);
  for (std::size_t a = 0; a < J; ++a) {
    for (std::size_t b = 0; b < J; ++b) {
      auto path = n.shortest_lane_path(a, b);
      if (!path) continue;
      ctx->road_paths[a * J + b] = std::vector<std::uint32_t>(path->begin(), path->end());
    }
  }

  ctx->loop_lane.resize(J);
  for (std::size_t l = 0; l < L; ++l) {
    const Lane& lane = n.lanes()[l];
    if (lane.kind == LaneKind::transit_only) continue;
    auto& best = ctx->loop_lane[n.lane_upstream(l)];
    if (!best || lane.free_flow_time() < n.lanes()[*best].free_flow_time()) best = static_cast<std::uint32_t>(l);
  }

  for (std::size_t r = 0; r < n.routes().size(); ++r) {
    const TransitRoute& route = n.routes()[r];
    const auto& stops = n.route_stops(r);
    const int mode = route.mode == TransitMode::bus ? static_cast<int>(Mode::bus) : static_cast<int>(Mode::subway);
    for (std::size_t a = 0; a < stops.size(); ++a) {
      if (!stops[a]) continue;
      for (std::size_t b = a + 1; b < stops.size(); ++b) {
        if (!stops[b]) continue;
        const auto zo = static_cast<std::uint32_t>(n.zone_index(n.stations()[*stops[a]].zone));
        const auto zd = static_cast<std::uint32_t>(n.zone_index(n.stations()[*stops[b]].zone));
        ctx->transit_options[{zo, zd, mode}].emplace_back(static_cast<std::uint32_t>(r),
                                                          static_cast<std::uint32_t>(a),
                                                          static_cast<std::uint32_t>(b));
      }
    }
  }

  ctx->signalized_gate.assign(L, false);
  ctx->exit_gated.assign(L, false);
  for (std::size_t l = 0; l < L; ++l) {
    const Lane& lane = n.lanes()[l];
    const Junction& j = n.junctions()[n.lane_downstream(l)];
    if (!j.signalized || lane.kind == LaneKind::transit_only) continue;
    ctx->signalized_gate[l] = true;
    for (const Phase& ph : j.phases) {
      for (const Movement& m : ph.green_movements) {
        if (m.from == lane.id) ctx->exit_gated[l] = true;
      }
    }
  }

  ctx->net = std::move(net);
  ctx->trips = std::move(trips);
  ctx->params = params;
  return ctx;
}

// ---- consumption and lane moves ------------------------------------------

void add_consumption(EnvState& s, TransitVehicle& tv, VehicleKind kind, double meters, double idle, int stops) {
  const double c = consumption_update(kind, meters, idle, stops, s.ctx->params.consumption);
  tv.consumption += c;
  tv.distance += meters;
  tv.idle += idle;
  tv.stops += stops;
  RouteState& rs = s.routes[tv.route];
  rs.consumption += c;
  rs.distance += meters;
  rs.idle += idle;
  rs.stops += static_cast<std::uint64_t>(stops);
  s.logs.route_consumption[tv.route] += c;
}

void enter_lane(EnvState& s, Vehicle& v, std::size_t l, double t) {
  LaneState& ls = s.lanes[l];
  const Lane& lane = s.net().lanes()[l];
  v.lane_enter_time = t;
  double until = t + lane.length / ls.effective_speed_limit;
  if (!ls.traversing.empty()) until = std::max(until, ls.traversing.back().until);
  ls.traversing.push_back(Traverser{v.id, until});
  ++ls.entered;
}

void leave_lane(EnvState& s, Vehicle& v, std::size_t l, double t) {
  const Lane& lane = s.net().lanes()[l];
  const double halted = std::max(0.0, t - v.queue_since);
  v.waiting += halted;
  v.distance += lane.length;
  if (lane.kind == LaneKind::highway_segment) {
    v.highway_distance += lane.length;
    v.highway_time += t - v.lane_enter_time;
  }
  if (lane.kind == LaneKind::ramp) v.used_ramp = true;
  ++s.lanes[l].exited;
  if (is_transit(v.kind)) add_consumption(s, s.transit.at(v.id), v.kind, lane.length, halted, 0);
}

VehicleId spawn_vehicle(EnvState& s, VehicleKind kind, std::vector<std::uint32_t> path, double depart, double ready,
                        std::uint64_t trip, std::optional<VehicleId> id = std::nullopt) {
  Vehicle v;
  v.id = id ? *id : s.next_vehicle++;
  v.kind = kind;
  v.trip = trip;
  v.path = std::move(path);
  v.depart_time = depart;
  v.queue_since = ready;
  const std::uint32_t first = v.path.front();
  const VehicleId vid = v.id;
  s.vehicles.emplace(vid, std::move(v));
  s.lanes[first].entry_buffer.push_back(vid);
  return vid;
}

// ---- transit -------------------------------------------------------------

/// Alight and board at stop position `pos`; returns the dwell time when the
/// route serves a station there.
std::optional<double> serve_stop(EnvState& s, TransitVehicle& tv, std::size_t pos, double t) {
  const TrafficNetwork& net = s.net();
  const auto& stops = net.route_stops(tv.route);
  if (pos >= stops.size() || !stops[pos]) return std::nullopt;
  const std::size_t st = *stops[pos];
  const TransitRoute& route = net.routes()[tv.route];

  std::erase_if(tv.onboard, [&](const Passenger& p) { return p.alight_stop == pos; });

  std::deque<Passenger>& queue = s.stations[st];
  std::deque<Passenger> rest;
  int boarded = 0;
  for (Passenger& p : queue) {
    if (p.route == tv.route && p.alight_stop > pos &&
        tv.onboard.size() < static_cast<std::size_t>(route.vehicle_capacity)) {
      s.logs.boardings.push_back(BoardRecord{tv.route, t, t - p.arrival});
      tv.onboard.push_back(p);
      ++boarded;
    } else {
      rest.push_back(p);
    }
  }
  queue.swap(rest);

  const DynamicsParams& params = s.ctx->params;
  double dwell = params.dwell_base + params.dwell_per_boarding * boarded;
  const auto& overrides = s.routes[tv.route].schedule.dwell_overrides;
  if (auto it = overrides.find(net.stations()[st].id); it != overrides.end()) dwell = std::max(dwell, it->second);
  const VehicleKind kind = route.mode == TransitMode::bus ? VehicleKind::bus : VehicleKind::subway;
  add_consumption(s, tv, kind, 0.0, dwell, 1);
  record(s, "transit_stop", tv.name + "@" + net.stations()[st].id, boarded);
  return dwell;
}

void transit_step(EnvState& s, double t0, double t1) {
  const TrafficNetwork& net = s.net();
  for (std::size_t r = 0; r < net.routes().size(); ++r) {
    for (double dep : departures(s.routes[r].schedule, t0, t1)) {
      RouteState& rs = s.routes[r];
      TransitVehicle tv;
      tv.route = static_cast<std::uint32_t>(r);
      tv.vehicle = s.next_vehicle++;
      tv.name = net.routes()[r].id + "#" + std::to_string(++rs.dispatched);
      tv.departed_at = dep;
      const double dwell = serve_stop(s, tv, 0, t1).value_or(0.0);
      tv.dwell_until = t1 + dwell;
      record(s, "transit_departure", tv.name, dep);
      s.transit.emplace(tv.vehicle, std::move(tv));
    }
  }
  for (auto& [id, tv] : s.transit) {
    if (!tv.at_terminal || tv.dwell_until > t1 + kEps) continue;
    const TransitRoute& route = net.routes()[tv.route];
    std::vector<std::uint32_t> path;
    for (const Id& e : route.edge_sequence) path.push_back(static_cast<std::uint32_t>(net.lane_index(e)));
    const VehicleKind kind = route.mode == TransitMode::bus ? VehicleKind::bus : VehicleKind::subway;
    spawn_vehicle(s, kind, std::move(path), tv.departed_at, t1, 0, id);
    tv.at_terminal = false;
  }
}

// ---- taxis -------------------------------------------------------------

std::size_t taxi_index(const EnvState& s, const Id& id) {
  for (std::size_t k = 0; k < s.taxis.size(); ++k) {
    if (s.taxis[k].id == id) return k;
  }
  throw Error(Errc::not_found, "unknown taxi '" + id + "'");
}

bool start_leg(EnvState& s, std::size_t k, std::uint32_t target, double ready, bool occupied) {
  Taxi& tx = s.taxis[k];
  const std::size_t J = s.net().junctions().size();
  std::vector<std::uint32_t> path;
  std::uint32_t end = target;
  if (tx.junction == target) {
    if (!occupied) return false;
    const auto loop = s.ctx->loop_lane[target];
    if (!loop) return false;
    path = {*loop};
    end = static_cast<std::uint32_t>(s.net().lane_downstream(*loop));
  } else {
    const auto& p = s.ctx->road_paths[tx.junction * J + target];
    if (!p || p->empty()) return false;
    path = *p;
  }
  tx.vehicle = spawn_vehicle(s, VehicleKind::taxi, std::move(path), ready, ready, 0);
  tx.target = end;
  return true;
}

void cancel(EnvState& s, std::size_t k) {
  Taxi& tx = s.taxis[k];
  if (tx.reservation) {
    s.assigned.erase(*tx.reservation);
    record(s, "reservation_cancelled", reservation_name(*tx.reservation), 0.0);
  }
  ++s.logs.cancelled_reservations;
  tx.reservation.reset();
  tx.status = TaxiStatus::idle;
}

void begin_trip(EnvState& s, std::size_t k, double t) {
  Taxi& tx = s.taxis[k];
  Reservation& res = s.assigned.at(*tx.reservation);
  res.pickup_time = t;
  tx.status = TaxiStatus::occupied;
  record(s, "pickup", tx.id, static_cast<double>(res.id));
  if (!start_leg(s, k, res.destination, t, true)) cancel(s, k);
}

void assign(EnvState& s, std::size_t k, std::size_t pending_pos, double t) {
  const Reservation res = s.pending[pending_pos];
  s.pending.erase(s.pending.begin() + static_cast<std::ptrdiff_t>(pending_pos));
  s.assigned.emplace(res.id, res);
  Taxi& tx = s.taxis[k];
  tx.status = TaxiStatus::pickup;
  tx.reservation = res.id;
  tx.repositioning = false;
  record(s, "assign", tx.id, static_cast<double>(res.id));
  if (tx.junction == res.origin) {
    begin_trip(s, k, t);
  } else if (!start_leg(s, k, res.origin, t, false)) {
    cancel(s, k);
  }
}

void finish_leg(EnvState& s, std::size_t k, double t, double meters) {
  Taxi& tx = s.taxis[k];
  tx.vehicle.reset();
  tx.junction = tx.target;
  tx.leg_distance = meters;
  switch (tx.status) {
    case TaxiStatus::pickup:
      begin_trip(s, k, t);
      break;
    case TaxiStatus::occupied: {
      const DynamicsParams& p = s.ctx->params;
      const double fare = p.fare_base + p.fare_per_km * meters / 1000.0;
      tx.income += fare;
      ++tx.dropoffs;
      tx.recent_orders.push_back(t);
      while (!tx.recent_orders.empty() && tx.recent_orders.front() <= t - p.recent_order_window) {
        tx.recent_orders.pop_front();
      }
      s.logs.dropoffs.push_back(DropoffRecord{t, fare});
      s.assigned.erase(*tx.reservation);
      tx.reservation.reset();
      tx.status = TaxiStatus::idle;
      record(s, "dropoff", tx.id, fare);
      break;
    }
    case TaxiStatus::idle:
      tx.repositioning = false;
      break;
  }
}

bool parked_idle(const Taxi& tx) { return tx.status == TaxiStatus::idle && !tx.vehicle; }

void taxi_step(EnvState& s, double t0) {
  if (s.pending.empty()) return;
  const TrafficNetwork& net = s.net();
  std::vector<TaxiSnapshot> fleet;
  fleet.reserve(s.taxis.size());
  for (const Taxi& tx : s.taxis) fleet.push_back({tx.id, parked_idle(tx), net.junctions()[tx.junction].position});
  std::vector<ReservationSnapshot> res;
  res.reserve(s.pending.size());
  for (const Reservation& r : s.pending) {
    res.push_back({reservation_name(r.id), net.junctions()[r.origin].position, r.request_time});
  }
  const DispatchAssignment plan = greedy_dispatch(fleet, res);
  for (const auto& [taxi, rname] : plan.assignments) {
    const auto it = std::find_if(s.pending.begin(), s.pending.end(),
                                 [&](const Reservation& r) { return reservation_name(r.id) == rname; });
    assign(s, taxi_index(s, taxi), static_cast<std::size_t>(it - s.pending.begin()), t0);
  }
}

// ---- actions -------------------------------------------------------------

void apply_actions(EnvState& s, const ActionBundle& a, double t0) {
  const TrafficNetwork& net = s.net();
  if (a.empty()) return;
  const ValidationReport report = validate_action(net, a);
  if (!report.ok()) throw Error(Errc::invalid_action, report.first_failure());

  for (const auto& [id, plan] : a.signals) {
    auto& sig = s.signals[net.junction_index(id)];
    if (sig->plan == plan) continue;
    sig->plan = plan;
    sig->plan_start = t0;
    record(s, "signal_plan", id, plan.cycle_time);
  }
  for (const auto& [id, plan] : a.speed_limits) {
    LaneState& ls = s.lanes[net.lane_index(id)];
    if (ls.effective_speed_limit == plan.limit) continue;
    ls.effective_speed_limit = plan.limit;
    record(s, "speed_limit", id, plan.limit);
  }
  for (const auto& [id, plan] : a.ramps) {
    double& open = s.ramp_open[net.lane_index(id)];
    if (open == plan.open_duration) continue;
    open = plan.open_duration;
    record(s, "ramp_meter", id, open);
  }
  for (const auto& [id, sched] : a.transit) {
    RouteState& rs = s.routes[net.route_index(id)];
    if (rs.schedule == sched) continue;
    rs.schedule = sched;
    record(s, "transit_schedule", id, sched.headway);
  }
  if (!a.dispatch || a.dispatch->empty()) return;
  // Dispatch orders are one-shot: re-applying the same order set is a no-op.
  const std::uint64_t digest = digest_text(nlohmann::json(*a.dispatch).dump());
  if (digest == s.dispatch_digest) return;
  s.dispatch_digest = digest;
  for (const auto& [taxi, rname] : a.dispatch->assignments) {
    const std::size_t k = taxi_index(s, taxi);
    const auto it = std::find_if(s.pending.begin(), s.pending.end(),
                                 [&](const Reservation& r) { return reservation_name(r.id) == rname; });
    if (!parked_idle(s.taxis[k]) || it == s.pending.end()) {
      record(s, "dispatch_skipped", taxi, 0.0);
      continue;
    }
    assign(s, k, static_cast<std::size_t>(it - s.pending.begin()), t0);
  }
  for (const auto& [taxi, zone] : a.dispatch->repositions) {
    const std::size_t k = taxi_index(s, taxi);
    if (!parked_idle(s.taxis[k])) {
      record(s, "reposition_skipped", taxi, 0.0);
      continue;
    }
    const auto target = static_cast<std::uint32_t>(net.zone_anchor(net.zone_index(zone)));
    if (start_leg(s, k, target, t0, false)) {
      s.taxis[k].repositioning = true;
      record(s, "reposition", taxi, target);
    }
  }
}

// ---- demand injection ----------------------------------------------------

void inject(EnvState& s, double t0, double t1) {
  const SimContext& ctx = *s.ctx;
  const TrafficNetwork& net = s.net();
  const std::size_t J = net.junctions().size();
  while (s.next_trip < ctx.trips.size() && ctx.trips[s.next_trip].departure_time < t1) {
    const Trip& trip = ctx.trips[s.next_trip++];
    const std::size_t zo = net.zone_index(trip.origin);
    const std::size_t zd = net.zone_index(trip.destination);
    const auto a = static_cast<std::uint32_t>(net.zone_anchor(zo));
    const auto b = static_cast<std::uint32_t>(net.zone_anchor(zd));
    switch (trip.mode) {
      case Mode::walk:
        ++s.logs.walk_trips;
        break;
      case Mode::vehicle: {
        std::optional<std::vector<std::uint32_t>> path;
        if (a == b) {
          if (ctx.loop_lane[a]) path = std::vector<std::uint32_t>{*ctx.loop_lane[a]};
        } else {
          path = ctx.road_paths[a * J + b];
        }
        if (!path || path->empty()) {
          ++s.logs.unroutable_trips;
          break;
        }
        spawn_vehicle(s, VehicleKind::car, *path, trip.departure_time, t0, trip.id);
        break;
      }
      case Mode::bus:
      case Mode::subway: {
        const auto it = ctx.transit_options.find(
            {static_cast<std::uint32_t>(zo), static_cast<std::uint32_t>(zd), static_cast<int>(trip.mode)});
        if (it == ctx.transit_options.end() || it->second.empty()) {
          ++s.logs.unserved_transit;
          break;
        }
        const auto& options = it->second;
        const auto& [route, board, alight] = options[options.size() == 1 ? 0 : s.rng.next() % options.size()];
        const std::size_t st = *net.route_stops(route)[board];
        s.stations[st].push_back(Passenger{trip.id, trip.departure_time, route, alight});
        break;
      }
      case Mode::taxi:
        s.pending.push_back(Reservation{trip.id, a, b, trip.departure_time, 0.0});
        break;
    }
  }
}

void place_entries(EnvState& s, double t0, double t1) {
  const TrafficNetwork& net = s.net();
  for (std::size_t l = 0; l < s.lanes.size(); ++l) {
    LaneState& ls = s.lanes[l];
    const auto storage = static_cast<std::size_t>(net.lanes()[l].storage_capacity());
    while (!ls.entry_buffer.empty() && ls.count() < storage) {
      Vehicle& v = s.vehicles.at(ls.entry_buffer.front());
      ls.entry_buffer.pop_front();
      const double held = std::max(0.0, t0 - v.queue_since);
      v.waiting += held;
      if (is_transit(v.kind)) add_consumption(s, s.transit.at(v.id), v.kind, 0.0, held, 0);
      enter_lane(s, v, l, t1);
      ++s.entered;
    }
  }
}

// ---- lanes ---------------------------------------------------------------

void exit_vehicle(EnvState& s, VehicleId id, double t) {
  auto node = s.vehicles.extract(id);
  const Vehicle& v = node.mapped();
  s.logs.exits.push_back(ExitRecord{v.id, v.kind, v.depart_time, t, v.waiting, v.distance, v.highway_distance,
                                    v.highway_time, v.used_ramp});
  ++s.exited;
  record(s, "exit", std::to_string(v.id), t - v.depart_time);
  if (is_transit(v.kind)) {
    ++s.routes[s.transit.at(id).route].completed_runs;
    s.transit.erase(id);
  } else if (v.kind == VehicleKind::taxi) {
    for (std::size_t k = 0; k < s.taxis.size(); ++k) {
      if (s.taxis[k].vehicle == id) {
        finish_leg(s, k, t, v.distance);
        break;
      }
    }
  }
}

void arrive(EnvState& s, std::size_t l, VehicleId id, double t) {
  Vehicle& v = s.vehicles.at(id);
  LaneState& ls = s.lanes[l];
  if (is_transit(v.kind)) {
    if (auto dwell = serve_stop(s, s.transit.at(id), v.pos + 1, t)) {
      ls.dwelling.push_back(Traverser{id, t + *dwell});
      return;
    }
  }
  ls.queue.push_back(id);
  v.queue_since = t;
}

bool ramp_closed(const EnvState& s, std::size_t l, double t) {
  if (s.net().lanes()[l].kind != LaneKind::ramp) return false;
  const double open = s.ramp_open[l];
  if (open >= kRampMeterCycle) return false;
  double u = std::fmod(t, kRampMeterCycle);
  if (u < 0.0) u += kRampMeterCycle;
  return u >= open;
}

void lanes_step(EnvState& s, double t0, double t1, double dt) {
  const TrafficNetwork& net = s.net();
  const std::size_t L = s.lanes.size();

  for (std::size_t l = 0; l < L; ++l) {
    LaneState& ls = s.lanes[l];
    while (!ls.traversing.empty() && ls.traversing.front().until <= t1 + kEps) {
      const VehicleId id = ls.traversing.front().id;
      ls.traversing.pop_front();
      arrive(s, l, id, t1);
    }
    if (ls.dwelling.empty()) continue;
    std::sort(ls.dwelling.begin(), ls.dwelling.end(), [](const Traverser& a, const Traverser& b) {
      return a.until != b.until ? a.until < b.until : a.id < b.id;
    });
    while (!ls.dwelling.empty() && ls.dwelling.front().until <= t1 + kEps) {
      const VehicleId id = ls.dwelling.front().id;
      ls.dwelling.erase(ls.dwelling.begin());
      ls.queue.push_back(id);
      s.vehicles.at(id).queue_since = t1;
    }
  }

  for (std::size_t l = 0; l < L; ++l) {
    LaneState& ls = s.lanes[l];
    ls.credit += net.lanes()[l].saturation_flow * dt;
    const bool closed = ramp_closed(s, l, t0);
    while (!ls.queue.empty()) {
      Vehicle& v = s.vehicles.at(ls.queue.front());
      const bool last = v.pos + 1 >= v.path.size();
      const std::size_t next = last ? kExit : v.path[v.pos + 1];
      if (closed || !movement_green(s, l, next, t0)) {
        ls.credit = 0.0;
        break;
      }
      if (!last) {
        const auto storage = static_cast<std::size_t>(net.lanes()[next].storage_capacity());
        if (s.lanes[next].count() >= storage) {
          ls.credit = std::min(ls.credit, 1.0);
          break;
        }
      }
      if (ls.credit < 1.0 - kEps) break;
      ls.credit -= 1.0;
      ls.queue.pop_front();
      leave_lane(s, v, l, t1);
      if (last) {
        exit_vehicle(s, v.id, t1);
      } else {
        ++v.pos;
        enter_lane(s, v, next, t1);
      }
    }
    if (ls.queue.empty()) ls.credit = std::min(ls.credit, 1.0);
  }

  for (std::size_t l = 0; l < L; ++l) {
    if (net.lanes()[l].kind == LaneKind::ramp) {
      s.logs.ramp_queue_integral[l] += static_cast<double>(s.lanes[l].queue.size()) * dt;
    }
  }
}

// ---- hashing -------------------------------------------------------------

class Hasher {
 public:
  void u(std::uint64_t v) { h_ = fnv_bytes(h_, &v, sizeof v); }
  void d(double v) {
    if (v == 0.0) v = 0.0;  // fold -0
    u(std::bit_cast<std::uint64_t>(v));
  }
  void str(const std::string& v) {
    u(v.size());
    h_ = fnv_bytes(h_, v.data(), v.size());
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

std::string_view to_string(VehicleKind kind) noexcept {
  switch (kind) {
    case VehicleKind::car: return "car";
    case VehicleKind::taxi: return "taxi";
    case VehicleKind::bus: return "bus";
    case VehicleKind::subway: return "subway";
  }
  return "car";
}

std::string_view to_string(TaxiStatus status) noexcept {
  switch (status) {
    case TaxiStatus::idle: return "idle";
    case TaxiStatus::pickup: return "pickup";
    case TaxiStatus::occupied: return "occupied";
  }
  return "idle";
}

nlohmann::json to_json(const Event& e) {
  return nlohmann::json{{"tick", e.tick}, {"kind", e.kind}, {"entity", e.entity}, {"value", e.value}};
}

EnvState init_state(std::shared_ptr<const TrafficNetwork> net, std::vector<Trip> trips, std::size_t fleet_size,
                    std::uint64_t seed, DynamicsParams params) {
  if (!net) throw Error(Errc::precondition, "init_state: no network");
  for (std::size_t i = 1; i < trips.size(); ++i) {
    if (trips[i].departure_time < trips[i - 1].departure_time) {
      throw Error(Errc::precondition, "init_state: trips must be sorted by departure_time (trip " +
                                          std::to_string(trips[i].id) + " out of order)");
    }
  }
  for (const Trip& t : trips) {
    if (!net->find_zone(t.origin) || !net->find_zone(t.destination)) {
      throw Error(Errc::precondition, "init_state: trip " + std::to_string(t.id) + " references an unknown zone");
    }
  }

  EnvState s;
  s.ctx = build_context(std::move(net), std::move(trips), params);
  const TrafficNetwork& n = s.net();
  s.clock = params.start_time;
  s.rng = CounterRng(hash_key({seed, 0x656e76ULL}));
  while (s.next_trip < s.ctx->trips.size() && s.ctx->trips[s.next_trip].departure_time < params.start_time) {
    ++s.next_trip;
  }

  s.lanes.resize(n.lanes().size());
  for (std::size_t l = 0; l < n.lanes().size(); ++l) s.lanes[l].effective_speed_limit = n.lanes()[l].speed_limit;
  s.signals.resize(n.junctions().size());
  for (std::size_t j = 0; j < n.junctions().size(); ++j) {
    const Junction& junction = n.junctions()[j];
    if (junction.signalized) s.signals[j] = SignalState{uniform_plan(junction), s.clock};
  }
  s.ramp_open.assign(n.lanes().size(), kRampMeterCycle);
  for (const TransitRoute& r : n.routes()) {
    RouteState rs;
    rs.schedule = fixed_headway_schedule(r, r.default_headway);
    s.routes.push_back(std::move(rs));
  }
  s.stations.resize(n.stations().size());
  for (std::size_t k = 0; k < fleet_size; ++k) {
    Taxi tx;
    char name[32];
    std::snprintf(name, sizeof name, "taxi_%03zu", k);
    tx.id = name;
    tx.junction = static_cast<std::uint32_t>(n.zone_anchor(k % n.zones().size()));
    tx.target = tx.junction;
    s.taxis.push_back(std::move(tx));
  }
  s.logs.route_consumption.assign(n.routes().size(), 0.0);
  s.logs.ramp_queue_integral.assign(n.lanes().size(), 0.0);
  return s;
}

void step(EnvState& s, const ActionBundle& actions, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(Errc::precondition, "step: dt must be positive");
  const double t0 = s.clock;
  const double t1 = t0 + dt;
  inject(s, t0, t1);
  apply_actions(s, actions, t0);
  transit_step(s, t0, t1);
  taxi_step(s, t0);
  place_entries(s, t0, t1);
  lanes_step(s, t0, t1, dt);
  s.clock = t1;
  ++s.tick;
}

HorizonResult run_horizon(EnvState state, const ActionBundle& actions, double horizon, double dt,
                          std::span<const Task> tasks) {
  if (!(dt > 0.0)) throw Error(Errc::precondition, "run_horizon: dt must be positive");
  if (horizon < 0.0) throw Error(Errc::precondition, "run_horizon: negative horizon");
  const double steps = std::round(horizon / dt);
  if (std::abs(steps * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw Error(Errc::precondition, "run_horizon: horizon must be a multiple of dt");
  }
  const LogCursor cursor = log_cursor(state);
  for (long long i = 0; i < static_cast<long long>(steps); ++i) step(state, actions, dt);
  HorizonMetrics metrics = eval_task_metrics(state, cursor, tasks);
  return HorizonResult{std::move(state), std::move(metrics)};
}

double consumption_update(VehicleKind kind, double meters, double idle_seconds, double stops,
                          const ConsumptionModel& m) {
  if (meters < 0.0 || idle_seconds < 0.0 || stops < 0.0) {
    throw Error(Errc::precondition, "consumption_update: inputs must be >= 0");
  }
  switch (kind) {
    case VehicleKind::bus:
      return m.bus_g_per_m * meters + m.bus_g_per_idle_s * idle_seconds + m.bus_g_per_stop * stops;
    case VehicleKind::subway:
      return m.subway_wh_per_m * meters + m.subway_wh_per_stop * stops;
    default:
      return 0.0;
  }
}

std::optional<std::size_t> active_phase(const SignalState& signal, const Junction& junction, double t) {
  const SignalPlan& plan = signal.plan;
  if (!(plan.cycle_time > 0.0) || plan.greens.empty()) return std::nullopt;
  double green_sum = 0.0;
  for (double g : plan.greens) green_sum += g;
  const double lost = std::max(0.0, plan.cycle_time - green_sum) / static_cast<double>(plan.greens.size());
  double u = std::fmod(t - signal.plan_start, plan.cycle_time);
  if (u < 0.0) u += plan.cycle_time;
  for (std::size_t k = 0; k < plan.greens.size() && k < junction.phases.size(); ++k) {
    if (u < plan.greens[k]) return k;
    u -= plan.greens[k];
    if (u < lost) return std::nullopt;
    u -= lost;
  }
  return std::nullopt;
}

bool movement_green(const EnvState& s, std::size_t from_lane, std::size_t to_lane, double t) {
  const SimContext& ctx = *s.ctx;
  if (!ctx.signalized_gate[from_lane]) return true;
  if (to_lane == kExit && !ctx.exit_gated[from_lane]) return true;
  const TrafficNetwork& net = s.net();
  const std::size_t j = net.lane_downstream(from_lane);
  const auto& sig = s.signals[j];
  if (!sig) return true;
  const Junction& junction = net.junctions()[j];
  const auto phase = active_phase(*sig, junction, t);
  if (!phase) return false;
  const Id& from = net.lanes()[from_lane].id;
  for (const Movement& m : junction.phases[*phase].green_movements) {
    if (to_lane == kExit ? m.from == from : m.matches(from, net.lanes()[to_lane].id)) return true;
  }
  return false;
}

double green_fraction(const EnvState& s, std::size_t lane) {
  const TrafficNetwork& net = s.net();
  if (net.lanes()[lane].kind == LaneKind::ramp) return s.ramp_open[lane] / kRampMeterCycle;
  if (!s.ctx->signalized_gate[lane]) return 1.0;
  const std::size_t j = net.lane_downstream(lane);
  const auto& sig = s.signals[j];
  if (!sig || !(sig->plan.cycle_time > 0.0)) return 1.0;
  const Junction& junction = net.junctions()[j];
  const Id& id = net.lanes()[lane].id;
  double green = 0.0;
  bool served = false;
  for (std::size_t k = 0; k < junction.phases.size() && k < sig->plan.greens.size(); ++k) {
    const auto& mv = junction.phases[k].green_movements;
    if (std::any_of(mv.begin(), mv.end(), [&](const Movement& m) { return m.from == id; })) {
      green += sig->plan.greens[k];
      served = true;
    }
  }
  if (!served) return 1.0;
  return std::min(1.0, green / sig->plan.cycle_time);
}

double current_waiting(const EnvState& s, const Vehicle& v) {
  // An open halting spell runs while the vehicle sits in a queue or entry buffer.
  const LaneState& ls = s.lanes[v.path[v.pos]];
  const bool queued = std::find(ls.queue.begin(), ls.queue.end(), v.id) != ls.queue.end();
  const bool buffered = v.pos == 0 && std::find(ls.entry_buffer.begin(), ls.entry_buffer.end(), v.id) !=
                                          ls.entry_buffer.end();
  if (queued || buffered) return v.waiting + std::max(0.0, s.clock - v.queue_since);
  return v.waiting;
}

VehicleId place_queued_vehicle(EnvState& s, std::size_t lane, std::vector<std::uint32_t> path) {
  const TrafficNetwork& net = s.net();
  if (lane >= s.lanes.size()) throw Error(Errc::not_found, "place_queued_vehicle: unknown lane");
  if (path.empty()) path = {static_cast<std::uint32_t>(lane)};
  if (path.front() != lane) throw Error(Errc::precondition, "place_queued_vehicle: path must start at the lane");
  LaneState& ls = s.lanes[lane];
  if (ls.count() >= static_cast<std::size_t>(net.lanes()[lane].storage_capacity())) {
    throw Error(Errc::precondition, "place_queued_vehicle: lane " + net.lanes()[lane].id + " is full");
  }
  Vehicle v;
  v.id = s.next_vehicle++;
  v.kind = VehicleKind::car;
  v.path = std::move(path);
  v.depart_time = s.clock;
  v.lane_enter_time = s.clock;
  v.queue_since = s.clock;
  const VehicleId id = v.id;
  s.vehicles.emplace(id, std::move(v));
  ls.queue.push_back(id);
  ++ls.entered;
  ++s.entered;
  return id;
}

std::uint64_t state_hash(const EnvState& s) {
  Hasher h;
  h.d(s.clock);
  h.u(s.tick);
  h.u(s.next_trip);
  h.u(s.next_vehicle);
  h.u(s.entered);
  h.u(s.exited);
  h.u(s.rng.key());
  h.u(s.rng.counter());
  for (const LaneState& ls : s.lanes) {
    h.d(ls.effective_speed_limit);
    h.d(ls.credit);
    h.u(ls.entered);
    h.u(ls.exited);
    h.u(ls.traversing.size());
    for (const Traverser& t : ls.traversing) {
      h.u(t.id);
      h.d(t.until);
    }
    h.u(ls.dwelling.size());
    for (const Traverser& t : ls.dwelling) {
      h.u(t.id);
      h.d(t.until);
    }
    h.u(ls.queue.size());
    for (VehicleId id : ls.queue) h.u(id);
    h.u(ls.entry_buffer.size());
    for (VehicleId id : ls.entry_buffer) h.u(id);
  }
  for (const auto& sig : s.signals) {
    h.u(sig.has_value());
    if (!sig) continue;
    h.d(sig->plan.cycle_time);
    for (double g : sig->plan.greens) h.d(g);
    h.d(sig->plan_start);
  }
  for (double o : s.ramp_open) h.d(o);
  for (const RouteState& r : s.routes) {
    h.d(r.schedule.headway);
    h.d(r.schedule.service_start);
    h.d(r.schedule.service_end);
    for (const auto& [st, dwell] : r.schedule.dwell_overrides) {
      h.str(st);
      h.d(dwell);
    }
    h.u(r.dispatched);
    h.u(r.completed_runs);
    h.d(r.consumption);
    h.d(r.distance);
    h.d(r.idle);
    h.u(r.stops);
  }
  for (const auto& q : s.stations) {
    h.u(q.size());
    for (const Passenger& p : q) {
      h.u(p.trip);
      h.d(p.arrival);
      h.u(p.route);
      h.u(p.alight_stop);
    }
  }
  h.u(s.vehicles.size());
  for (const auto& [id, v] : s.vehicles) {
    h.u(id);
    h.u(static_cast<std::uint64_t>(v.kind));
    h.u(v.trip);
    for (auto l : v.path) h.u(l);
    h.u(v.pos);
    h.d(v.depart_time);
    h.d(v.lane_enter_time);
    h.d(v.queue_since);
    h.d(v.waiting);
    h.d(v.distance);
    h.d(v.highway_distance);
    h.d(v.highway_time);
    h.u(v.used_ramp);
  }
  h.u(s.transit.size());
  for (const auto& [id, tv] : s.transit) {
    h.u(id);
    h.str(tv.name);
    h.u(tv.at_terminal);
    h.d(tv.dwell_until);
    h.d(tv.departed_at);
    h.u(tv.onboard.size());
    for (const Passenger& p : tv.onboard) h.u(p.trip);
    h.d(tv.distance);
    h.d(tv.idle);
    h.u(static_cast<std::uint64_t>(tv.stops));
    h.d(tv.consumption);
  }
  for (const Taxi& tx : s.taxis) {
    h.str(tx.id);
    h.u(static_cast<std::uint64_t>(tx.status));
    h.u(tx.junction);
    h.u(tx.target);
    h.u(tx.vehicle.value_or(0));
    h.u(tx.reservation.value_or(0));
    h.u(tx.repositioning);
    h.d(tx.income);
    h.u(tx.dropoffs);
    for (double t : tx.recent_orders) h.d(t);
  }
  h.u(s.pending.size());
  for (const Reservation& r : s.pending) {
    h.u(r.id);
    h.d(r.request_time);
  }
  h.u(s.assigned.size());
  for (const auto& [id, r] : s.assigned) {
    h.u(id);
    h.d(r.pickup_time);
  }
  h.u(s.dispatch_digest);
  h.u(s.logs.exits.size());
  for (const ExitRecord& e : s.logs.exits) {
    h.u(e.id);
    h.d(e.exit);
    h.d(e.waiting);
  }
  h.u(s.logs.boardings.size());
  for (const BoardRecord& b : s.logs.boardings) h.d(b.wait);
  h.u(s.logs.dropoffs.size());
  for (const DropoffRecord& d : s.logs.dropoffs) h.d(d.fare);
  for (double c : s.logs.route_consumption) h.d(c);
  for (double q : s.logs.ramp_queue_integral) h.d(q);
  h.u(s.logs.walk_trips);
  h.u(s.logs.unroutable_trips);
  h.u(s.logs.unserved_transit);
  h.u(s.logs.cancelled_reservations);
  return h.value();
}

std::optional<std::string> check_invariants(const EnvState& s) {
  const TrafficNetwork& net = s.net();
  std::uint64_t on_lanes = 0;
  std::set<VehicleId> seen;
  std::size_t located = 0;
  auto locate = [&](VehicleId id) -> bool {
    ++located;
    return seen.insert(id).second && s.vehicles.count(id) > 0;
  };
  for (std::size_t l = 0; l < s.lanes.size(); ++l) {
    const LaneState& ls = s.lanes[l];
    const auto storage = static_cast<std::size_t>(net.lanes()[l].storage_capacity());
    if (ls.count() > storage) {
      return "lane " + net.lanes()[l].id + " holds " + std::to_string(ls.count()) + " > storage " +
             std::to_string(storage);
    }
    on_lanes += ls.count();
    for (const Traverser& t : ls.traversing) {
      if (!locate(t.id)) return "vehicle " + std::to_string(t.id) + " misplaced on " + net.lanes()[l].id;
    }
    for (const Traverser& t : ls.dwelling) {
      if (!locate(t.id)) return "vehicle " + std::to_string(t.id) + " misplaced on " + net.lanes()[l].id;
    }
    for (VehicleId id : ls.queue) {
      if (!locate(id)) return "vehicle " + std::to_string(id) + " misplaced on " + net.lanes()[l].id;
    }
    for (VehicleId id : ls.entry_buffer) {
      if (!locate(id)) return "vehicle " + std::to_string(id) + " misplaced in entry buffer";
    }
  }
  if (on_lanes != s.entered - s.exited) {
    return "conservation: entered " + std::to_string(s.entered) + " != in-network " + std::to_string(on_lanes) +
           " + exited " + std::to_string(s.exited);
  }
  if (located != s.vehicles.size()) {
    return "vehicle table holds " + std::to_string(s.vehicles.size()) + " entries but " + std::to_string(located) +
           " are located";
  }
  std::set<std::uint64_t> booked;
  for (const Taxi& tx : s.taxis) {
    if (tx.status == TaxiStatus::idle) {
      if (tx.reservation) return "idle taxi " + tx.id + " holds a reservation";
      continue;
    }
    if (!tx.reservation || !s.assigned.count(*tx.reservation)) return "taxi " + tx.id + " lacks its reservation";
    if (!booked.insert(*tx.reservation).second) return "reservation booked twice";
  }
  if (booked.size() != s.assigned.size()) return "assigned reservation without a taxi";
  for (const auto& [id, tv] : s.transit) {
    if (tv.onboard.size() > static_cast<std::size_t>(net.routes()[tv.route].vehicle_capacity)) {
      return "transit vehicle " + tv.name + " over capacity";
    }
  }
  return std::nullopt;
}

}  // namespace utc
