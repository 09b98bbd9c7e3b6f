#include "utc/observe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "utc/dynamics.hpp"

namespace utc {

namespace {

constexpr double kEps = 1e-9;

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double vehicle_speed(const Lane& lane, const Vehicle& v, const Traverser& t) {
  const double span = t.until - v.lane_enter_time;
  if (!(span > kEps)) return lane.speed_limit;
  return lane.length / span;
}

LaneObservation observe_lane(const EnvState& s, std::size_t l, double entering, double interval) {
  const TrafficNetwork& net = s.net();
  const Lane& lane = net.lanes()[l];
  const LaneState& ls = s.lanes[l];
  const double now = s.clock;
  const int cells = lane.storage_capacity();

  LaneObservation o;
  o.lane = lane.id;
  o.max_speed = ls.effective_speed_limit;
  o.moving_vehicles = static_cast<double>(ls.traversing.size());
  o.halting_number = static_cast<double>(ls.queue.size() + ls.dwelling.size());
  o.queue_length = static_cast<double>(ls.queue.size());
  o.vehicle_count = o.moving_vehicles + o.halting_number;
  o.entering_vehicles = entering;
  o.arrival_rate = ratio(entering, interval);
  o.throughput_potential = lane.saturation_flow * green_fraction(s, l);

  std::set<int> occupied;
  auto cell_of = [&](double pos) { return std::clamp(static_cast<int>(std::floor(pos / kVehicleLength)), 0, cells - 1); };
  double speed_sum = 0.0, wait_sum = 0.0;

  for (const Traverser& t : ls.traversing) {
    const Vehicle& v = s.vehicles.at(t.id);
    const double span = t.until - v.lane_enter_time;
    const double progress = span > kEps ? clamp01((now - v.lane_enter_time) / span) : 1.0;
    VehicleDetail d{v.id, vehicle_speed(lane, v, t), progress * lane.length, v.waiting};
    occupied.insert(cell_of(d.position));
    speed_sum += d.speed;
    wait_sum += d.waiting_time;
    o.vehicle_details.push_back(d);
  }
  // Stopped vehicles stack back from the stop line; dwelling transit is at the front.
  std::size_t k = 0;
  for (const Traverser& t : ls.dwelling) {
    const Vehicle& v = s.vehicles.at(t.id);
    VehicleDetail d{v.id, 0.0, std::max(0.0, lane.length - (k++ + 0.5) * kVehicleLength), v.waiting};
    occupied.insert(cell_of(d.position));
    wait_sum += d.waiting_time;
    o.vehicle_details.push_back(d);
  }
  for (VehicleId id : ls.queue) {
    const Vehicle& v = s.vehicles.at(id);
    VehicleDetail d{v.id, 0.0, std::max(0.0, lane.length - (k++ + 0.5) * kVehicleLength),
                    v.waiting + std::max(0.0, now - v.queue_since)};
    occupied.insert(cell_of(d.position));
    wait_sum += d.waiting_time;
    o.vehicle_details.push_back(d);
  }

  const double n = o.vehicle_count;
  o.average_speed = n > 0 ? speed_sum / n : o.max_speed;
  o.average_waiting_time = ratio(wait_sum, n);
  o.queue_density = o.queue_length / lane.length;
  o.lane_density = n / lane.length;
  o.occupancy = clamp01(n / cells);
  o.cell_occupancy = clamp01(static_cast<double>(occupied.size()) / cells);
  return o;
}

std::optional<std::size_t> next_stop(const TrafficNetwork& net, std::size_t route, std::size_t from) {
  const auto& stops = net.route_stops(route);
  for (std::size_t p = from; p < stops.size(); ++p) {
    if (stops[p]) return p;
  }
  return std::nullopt;
}

TransitObservation observe_route(const EnvState& s, std::size_t r) {
  const TrafficNetwork& net = s.net();
  const TransitRoute& route = net.routes()[r];
  const RouteState& rs = s.routes[r];
  const DynamicsParams& params = s.ctx->params;
  const double now = s.clock;

  TransitObservation o;
  o.route = route.id;
  o.mode = route.mode;
  o.headway = rs.schedule.headway;
  o.station_count = static_cast<double>(route.station_sequence.size());

  for (const auto& [vid, tv] : s.transit) {
    if (tv.route != r) continue;
    TransitVehicleObservation vo;
    vo.id = tv.name;
    vo.departure_time = tv.departed_at;
    vo.travel_time = std::max(0.0, now - tv.departed_at);
    vo.passenger_count = static_cast<double>(tv.onboard.size());
    vo.capacity = route.vehicle_capacity;
    vo.load_ratio = clamp01(ratio(vo.passenger_count, vo.capacity));

    std::optional<std::size_t> stop_pos;
    std::optional<double> remaining;
    if (tv.at_terminal) {
      stop_pos = next_stop(net, r, 0);
      if (stop_pos && *stop_pos == 0) remaining = std::max(0.0, tv.dwell_until - now);
    } else if (auto it = s.vehicles.find(tv.vehicle); it != s.vehicles.end()) {
      const Vehicle& v = it->second;
      const std::size_t l = v.path[v.pos];
      const LaneState& ls = s.lanes[l];
      vo.current_edge = net.lanes()[l].id;
      for (const Traverser& t : ls.traversing) {
        if (t.id == v.id) vo.speed = vehicle_speed(net.lanes()[l], v, t);
      }
      auto dw = std::find_if(ls.dwelling.begin(), ls.dwelling.end(), [&](const Traverser& t) { return t.id == v.id; });
      stop_pos = next_stop(net, r, v.pos + 1);
      if (dw != ls.dwelling.end() && stop_pos && *stop_pos == v.pos + 1) remaining = std::max(0.0, dw->until - now);
    }
    if (stop_pos) {
      const std::size_t st = *net.route_stops(r)[*stop_pos];
      vo.next_station = net.stations()[st].id;
      if (remaining) {
        vo.next_station_dwell_time = *remaining;
      } else {
        std::size_t boarders = 0;
        for (const Passenger& p : s.stations[st]) {
          if (p.route == r && p.alight_stop > *stop_pos) ++boarders;
        }
        const double space = std::max(0.0, vo.capacity - vo.passenger_count);
        double dwell = params.dwell_base + params.dwell_per_boarding * std::min<double>(boarders, space);
        if (auto it = rs.schedule.dwell_overrides.find(vo.next_station); it != rs.schedule.dwell_overrides.end()) {
          dwell = std::max(dwell, it->second);
        }
        vo.next_station_dwell_time = dwell;
      }
    }
    o.vehicles.push_back(std::move(vo));
  }
  o.active_vehicles = static_cast<double>(o.vehicles.size());

  double sum = 0.0;
  std::set<std::size_t> seen;  // loop routes list their terminal twice
  for (const Id& sid : route.station_sequence) {
    const std::size_t st = net.station_index(sid);
    if (!seen.insert(st).second) continue;
    for (const Passenger& p : s.stations[st]) {
      if (p.route != r) continue;
      const double w = std::max(0.0, now - p.arrival);
      sum += w;
      o.waiting_count += 1.0;
      o.max_waiting_time = std::max(o.max_waiting_time, w);
      const std::size_t bin = w < 60 ? 0 : w < 180 ? 1 : w < 300 ? 2 : 3;
      o.waiting_time_distribution[bin] += 1.0;
    }
  }
  o.avg_waiting_time = ratio(sum, o.waiting_count);
  return o;
}

TaxiObservation observe_taxis(const EnvState& s) {
  const TrafficNetwork& net = s.net();
  TaxiObservation o;
  o.fleet_size = static_cast<double>(s.taxis.size());
  o.pending_reservations = static_cast<double>(s.pending.size());
  for (const Taxi& tx : s.taxis) {
    switch (tx.status) {
      case TaxiStatus::idle: o.idle_count += 1; break;
      case TaxiStatus::pickup: o.pickup_count += 1; break;
      case TaxiStatus::occupied: o.occupied_count += 1; break;
    }
    TaxiStateObservation t;
    t.id = tx.id;
    t.taxi_state = std::string(to_string(tx.status));
    if (tx.reservation) t.customers = reservation_name(*tx.reservation);
    t.cumulative_income = tx.income;
    t.recent_order_count = static_cast<double>(tx.recent_orders.size());
    std::size_t junction = tx.junction;
    t.position = net.junctions()[junction].position;
    if (tx.vehicle) {
      if (auto it = s.vehicles.find(*tx.vehicle); it != s.vehicles.end()) {
        const Vehicle& v = it->second;
        const std::size_t l = v.path[v.pos];
        const Lane& lane = net.lanes()[l];
        t.current_edge = lane.id;
        double progress = 1.0;
        for (const Traverser& tr : s.lanes[l].traversing) {
          if (tr.id != v.id) continue;
          t.speed = vehicle_speed(lane, v, tr);
          const double span = tr.until - v.lane_enter_time;
          progress = span > kEps ? clamp01((s.clock - v.lane_enter_time) / span) : 1.0;
        }
        const Point a = net.junctions()[net.lane_upstream(l)].position;
        const Point b = net.junctions()[net.lane_downstream(l)].position;
        t.position = Point{a.x + (b.x - a.x) * progress, a.y + (b.y - a.y) * progress};
        junction = net.lane_upstream(l);
      }
    }
    t.current_taz = net.zones()[net.junction_zone(junction)].id;
    o.taxi_state.push_back(std::move(t));
  }
  o.utilization_rate = ratio(o.fleet_size - o.idle_count, o.fleet_size);
  return o;
}

HighwayObservation highway_from(const TrafficNetwork& net, const Snapshot& snap, std::size_t l) {
  const Lane& lane = net.lanes()[l];
  const LaneObservation& lo = snap.lanes[l];
  HighwayObservation o;
  o.segment = lane.id;
  o.segment_speed = lo.average_speed;
  o.segment_density = lo.lane_density;
  o.segment_occupancy = lo.occupancy;
  o.segment_speed_limit = lo.max_speed;
  o.segment_default_speed_limit = lane.speed_limit;
  o.segment_speed_ratio = clamp01(ratio(lo.average_speed, lo.max_speed));
  o.segment_congestion_ratio = 1.0 - o.segment_speed_ratio;
  o.segment_speed_pressure = clamp01(ratio(std::max(0.0, lo.max_speed - lo.average_speed), lane.speed_limit));

  double veh = 0.0, speed = 0.0, length = 0.0, storage = 0.0;
  for (std::size_t k = 0; k < net.lanes().size(); ++k) {
    const Lane& other = net.lanes()[k];
    if (other.road != lane.road) continue;
    const LaneObservation& ko = snap.lanes[k];
    veh += ko.vehicle_count;
    speed += ko.average_speed * ko.vehicle_count;
    length += other.length;
    storage += other.storage_capacity();
    o.current_speed_limits[other.id] = ko.max_speed;
    o.default_speed_limits[other.id] = other.speed_limit;
  }
  o.road_speed = veh > 0 ? speed / veh : o.segment_speed_limit;
  o.road_density = ratio(veh, length);
  o.road_occupancy = clamp01(ratio(veh, storage));
  return o;
}

RampObservation ramp_from(const TrafficNetwork& net, const Snapshot& snap, std::size_t l) {
  const Lane& lane = net.lanes()[l];
  const LaneObservation& lo = snap.lanes[l];
  RampObservation o;
  o.ramp = lane.id;
  o.vehicle_count = lo.vehicle_count;
  o.queue_length = lo.queue_length;
  o.queue_density = lo.queue_density;
  o.moving_vehicles = lo.moving_vehicles;
  o.average_speed = lo.average_speed;
  o.average_waiting_time = lo.average_waiting_time;
  o.cell_occupancy = lo.cell_occupancy;
  o.lane_density = lo.lane_density;
  o.occupancy = lo.occupancy;
  o.halting_number = lo.halting_number;
  o.max_speed = lo.max_speed;
  o.arrival_rate = lo.arrival_rate;
  o.lane_length = lane.length;
  o.road_id = lane.road;
  o.direction = lane.direction;
  o.start_intersection = lane.upstream;
  o.end_intersection = lane.downstream;
  return o;
}

std::vector<std::size_t> resolve_lanes(const TrafficNetwork& net, std::span<const Id> ids, std::optional<LaneKind> kind,
                                       const char* what) {
  std::vector<std::size_t> out;
  for (const Id& id : ids) {
    auto l = net.find_lane(id);
    if (!l || (kind && net.lanes()[*l].kind != *kind)) {
      throw Error(Errc::not_found, std::string("unknown ") + what + " '" + id + "'");
    }
    out.push_back(*l);
  }
  return out;
}

template <class T, class F>
std::vector<ObservationWindow<T>> windows_for(const History& h, std::span<const std::size_t> idx,
                                              std::span<const Id> ids, double window, F&& make) {
  const auto samples = h.window(window);
  std::vector<ObservationWindow<T>> out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    ObservationWindow<T> w{ids[k], {}};
    for (const Snapshot* snap : samples) w.samples.emplace_back(snap->time, make(*snap, idx[k]));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<ObservationWindow<TransitObservation>> read_transit(const History& h, std::span<const Id> routes,
                                                                double window, TransitMode mode) {
  const TrafficNetwork& net = h.net();
  std::vector<std::size_t> idx;
  for (const Id& id : routes) {
    auto r = net.find_route(id);
    if (!r || net.routes()[*r].mode != mode) {
      throw Error(Errc::not_found, std::string("unknown ") + std::string(to_string(mode)) + " route '" + id + "'");
    }
    idx.push_back(*r);
  }
  return windows_for<TransitObservation>(h, idx, routes, window,
                                         [](const Snapshot& s, std::size_t r) { return s.routes[r]; });
}

GlobalObservation mean_over(std::span<const GlobalObservation> xs) {
  GlobalObservation m;
  if (xs.empty()) return m;
  for (const auto& x : xs) {
    m.total_vehicles += x.total_vehicles;
    m.avg_queue_length += x.avg_queue_length;
    m.avg_speed += x.avg_speed;
    m.avg_waiting_time += x.avg_waiting_time;
    m.congestion_level += x.congestion_level;
  }
  const double n = static_cast<double>(xs.size());
  m.total_vehicles /= n;
  m.avg_queue_length /= n;
  m.avg_speed /= n;
  m.avg_waiting_time /= n;
  m.congestion_level /= n;
  m.intersection_count = xs.back().intersection_count;
  m.lane_count = xs.back().lane_count;
  return m;
}

}  // namespace

Snapshot take_snapshot(const EnvState& state, const Snapshot* previous) {
  const TrafficNetwork& net = state.net();
  Snapshot snap;
  snap.time = state.clock;
  const std::size_t L = net.lanes().size();
  snap.lane_entered.resize(L);
  const double interval = previous ? state.clock - previous->time : 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    snap.lane_entered[l] = state.lanes[l].entered;
    const double entering =
        previous ? static_cast<double>(state.lanes[l].entered - previous->lane_entered[l]) : 0.0;
    snap.lanes.push_back(observe_lane(state, l, entering, interval));
  }
  for (std::size_t r = 0; r < net.routes().size(); ++r) snap.routes.push_back(observe_route(state, r));
  snap.taxi = observe_taxis(state);
  return snap;
}

void History::record(const EnvState& state) {
  if (!net_) net_ = state.ctx->net;
  Snapshot snap = take_snapshot(state, samples_.empty() ? nullptr : &samples_.back());
  samples_.push_back(std::move(snap));
  const auto cap = static_cast<std::size_t>(kHistoryRetention / kHistoryResolution) + 1;
  while (samples_.size() > cap) samples_.pop_front();
}

void History::observe(const EnvState& state) {
  if (samples_.empty() || state.clock - samples_.back().time >= kHistoryResolution - kEps) record(state);
}

const Snapshot& History::latest() const {
  if (samples_.empty()) throw Error(Errc::precondition, "observation history is empty");
  return samples_.back();
}

std::vector<const Snapshot*> History::window(double seconds) const {
  if (!(seconds >= 0.0)) throw Error(Errc::precondition, "window must be nonnegative");
  if (seconds > kHistoryRetention + kEps) {
    throw Error(Errc::precondition, "window " + std::to_string(seconds) + " s exceeds the retained history of " +
                                        std::to_string(kHistoryRetention) + " s");
  }
  const double from = latest().time - seconds - kEps;
  std::vector<const Snapshot*> out;
  for (const Snapshot& s : samples_) {
    if (s.time >= from) out.push_back(&s);
  }
  return out;
}

std::vector<ObservationWindow<LaneObservation>> read_lane_traffic_states(const History& h, std::span<const Id> lanes,
                                                                         double window) {
  const auto idx = resolve_lanes(h.net(), lanes, std::nullopt, "lane");
  return windows_for<LaneObservation>(h, idx, lanes, window,
                                      [](const Snapshot& s, std::size_t l) { return s.lanes[l]; });
}

std::vector<ObservationWindow<HighwayObservation>> read_highway_traffic_states(const History& h,
                                                                               std::span<const Id> segments,
                                                                               double window) {
  const auto idx = resolve_lanes(h.net(), segments, LaneKind::highway_segment, "highway segment");
  const TrafficNetwork& net = h.net();
  return windows_for<HighwayObservation>(
      h, idx, segments, window, [&](const Snapshot& s, std::size_t l) { return highway_from(net, s, l); });
}

std::vector<ObservationWindow<RampObservation>> read_ramp_lane_traffic_states(const History& h,
                                                                              std::span<const Id> ramps,
                                                                              double window) {
  const auto idx = resolve_lanes(h.net(), ramps, LaneKind::ramp, "ramp");
  const TrafficNetwork& net = h.net();
  return windows_for<RampObservation>(h, idx, ramps, window,
                                      [&](const Snapshot& s, std::size_t l) { return ramp_from(net, s, l); });
}

std::vector<ObservationWindow<TransitObservation>> read_bus_states(const History& h, std::span<const Id> routes,
                                                                   double window) {
  return read_transit(h, routes, window, TransitMode::bus);
}

std::vector<ObservationWindow<TransitObservation>> read_subway_states(const History& h, std::span<const Id> routes,
                                                                      double window) {
  return read_transit(h, routes, window, TransitMode::subway);
}

ObservationWindow<TaxiObservation> read_taxi_traffic_states(const History& h, double window) {
  ObservationWindow<TaxiObservation> w{"fleet", {}};
  for (const Snapshot* s : h.window(window)) w.samples.emplace_back(s->time, s->taxi);
  return w;
}

GlobalObservation aggregate_lanes(const TrafficNetwork& net, const Snapshot& snap, std::span<const std::size_t> lanes,
                                  std::size_t intersections) {
  (void)net;
  GlobalObservation g;
  g.intersection_count = static_cast<double>(intersections);
  g.lane_count = static_cast<double>(lanes.size());
  if (lanes.empty()) return g;
  for (std::size_t l : lanes) {
    const LaneObservation& o = snap.lanes[l];
    g.total_vehicles += o.vehicle_count;
    g.avg_queue_length += o.queue_length;
    g.avg_speed += o.average_speed;
    g.avg_waiting_time += o.average_waiting_time;
    g.congestion_level += o.occupancy;
  }
  const double n = g.lane_count;
  g.avg_queue_length /= n;
  g.avg_speed /= n;
  g.avg_waiting_time /= n;
  g.congestion_level = clamp01(g.congestion_level / n);
  return g;
}

GlobalObservation analyze_zone_traffic(const History& h, const Id& zone, double window) {
  const TrafficNetwork& net = h.net();
  const auto z = net.find_zone(zone);
  if (!z) throw Error(Errc::not_found, "unknown zone '" + zone + "'");
  const ZoneInfrastructure infra = net.zone_infrastructure(*z);
  std::vector<std::size_t> lanes;
  for (InfraKind kind : {InfraKind::lane, InfraKind::highway, InfraKind::ramp}) {
    for (const Id& id : infra.of(kind)) lanes.push_back(net.lane_index(id));
  }
  std::sort(lanes.begin(), lanes.end());
  lanes.erase(std::unique(lanes.begin(), lanes.end()), lanes.end());
  std::vector<GlobalObservation> per;
  for (const Snapshot* s : h.window(window)) per.push_back(aggregate_lanes(net, *s, lanes, infra.junctions.size()));
  return mean_over(per);
}

NetworkMetrics calculate_network_metrics(const History& h, double window) {
  const TrafficNetwork& net = h.net();
  std::vector<std::size_t> lanes(net.lanes().size());
  for (std::size_t l = 0; l < lanes.size(); ++l) lanes[l] = l;
  std::vector<GlobalObservation> per;
  double potential = 0.0;
  const auto samples = h.window(window);
  for (const Snapshot* s : samples) {
    per.push_back(aggregate_lanes(net, *s, lanes, net.junctions().size()));
    for (const LaneObservation& o : s->lanes) potential += o.throughput_potential;
  }
  NetworkMetrics m;
  m.global = mean_over(per);
  m.congestion_index = m.global.congestion_level;
  m.throughput_potential = samples.empty() ? 0.0 : potential / static_cast<double>(samples.size());
  return m;
}

std::vector<LaneObservation> identify_congestion_hotspots(const History& h, double queue_threshold,
                                                          double speed_threshold) {
  if (!(queue_threshold > 0.0) || !(speed_threshold > 0.0)) {
    throw Error(Errc::precondition, "hotspot thresholds must be positive");
  }
  std::vector<LaneObservation> out;
  for (const LaneObservation& o : h.latest().lanes) {
    if (o.queue_length >= queue_threshold || o.average_speed <= speed_threshold) out.push_back(o);
  }
  std::stable_sort(out.begin(), out.end(), [](const LaneObservation& a, const LaneObservation& b) {
    if (a.queue_length != b.queue_length) return a.queue_length > b.queue_length;
    return a.lane < b.lane;
  });
  return out;
}

Forecast predict_arima(std::span<const double> series, int horizon, int p, int d) {
  if (horizon < 1) throw Error(Errc::precondition, "forecast horizon must be at least 1");
  if (p < 1 || p > 3) throw Error(Errc::precondition, "AR order p must be in 1..3");
  if (d != 0 && d != 1) throw Error(Errc::precondition, "differencing order d must be 0 or 1");
  if (series.size() < static_cast<std::size_t>(p + d + 2)) {
    throw Error(Errc::precondition, "series too short: need at least " + std::to_string(p + d + 2) + " points, got " +
                                        std::to_string(series.size()));
  }
  Forecast f;
  f.horizon = horizon;
  f.p = p;
  f.d = d;

  std::vector<double> z(series.begin(), series.end());
  if (d == 1) {
    for (std::size_t i = z.size() - 1; i > 0; --i) z[i] -= z[i - 1];
    z.erase(z.begin());
  }
  const auto rows = static_cast<Eigen::Index>(z.size()) - p;
  Eigen::MatrixXd X(rows, p);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    y(i) = z[i + p];
    for (int j = 0; j < p; ++j) X(i, j) = z[i + p - 1 - j];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    f.fallback = true;
    f.values.assign(horizon, series.back());
    return f;
  }
  const Eigen::VectorXd phi = qr.solve(y);
  f.coefficients.assign(phi.data(), phi.data() + p);

  std::vector<double> ext = z;
  double level = series.back();
  for (int h = 0; h < horizon; ++h) {
    double next = 0.0;
    for (int j = 0; j < p; ++j) next += phi(j) * ext[ext.size() - 1 - j];
    ext.push_back(next);
    if (d == 1) {
      level += next;
      f.values.push_back(level);
    } else {
      f.values.push_back(next);
    }
  }
  return f;
}

std::vector<double> lane_feature_series(const History& h, const Id& lane, const std::string& feature, double window) {
  const Id ids[] = {lane};
  const auto w = read_lane_traffic_states(h, ids, window);
  std::vector<double> out;
  for (const auto& [t, obs] : w.front().samples) {
    const nlohmann::json j = to_json(obs);
    if (!j.contains(feature) || !j[feature].is_number()) {
      throw Error(Errc::not_found, "unknown numeric lane feature '" + feature + "'");
    }
    out.push_back(j[feature].get<double>());
  }
  return out;
}

std::vector<TaxiSnapshot> taxi_snapshots(const EnvState& state) {
  const TaxiObservation o = observe_taxis(state);
  std::vector<TaxiSnapshot> out;
  for (std::size_t k = 0; k < o.taxi_state.size(); ++k) {
    const Taxi& tx = state.taxis[k];
    out.push_back(TaxiSnapshot{tx.id, tx.status == TaxiStatus::idle && !tx.vehicle, o.taxi_state[k].position});
  }
  return out;
}

std::vector<Id> rank_idle_taxis_by_distance(std::span<const TaxiSnapshot> fleet, Point target) {
  std::vector<std::pair<double, Id>> idle;
  for (const TaxiSnapshot& t : fleet) {
    if (t.idle) idle.emplace_back(distance(t.position, target), t.id);
  }
  std::sort(idle.begin(), idle.end());
  std::vector<Id> out;
  for (auto& [dist, id] : idle) out.push_back(std::move(id));
  return out;
}

nlohmann::json to_json(const LaneObservation& o) {
  nlohmann::json details = nlohmann::json::array();
  for (const VehicleDetail& d : o.vehicle_details) {
    details.push_back({{"id", d.id}, {"speed", d.speed}, {"position", d.position}, {"waiting_time", d.waiting_time}});
  }
  return {{"lane_id", o.lane},
          {"queue_length", o.queue_length},
          {"queue_density", o.queue_density},
          {"moving_vehicles", o.moving_vehicles},
          {"average_speed", o.average_speed},
          {"average_waiting_time", o.average_waiting_time},
          {"cell_occupancy", o.cell_occupancy},
          {"lane_density", o.lane_density},
          {"throughput_potential", o.throughput_potential},
          {"occupancy", o.occupancy},
          {"halting_number", o.halting_number},
          {"max_speed", o.max_speed},
          {"arrival_rate", o.arrival_rate},
          {"entering_vehicles", o.entering_vehicles},
          {"vehicle_count", o.vehicle_count},
          {"vehicle_details", details}};
}

nlohmann::json to_json(const HighwayObservation& o) {
  return {{"segment_id", o.segment},
          {"segment_speed", o.segment_speed},
          {"segment_density", o.segment_density},
          {"segment_occupancy", o.segment_occupancy},
          {"segment_speed_limit", o.segment_speed_limit},
          {"segment_default_speed_limit", o.segment_default_speed_limit},
          {"segment_congestion_ratio", o.segment_congestion_ratio},
          {"segment_speed_ratio", o.segment_speed_ratio},
          {"segment_speed_pressure", o.segment_speed_pressure},
          {"road_speed", o.road_speed},
          {"road_density", o.road_density},
          {"road_occupancy", o.road_occupancy},
          {"current_speed_limits", o.current_speed_limits},
          {"default_speed_limits", o.default_speed_limits}};
}

nlohmann::json to_json(const RampObservation& o) {
  return {{"ramp_id", o.ramp},
          {"vehicle_count", o.vehicle_count},
          {"queue_length", o.queue_length},
          {"queue_density", o.queue_density},
          {"moving_vehicles", o.moving_vehicles},
          {"average_speed", o.average_speed},
          {"average_waiting_time", o.average_waiting_time},
          {"cell_occupancy", o.cell_occupancy},
          {"lane_density", o.lane_density},
          {"occupancy", o.occupancy},
          {"halting_number", o.halting_number},
          {"max_speed", o.max_speed},
          {"arrival_rate", o.arrival_rate},
          {"lane_length", o.lane_length},
          {"road_id", o.road_id},
          {"direction", o.direction},
          {"start_intersection", o.start_intersection},
          {"end_intersection", o.end_intersection}};
}

nlohmann::json to_json(const TransitObservation& o) {
  nlohmann::json j;
  j["route_id"] = o.route;
  j[o.mode == TransitMode::bus ? "active_buses" : "active_trains"] = o.active_vehicles;
  j["headway"] = o.headway;
  j["station_count"] = o.station_count;
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : o.vehicles) {
    vs.push_back({{"id", v.id},
                  {"departure_time", v.departure_time},
                  {"travel_time", v.travel_time},
                  {"current_edge", v.current_edge},
                  {"speed", v.speed},
                  {"passenger_count", v.passenger_count},
                  {"capacity", v.capacity},
                  {"load_ratio", v.load_ratio},
                  {"next_station", v.next_station},
                  {"next_station_dwell_time", v.next_station_dwell_time}});
  }
  j["vehicles"] = vs;
  j["waiting_count"] = o.waiting_count;
  j["avg_waiting_time"] = o.avg_waiting_time;
  j["max_waiting_time"] = o.max_waiting_time;
  j["waiting_time_distribution"] = {{"0-60", o.waiting_time_distribution[0]},
                                    {"60-180", o.waiting_time_distribution[1]},
                                    {"180-300", o.waiting_time_distribution[2]},
                                    {">300", o.waiting_time_distribution[3]}};
  return j;
}

nlohmann::json to_json(const TaxiObservation& o) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& t : o.taxi_state) {
    states.push_back({{"id", t.id},
                      {"taxi_state", t.taxi_state},
                      {"customers", t.customers},
                      {"current_edge", t.current_edge},
                      {"current_taz", t.current_taz},
                      {"position", {t.position.x, t.position.y}},
                      {"speed", t.speed},
                      {"cumulative_income", t.cumulative_income},
                      {"recent_order_count", t.recent_order_count}});
  }
  return {{"fleet_size", o.fleet_size},
          {"idle_count", o.idle_count},
          {"pickup_count", o.pickup_count},
          {"occupied_count", o.occupied_count},
          {"utilization_rate", o.utilization_rate},
          {"pending_reservations", o.pending_reservations},
          {"taxi_state", states}};
}

nlohmann::json to_json(const GlobalObservation& o) {
  return {{"total_vehicles", o.total_vehicles},
          {"avg_queue_length", o.avg_queue_length},
          {"avg_speed", o.avg_speed},
          {"avg_waiting_time", o.avg_waiting_time},
          {"congestion_level", o.congestion_level},
          {"intersection_count", o.intersection_count},
          {"lane_count", o.lane_count}};
}

nlohmann::json to_json(const NetworkMetrics& o) {
  nlohmann::json j = to_json(o.global);
  j["congestion_index"] = o.congestion_index;
  j["throughput_potential"] = o.throughput_potential;
  return j;
}

nlohmann::json to_json(const Forecast& f) {
  return {{"entity", f.entity},       {"feature", f.feature}, {"horizon", f.horizon},
          {"order", {f.p, f.d}},      {"coefficients", f.coefficients},
          {"values", f.values},       {"fallback", f.fallback}};
}

}  // namespace utc
