#include "utc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "utc/state.hpp"

namespace utc {

using nlohmann::json;

namespace {

constexpr double kTol = 1e-6;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

WebsterResult webster_cycle(std::span<const double> critical_ratios, double lost_time) {
  if (critical_ratios.empty()) throw Error(Errc::precondition, "webster: no phases");
  if (!(lost_time > 0.0)) throw Error(Errc::precondition, "webster: lost time must be positive");
  double y_sum = 0.0;
  for (double y : critical_ratios) {
    if (!(y >= 0.0) || !std::isfinite(y)) throw Error(Errc::precondition, "webster: flow ratios must be >= 0");
    y_sum += y;
  }
  if (y_sum >= 1.0) {
    throw Error(Errc::oversaturated, "webster: critical flow ratio sum Y = " + fmt(y_sum) + " >= 1");
  }
  WebsterResult r;
  r.raw_cycle = (1.5 * lost_time + 5.0) / (1.0 - y_sum);
  r.cycle = std::clamp(r.raw_cycle, kWebsterMinCycle, kWebsterMaxCycle);
  const double effective = std::max(0.0, r.cycle - lost_time);
  const auto n = static_cast<double>(critical_ratios.size());
  r.greens.reserve(critical_ratios.size());
  for (double y : critical_ratios) r.greens.push_back(y_sum > 0.0 ? effective * y / y_sum : effective / n);
  return r;
}

namespace {

SignalPlan clamp_plan(const Junction& junction, std::vector<double> greens) {
  SignalPlan plan;
  plan.junction = junction.id;
  double sum = 0.0;
  for (std::size_t k = 0; k < greens.size(); ++k) {
    greens[k] = std::clamp(greens[k], junction.phases[k].min_green, junction.phases[k].max_green);
    sum += greens[k];
  }
  plan.greens = std::move(greens);
  plan.cycle_time = sum + lost_time(junction);
  return plan;
}

}  // namespace

SignalPlan webster_plan(const Junction& junction, std::span<const double> critical_ratios) {
  if (junction.phases.empty()) throw Error(Errc::precondition, "junction " + junction.id + " has no phases");
  if (critical_ratios.size() != junction.phases.size()) {
    throw Error(Errc::precondition, "junction " + junction.id + ": one flow ratio per phase required");
  }
  const double lost = lost_time(junction);
  std::vector<double> greens;
  try {
    greens = webster_cycle(critical_ratios, lost).greens;
  } catch (const Error& e) {
    if (e.code() != Errc::oversaturated) throw;
    greens.assign(junction.phases.size(), (kWebsterMaxCycle - lost) / static_cast<double>(junction.phases.size()));
  }
  return clamp_plan(junction, std::move(greens));
}

SignalPlan uniform_plan(const Junction& junction) {
  if (junction.phases.empty()) throw Error(Errc::precondition, "junction " + junction.id + " has no phases");
  const double n = static_cast<double>(junction.phases.size());
  const double g = std::max(0.0, junction.fixed_cycle - lost_time(junction)) / n;
  return clamp_plan(junction, std::vector<double>(junction.phases.size(), g));
}

std::vector<double> phase_flow_ratios(const TrafficNetwork& net, const Junction& junction,
                                      std::span<const double> lane_arrival_rate) {
  std::vector<double> out;
  out.reserve(junction.phases.size());
  for (const Phase& phase : junction.phases) {
    double y = 0.0;
    for (const Movement& m : phase.green_movements) {
      const std::size_t l = net.lane_index(m.from);
      const double rate = l < lane_arrival_rate.size() ? lane_arrival_rate[l] : 0.0;
      y = std::max(y, rate / net.lanes()[l].saturation_flow);
    }
    out.push_back(y);
  }
  return out;
}

double alinea_update(double prev_open, double measured_occupancy, double target_occupancy, double gain) {
  if (!(gain > 0.0)) throw Error(Errc::precondition, "alinea: gain must be positive");
  if (measured_occupancy < 0.0 || measured_occupancy > 1.0 || target_occupancy < 0.0 || target_occupancy > 1.0) {
    throw Error(Errc::precondition, "alinea: occupancies must lie in [0, 1]");
  }
  // meters actuate in whole milliseconds
  const double next = std::round((prev_open + gain * (target_occupancy - measured_occupancy)) * 1000.0) / 1000.0;
  return std::clamp(next, 0.0, kRampMeterCycle);
}

RampMeterPlan alinea_rate(const Id& ramp, double prev_open, double measured_occupancy, double target_occupancy,
                          double gain) {
  return RampMeterPlan{ramp, alinea_update(prev_open, measured_occupancy, target_occupancy, gain)};
}

DispatchAssignment greedy_dispatch(std::span<const TaxiSnapshot> fleet,
                                   std::span<const ReservationSnapshot> reservations) {
  DispatchAssignment out;
  std::vector<bool> taken(fleet.size(), false);
  for (const ReservationSnapshot& r : reservations) {
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t k = 0; k < fleet.size(); ++k) {
      if (!fleet[k].idle || taken[k]) continue;
      const double d = distance(fleet[k].position, r.position);
      if (!best || d < best_d || (d == best_d && fleet[k].id < fleet[*best].id)) {
        best = k;
        best_d = d;
      }
    }
    if (!best) continue;
    taken[*best] = true;
    out.assignments.emplace_back(fleet[*best].id, r.id);
  }
  return out;
}

TransitSchedule fixed_headway_schedule(const TransitRoute& route, double headway, double service_start,
                                       double service_end) {
  if (headway < kMinHeadway) {
    throw Error(Errc::precondition,
                "route " + route.id + ": headway " + fmt(headway) + " s is below the " + fmt(kMinHeadway) + " s minimum");
  }
  if (!(service_end > service_start)) throw Error(Errc::precondition, "route " + route.id + ": empty service span");
  TransitSchedule s;
  s.route = route.id;
  s.headway = headway;
  s.service_start = service_start;
  s.service_end = service_end;
  return s;
}

std::vector<double> departures(const TransitSchedule& schedule, double from, double to) {
  std::vector<double> out;
  if (!(schedule.headway > 0.0)) return out;
  const double lo = std::max(from, schedule.service_start);
  const double hi = std::min(to, schedule.service_end);
  if (lo >= hi) return out;
  auto k = static_cast<long long>(std::ceil((lo - schedule.service_start) / schedule.headway));
  for (;; ++k) {
    const double t = schedule.service_start + static_cast<double>(k) * schedule.headway;
    if (t < lo) continue;
    if (t >= hi) break;
    out.push_back(t);
  }
  return out;
}

bool ValidationReport::ok() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const PlanCheck& c) { return c.ok; });
}

std::string ValidationReport::first_failure() const {
  for (const PlanCheck& c : checks) {
    if (!c.ok) return c.kind + " " + c.entity + ": " + c.reason;
  }
  return {};
}

json ValidationReport::to_json() const {
  json arr = json::array();
  for (const PlanCheck& c : checks) {
    json item{{"kind", c.kind}, {"entity", c.entity}, {"ok", c.ok}};
    if (!c.ok) item["reason"] = c.reason;
    arr.push_back(std::move(item));
  }
  return json{{"ok", ok()}, {"checks", arr}};
}

namespace {

class Checker {
 public:
  explicit Checker(ValidationReport& report) : report_(report) {}

  void check(const std::string& kind, const Id& entity, std::optional<std::string> failure) {
    report_.checks.push_back(PlanCheck{kind, entity, !failure.has_value(), failure.value_or("")});
  }

 private:
  ValidationReport& report_;
};

std::optional<std::string> check_signal(const TrafficNetwork& net, const SignalPlan& p) {
  const auto j = net.find_junction(p.junction);
  if (!j) return "unknown junction";
  const Junction& junction = net.junctions()[*j];
  if (!junction.signalized) return "junction is not signalized";
  if (p.greens.size() != junction.phases.size()) {
    return "expected " + std::to_string(junction.phases.size()) + " greens, got " + std::to_string(p.greens.size());
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < p.greens.size(); ++k) {
    const Phase& ph = junction.phases[k];
    if (!std::isfinite(p.greens[k]) || p.greens[k] < ph.min_green - kTol || p.greens[k] > ph.max_green + kTol) {
      return "green " + fmt(p.greens[k]) + " s for phase " + ph.id + " outside [" + fmt(ph.min_green) + ", " +
             fmt(ph.max_green) + "]";
    }
    sum += p.greens[k];
  }
  const double lost = lost_time(junction);
  if (std::abs(sum + lost - p.cycle_time) > kTol) {
    return "greens " + fmt(sum) + " s + lost time " + fmt(lost) + " s != cycle " + fmt(p.cycle_time) + " s";
  }
  return std::nullopt;
}

std::optional<std::string> check_speed(const TrafficNetwork& net, const SpeedLimitPlan& p) {
  const auto l = net.find_lane(p.segment);
  if (!l) return "unknown segment";
  const Lane& lane = net.lanes()[*l];
  if (lane.kind != LaneKind::highway_segment) return "lane is not a highway segment";
  const double lo = kSpeedLimitLowerFactor * lane.speed_limit;
  const double hi = kSpeedLimitUpperFactor * lane.speed_limit;
  if (!std::isfinite(p.limit) || p.limit < lo - 1e-9 || p.limit > hi + 1e-9) {
    return "limit " + fmt(p.limit) + " m/s outside [" + fmt(lo) + ", " + fmt(hi) + "]";
  }
  return std::nullopt;
}

std::optional<std::string> check_ramp(const TrafficNetwork& net, const RampMeterPlan& p) {
  const auto l = net.find_lane(p.ramp);
  if (!l) return "unknown ramp";
  if (net.lanes()[*l].kind != LaneKind::ramp) return "lane is not a ramp";
  if (!std::isfinite(p.open_duration) || p.open_duration < 0.0) return "open duration must be >= 0";
  if (p.open_duration > kRampMeterCycle) return "open duration " + fmt(p.open_duration) + " s exceeds 60 s cycle";
  return std::nullopt;
}

std::optional<std::string> check_transit(const TrafficNetwork& net, const TransitSchedule& s) {
  const auto r = net.find_route(s.route);
  if (!r) return "unknown route";
  if (!std::isfinite(s.headway) || s.headway < kMinHeadway) {
    return "headway " + fmt(s.headway) + " s below " + fmt(kMinHeadway) + " s minimum";
  }
  if (!(s.service_end > s.service_start)) return "service end must follow service start";
  const TransitRoute& route = net.routes()[*r];
  for (const auto& [station, dwell] : s.dwell_overrides) {
    if (std::find(route.station_sequence.begin(), route.station_sequence.end(), station) ==
        route.station_sequence.end()) {
      return "dwell override for station " + station + " not on route";
    }
    if (!std::isfinite(dwell) || dwell < 0.0) return "dwell override for " + station + " must be >= 0";
  }
  return std::nullopt;
}

}  // namespace

ValidationReport validate_action(const TrafficNetwork& net, const ActionBundle& bundle, const EnvState* state) {
  ValidationReport report;
  Checker c(report);
  c.check("bundle", "horizon",
          bundle.horizon > 0.0 && std::isfinite(bundle.horizon)
              ? std::nullopt
              : std::optional<std::string>("horizon must be positive"));
  for (const auto& [id, p] : bundle.signals) c.check("signal", id, check_signal(net, p));
  for (const auto& [id, p] : bundle.speed_limits) c.check("speed_limit", id, check_speed(net, p));
  for (const auto& [id, p] : bundle.ramps) c.check("ramp", id, check_ramp(net, p));
  for (const auto& [id, p] : bundle.transit) c.check("transit", id, check_transit(net, p));
  if (!bundle.dispatch) return report;

  std::set<Id> taxis;
  std::set<Id> reservations;
  auto taxi_failure = [&](const Id& taxi) -> std::optional<std::string> {
    if (!taxis.insert(taxi).second) return "duplicate taxi id " + taxi;
    if (!state) return std::nullopt;
    const auto it = std::find_if(state->taxis.begin(), state->taxis.end(), [&](const Taxi& t) { return t.id == taxi; });
    if (it == state->taxis.end()) return "unknown taxi " + taxi;
    if (it->status != TaxiStatus::idle || it->vehicle) return "taxi " + taxi + " is not idle";
    return std::nullopt;
  };
  for (const auto& [taxi, res] : bundle.dispatch->assignments) {
    std::optional<std::string> failure = taxi_failure(taxi);
    if (!failure && !reservations.insert(res).second) failure = "duplicate reservation id " + res;
    if (!failure && state) {
      const bool pending = std::any_of(state->pending.begin(), state->pending.end(), [&](const Reservation& r) {
        return reservation_name(r.id) == res;
      });
      if (!pending) failure = "reservation " + res + " is not pending";
    }
    c.check("dispatch", taxi + "->" + res, failure);
  }
  for (const auto& [taxi, zone] : bundle.dispatch->repositions) {
    std::optional<std::string> failure = taxi_failure(taxi);
    if (!failure && !net.find_zone(zone)) failure = "unknown zone " + zone;
    c.check("dispatch", taxi + "->" + zone, failure);
  }
  return report;
}

}  // namespace utc
