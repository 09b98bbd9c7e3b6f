#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "utc/network.hpp"
#include "utc/plans.hpp"

namespace utc {

struct EnvState;

inline constexpr double kWebsterMinCycle = 30.0;
inline constexpr double kWebsterMaxCycle = 180.0;
inline constexpr double kAlineaGain = 70.0;
inline constexpr double kAlineaTarget = 0.25;

struct WebsterResult {
  double raw_cycle = 0.0;  // before clamping
  double cycle = 0.0;
  std::vector<double> greens;  // (cycle - lost) split by ratio over Y
};

/// C = (1.5 L + 5) / (1 - Y), clamped to [30, 180]. Y = 0 gives an equal split.
/// Throws Errc::oversaturated when Y >= 1.
WebsterResult webster_cycle(std::span<const double> critical_ratios, double lost_time);

/// Webster plan for a junction, with greens clamped to each phase's bounds and
/// the cycle recomputed so the plan stays valid. Oversaturation falls back to
/// the maximum cycle with an equal split.
SignalPlan webster_plan(const Junction& junction, std::span<const double> critical_ratios);

/// The uniform fixed-time plan: the junction's configured cycle split equally.
SignalPlan uniform_plan(const Junction& junction);

/// Per phase, the largest arrival_rate / saturation_flow over its movements.
std::vector<double> phase_flow_ratios(const TrafficNetwork& net, const Junction& junction,
                                      std::span<const double> lane_arrival_rate);

double alinea_update(double prev_open, double measured_occupancy, double target_occupancy = kAlineaTarget,
                     double gain = kAlineaGain);
RampMeterPlan alinea_rate(const Id& ramp, double prev_open, double measured_occupancy,
                          double target_occupancy = kAlineaTarget, double gain = kAlineaGain);

struct TaxiSnapshot {
  Id id;
  bool idle = true;
  Point position;
};

struct ReservationSnapshot {
  Id id;
  Point position;
  double request_time = 0.0;
};

/// Reservations in the given (arrival) order each take the nearest idle
/// unassigned taxi; ties go to the lexicographically smaller taxi id.
DispatchAssignment greedy_dispatch(std::span<const TaxiSnapshot> fleet,
                                   std::span<const ReservationSnapshot> reservations);

TransitSchedule fixed_headway_schedule(const TransitRoute& route, double headway,
                                       double service_start = 0.0, double service_end = 86400.0);
/// Departure times in [from, to).
std::vector<double> departures(const TransitSchedule& schedule, double from, double to);

struct PlanCheck {
  std::string kind;  // signal, speed_limit, ramp, transit, dispatch, bundle
  Id entity;
  bool ok = true;
  std::string reason;
};

struct ValidationReport {
  std::vector<PlanCheck> checks;

  bool ok() const noexcept;
  /// First failure as "kind entity: reason".
  std::string first_failure() const;
  nlohmann::json to_json() const;
};

/// Checks every plan invariant. With a state, dispatch orders must also name
/// idle taxis and pending reservations.
ValidationReport validate_action(const TrafficNetwork& net, const ActionBundle& bundle,
                                 const EnvState* state = nullptr);

}  // namespace utc
