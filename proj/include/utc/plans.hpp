#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "utc/network.hpp"

namespace utc {

/// Yellow plus all-red time appended after each phase's green.
inline constexpr double kLostTimePerPhase = 4.0;
/// Ramp meters run on a fixed duty cycle; a plan opens the ramp for part of it.
inline constexpr double kRampMeterCycle = 60.0;
inline constexpr double kMinHeadway = 60.0;
inline constexpr double kSpeedLimitLowerFactor = 0.5;
inline constexpr double kSpeedLimitUpperFactor = 1.5;

struct SignalPlan {
  Id junction;
  double cycle_time = 0.0;
  std::vector<double> greens;  // one per phase, in junction phase order

  friend bool operator==(const SignalPlan&, const SignalPlan&) = default;
};

struct RampMeterPlan {
  Id ramp;
  double open_duration = kRampMeterCycle;

  friend bool operator==(const RampMeterPlan&, const RampMeterPlan&) = default;
};

struct SpeedLimitPlan {
  Id segment;
  double limit = 0.0;

  friend bool operator==(const SpeedLimitPlan&, const SpeedLimitPlan&) = default;
};

struct TransitSchedule {
  Id route;
  double headway = 600.0;
  std::map<Id, double> dwell_overrides;  // station id -> minimum dwell seconds
  double service_start = 0.0;
  double service_end = 86400.0;

  friend bool operator==(const TransitSchedule&, const TransitSchedule&) = default;
};

struct DispatchAssignment {
  std::vector<std::pair<Id, Id>> assignments;  // (taxi, reservation)
  std::vector<std::pair<Id, Id>> repositions;  // (taxi, target zone)

  bool empty() const noexcept { return assignments.empty() && repositions.empty(); }
  friend bool operator==(const DispatchAssignment&, const DispatchAssignment&) = default;
};

/// Joint action for one decision horizon. Plans persist in the environment
/// until replaced; re-applying an identical bundle is a no-op.
struct ActionBundle {
  std::map<Id, SignalPlan> signals;
  std::map<Id, SpeedLimitPlan> speed_limits;
  std::map<Id, RampMeterPlan> ramps;
  std::map<Id, TransitSchedule> transit;
  std::optional<DispatchAssignment> dispatch;
  double horizon = 1800.0;

  bool empty() const noexcept {
    return signals.empty() && speed_limits.empty() && ramps.empty() && transit.empty() &&
           (!dispatch || dispatch->empty());
  }
  friend bool operator==(const ActionBundle&, const ActionBundle&) = default;
};

double lost_time(const Junction& junction) noexcept;

void to_json(nlohmann::json& j, const SignalPlan& p);
void from_json(const nlohmann::json& j, SignalPlan& p);
void to_json(nlohmann::json& j, const RampMeterPlan& p);
void from_json(const nlohmann::json& j, RampMeterPlan& p);
void to_json(nlohmann::json& j, const SpeedLimitPlan& p);
void from_json(const nlohmann::json& j, SpeedLimitPlan& p);
void to_json(nlohmann::json& j, const TransitSchedule& s);
void from_json(const nlohmann::json& j, TransitSchedule& s);
void to_json(nlohmann::json& j, const DispatchAssignment& d);
void from_json(const nlohmann::json& j, DispatchAssignment& d);
void to_json(nlohmann::json& j, const ActionBundle& b);
void from_json(const nlohmann::json& j, ActionBundle& b);

/// Parses a bundle; structural problems raise Errc::invalid_action.
ActionBundle parse_bundle(const nlohmann::json& j);

}  // namespace utc
