#include "utc/plans.hpp"

namespace utc {

using nlohmann::json;

double lost_time(const Junction& junction) noexcept {
  return kLostTimePerPhase * static_cast<double>(junction.phases.size());
}

void to_json(json& j, const SignalPlan& p) {
  j = json{{"junction", p.junction}, {"cycle_time", p.cycle_time}, {"greens", p.greens}};
}
void from_json(const json& j, SignalPlan& p) {
  j.at("junction").get_to(p.junction);
  j.at("cycle_time").get_to(p.cycle_time);
  j.at("greens").get_to(p.greens);
}

void to_json(json& j, const RampMeterPlan& p) {
  j = json{{"ramp", p.ramp}, {"open_duration", p.open_duration}};
}
void from_json(const json& j, RampMeterPlan& p) {
  j.at("ramp").get_to(p.ramp);
  j.at("open_duration").get_to(p.open_duration);
}

void to_json(json& j, const SpeedLimitPlan& p) { j = json{{"segment", p.segment}, {"limit", p.limit}}; }
void from_json(const json& j, SpeedLimitPlan& p) {
  j.at("segment").get_to(p.segment);
  j.at("limit").get_to(p.limit);
}

void to_json(json& j, const TransitSchedule& s) {
  j = json{{"route", s.route},
           {"headway", s.headway},
           {"dwell_overrides", s.dwell_overrides},
           {"service_start", s.service_start},
           {"service_end", s.service_end}};
}
void from_json(const json& j, TransitSchedule& s) {
  j.at("route").get_to(s.route);
  j.at("headway").get_to(s.headway);
  s.dwell_overrides = j.value("dwell_overrides", std::map<Id, double>{});
  s.service_start = j.value("service_start", 0.0);
  s.service_end = j.value("service_end", 86400.0);
}

void to_json(json& j, const DispatchAssignment& d) {
  json a = json::array();
  for (const auto& [taxi, res] : d.assignments) a.push_back({{"taxi", taxi}, {"reservation", res}});
  json r = json::array();
  for (const auto& [taxi, zone] : d.repositions) r.push_back({{"taxi", taxi}, {"zone", zone}});
  j = json{{"assignments", a}, {"repositions", r}};
}
void from_json(const json& j, DispatchAssignment& d) {
  d = {};
  if (j.contains("assignments")) {
    for (const auto& a : j["assignments"]) {
      d.assignments.emplace_back(a.at("taxi").get<Id>(), a.at("reservation").get<Id>());
    }
  }
  if (j.contains("repositions")) {
    for (const auto& r : j["repositions"]) {
      d.repositions.emplace_back(r.at("taxi").get<Id>(), r.at("zone").get<Id>());
    }
  }
}

namespace {

template <class Plan, class KeyFn>
json plans_array(const std::map<Id, Plan>& plans) {
  json out = json::array();
  for (const auto& [id, p] : plans) out.push_back(p);
  return out;
}

template <class Plan>
void read_plans(const json& j, const char* key, std::map<Id, Plan>& out, Id Plan::*id_field) {
  if (!j.contains(key)) return;
  for (const auto& item : j[key]) {
    Plan p = item.get<Plan>();
    const Id id = p.*id_field;
    if (!out.emplace(id, std::move(p)).second) {
      throw Error(Errc::invalid_action, std::string(key) + ": duplicate plan for '" + id + "'");
    }
  }
}

}  // namespace

void to_json(json& j, const ActionBundle& b) {
  j = json::object();
  j["horizon"] = b.horizon;
  j["signals"] = json::array();
  for (const auto& [id, p] : b.signals) j["signals"].push_back(p);
  j["speed_limits"] = json::array();
  for (const auto& [id, p] : b.speed_limits) j["speed_limits"].push_back(p);
  j["ramps"] = json::array();
  for (const auto& [id, p] : b.ramps) j["ramps"].push_back(p);
  j["transit"] = json::array();
  for (const auto& [id, p] : b.transit) j["transit"].push_back(p);
  if (b.dispatch) j["dispatch"] = *b.dispatch;
}

void from_json(const json& j, ActionBundle& b) {
  b = {};
  b.horizon = j.value("horizon", 1800.0);
  read_plans(j, "signals", b.signals, &SignalPlan::junction);
  read_plans(j, "speed_limits", b.speed_limits, &SpeedLimitPlan::segment);
  read_plans(j, "ramps", b.ramps, &RampMeterPlan::ramp);
  read_plans(j, "transit", b.transit, &TransitSchedule::route);
  if (j.contains("dispatch") && !j["dispatch"].is_null()) b.dispatch = j["dispatch"].get<DispatchAssignment>();
}

ActionBundle parse_bundle(const json& j) {
  if (!j.is_object()) throw Error(Errc::invalid_action, "action bundle must be an object");
  try {
    return j.get<ActionBundle>();
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_action, std::string("malformed action bundle: ") + e.what());
  }
}

}  // namespace utc
