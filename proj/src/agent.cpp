#include <algorithm>
#include <cmath>
#include <map>

#include "utc/runtime.hpp"

namespace utc {

using nlohmann::json;

namespace {

json call(const char* action, json payload = nullptr) {
  json m = {{"type", "call"}, {"action", action}};
  if (!payload.is_null()) m["payload"] = std::move(payload);
  return m;
}

bool has(const std::vector<std::string>& xs, const std::string& x) {
  return std::find(xs.begin(), xs.end(), x) != xs.end();
}

// Latest observation per entity from a read_*_states result.
std::map<std::string, json> latest_by_entity(const json& windows) {
  std::map<std::string, json> out;
  if (!windows.is_array()) return out;
  for (const json& w : windows) {
    if (w.contains("samples") && !w["samples"].empty()) out[w["entity"]] = w["samples"].back()["observation"];
  }
  return out;
}

// Greens proportional to phase demand, clamped per phase; cycle follows.
SignalPlan split_plan(const std::string& junction, const json& bounds, const json& lanes, double cycle_factor) {
  const json& phases = bounds["phases"];
  const double lost = bounds["lost_time"];
  std::vector<double> y;
  for (const json& ph : phases) {
    double v = 0.0;
    for (const json& mv : ph["movements"]) {
      const json& lane = lanes[mv[0].get<std::string>()];
      const double sat = lane["saturation_flow"];
      // Standing queues count as demand to be cleared within ten minutes.
      const double demand = lane["arrival_rate"].get<double>() + lane["queue_length"].get<double>() / 600.0;
      if (sat > 0) v = std::max(v, demand / sat);
    }
    y.push_back(v);
  }
  double Y = 0.0;
  for (double v : y) Y += v;
  double cycle = Y >= 0.95 ? 180.0 : std::clamp((1.5 * lost + 5.0) / (1.0 - Y), 30.0, 180.0);
  cycle = std::clamp(cycle * cycle_factor, 30.0, 180.0);
  const double effective = std::max(0.0, cycle - lost);
  SignalPlan plan{junction, 0.0, {}};
  for (std::size_t k = 0; k < y.size(); ++k) {
    double g = Y > 0 ? effective * y[k] / Y : effective / static_cast<double>(y.size());
    g = std::clamp(g, phases[k]["min_green"].get<double>(), phases[k]["max_green"].get<double>());
    plan.greens.push_back(g);
    plan.cycle_time += g;
  }
  plan.cycle_time += lost;
  return plan;
}

}  // namespace

json ScriptedAgent::propose(bool refine) const {
  ActionBundle b;
  std::map<std::string, json> results;
  if (last_.is_object() && last_["result"].is_array()) {
    for (const json& r : last_["result"]) results[r["op"]] = r["result"];
  }

  if (auto it = sheets_.find("signal_timing"); it != sheets_.end()) {
    double factor = 1.0;
    if (refine && !rollouts_.empty() && rollouts_.front().contains("reward")) {
      // Lengthen cycles when the first candidate helped, shorten them otherwise.
      factor = rollouts_.front()["reward"]["f_RI"].get<double>() > 0.0 ? 1.2 : 0.8;
    }
    const json& sheet = it->second;
    for (const auto& [junction, bounds] : sheet["bounds"].items()) {
      b.signals[junction] = split_plan(junction, bounds, sheet["lanes"], factor);
    }
  }

  if (auto it = sheets_.find("highway_speed_limit"); it != sheets_.end()) {
    const auto obs = latest_by_entity(results["read_highway_traffic_states"]);
    for (const auto& [seg, cfg] : it->second["current_highway_speed_limit_config"].items()) {
      const double def = cfg["default"];
      double limit = def;
      if (auto o = obs.find(seg); o != obs.end() && o->second["segment_speed_ratio"].get<double>() < 0.6) {
        limit = std::max(0.5 * def, 0.9 * cfg["limit"].get<double>());
      }
      if (limit != def) b.speed_limits[seg] = SpeedLimitPlan{seg, limit};
    }
  }

  if (auto it = sheets_.find("ramp_metering"); it != sheets_.end()) {
    const auto obs = latest_by_entity(results["read_ramp_lane_traffic_states"]);
    for (const auto& [ramp, cfg] : it->second["current_ramp_metering_config"].items()) {
      auto o = obs.find(ramp);
      if (o == obs.end() || o->second["queue_length"].get<double>() <= 5.0) continue;
      b.ramps[ramp] = RampMeterPlan{ramp, std::min(kRampMeterCycle, cfg["open_duration"].get<double>() + 10.0)};
    }
  }

  for (const char* module : {"bus_scheduling", "subway_scheduling"}) {
    auto it = sheets_.find(module);
    if (it == sheets_.end()) continue;
    const bool bus = std::string(module) == "bus_scheduling";
    const auto obs = latest_by_entity(results[bus ? "read_bus_states" : "read_subway_states"]);
    for (const auto& [route, sched] : it->second[bus ? "current_bus_schedule" : "current_subway_schedule"].items()) {
      auto o = obs.find(route);
      const double headway = sched["headway"];
      // Passengers waiting longer than a headway were left behind.
      if (o == obs.end() || o->second["max_waiting_time"].get<double>() <= headway) continue;
      TransitSchedule s = sched.get<TransitSchedule>();
      s.route = route;
      s.headway = std::max(kMinHeadway, std::round(0.9 * headway));
      b.transit[route] = s;
    }
  }

  if (auto it = sheets_.find("taxi_dispatching"); it != sheets_.end()) {
    const json& sheet = it->second;
    std::map<std::string, std::vector<std::string>> idle_by_zone;
    for (const json& t : sheet["taxi_fleet_state"]) {
      if (t["state"] == "idle" && t["parked"].get<bool>()) idle_by_zone[t["zone"]].push_back(t["id"]);
    }
    DispatchAssignment d;
    for (const auto& [zone, stats] : sheet["taz_stats"].items()) {
      int deficit = stats["pending_reservations"].get<int>() - stats["idle_taxis"].get<int>();
      for (auto& [from, taxis] : idle_by_zone) {
        if (from == zone) continue;
        const int surplus = static_cast<int>(taxis.size()) - sheet["taz_stats"][from]["pending_reservations"].get<int>();
        for (int k = 0; k < surplus && deficit > 0 && !taxis.empty(); ++k, --deficit) {
          d.repositions.emplace_back(taxis.back(), zone);
          taxis.pop_back();
        }
      }
    }
    if (!d.empty()) b.dispatch = d;
  }
  if (b.empty()) return nullptr;
  return json(b);
}

json ScriptedAgent::next(const json& reply) {
  switch (step_) {
    case 0:
      step_ = 1;
      return json{{"type", "hello"}};
    case 1:
      modules_ = reply.value("modules", std::vector<std::string>{});
      step_ = 2;
      return call("PLAN", "Query each enabled module, locate hotspots, then plan upstream modules first.");
    case 2:
      if (api_index_ > 0 && reply.value("type", "") == "call") sheets_[modules_[api_index_ - 1]] = reply["result"];
      if (api_index_ < modules_.size()) return call("GET_CONTROL_API", json{{"module", modules_[api_index_++]}});
      {
        json requests = json::array();
        requests.push_back({{"op", "identify_congestion_hotspots"},
                            {"args", {{"queue_threshold", hotspot_queue_}, {"speed_threshold", hotspot_speed_}}},
                            {"save", "hotspots"}});
        if (has(modules_, "bus_scheduling")) requests.push_back({{"op", "read_bus_states"}, {"args", {{"window", 0}}}});
        if (has(modules_, "subway_scheduling")) {
          requests.push_back({{"op", "read_subway_states"}, {"args", {{"window", 0}}}});
        }
        if (has(modules_, "highway_speed_limit")) {
          requests.push_back({{"op", "read_highway_traffic_states"}, {"args", {{"window", 0}}}});
        }
        if (has(modules_, "ramp_metering")) {
          requests.push_back({{"op", "read_ramp_lane_traffic_states"}, {"args", {{"window", 0}}}});
        }
        step_ = 3;
        return call("DATA_ANALYSIS", requests);
      }
    case 3: {
      last_ = reply;
      bool hot = false;
      if (reply.contains("result") && reply["result"].is_array()) {
        for (const json& r : reply["result"]) {
          if (r["op"] == "identify_congestion_hotspots") hotspots_ = r["result"];
        }
      }
      hot = hotspots_.is_array() && !hotspots_.empty();
      json proposal = hot ? propose(false) : nullptr;
      // Without hotspots only non-signal modules can have a reason to act.
      if (!hot && !sheets_.empty()) {
        json p = propose(false);
        if (!p.is_null()) {
          p.erase("signals");
          ActionBundle rest = p.get<ActionBundle>();
          if (!rest.empty()) proposal = json(rest);
        }
      }
      if (proposal.is_null()) {
        step_ = 5;
        return call("FINISH");
      }
      step_ = 4;
      return {{"type", "policy"}, {"bundle", proposal}};
    }
    case 4: {
      rollouts_.push_back(reply);
      if (!proposed_refined_ && reply.value("type", "") == "rollout_result") {
        proposed_refined_ = true;
        json refined = propose(true);
        if (!refined.is_null() && refined != rollouts_.front()["bundle"]) return {{"type", "policy"}, {"bundle", refined}};
      }
      step_ = 5;
      return call("FINISH");
    }
    case 5: {
      step_ = 6;
      std::vector<std::string> insights;
      if (reply.value("type", "") == "commit" && reply["reward"].contains("task_RI")) {
        const auto& ri = reply["reward"]["task_RI"];
        const bool baseline = reply.value("baseline_committed", false);
        for (std::size_t k = 0; k < modules_.size() && k < ri.size(); ++k) {
          const double v = ri[k];
          if (v == 0.0) continue;
          insights.push_back(modules_[k] + (v > 0 ? " improved" : " regressed") +
                             (baseline ? " under the Classic plan" : " under queue-aware demand-proportional plans") +
                             " relative to the Classic baseline.");
        }
        if (hotspots_.is_array() && !hotspots_.empty()) {
          insights.push_back("Hotspot lane " + hotspots_.front()["lane_id"].get<std::string>() +
                             " carried the longest queue when the episode started.");
        }
      }
      return {{"type", "reflect"}, {"insights", insights}};
    }
    default:
      step_ = 7;
      return json{{"type", "finish"}};
  }
}

}  // namespace utc
