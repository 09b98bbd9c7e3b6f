#include <algorithm>
#include <functional>
#include <map>

#include "utc/controllers.hpp"
#include "utc/runtime.hpp"

namespace utc {

using nlohmann::json;

namespace {

using Args = json;
using OpFn = std::function<json(const Args&, const Environment&, ContextCache&)>;

struct OpSpec {
  std::string name;
  std::vector<std::string> args;
  OpFn fn;
};

double window_arg(const Args& a) { return a.value("window", 0.0); }

std::vector<Id> ids_arg(const Args& a, const char* key, std::vector<Id> all) {
  if (!a.contains(key) || a[key].is_null() || (a[key].is_string() && a[key] == "all")) return all;
  if (a[key].is_string()) return {a[key].get<std::string>()};
  return a[key].get<std::vector<Id>>();
}

template <class W>
json windows_json(const std::vector<W>& ws) {
  json out = json::array();
  for (const auto& w : ws) out.push_back(to_json(w));
  return out;
}

std::vector<Id> lanes_of(const TrafficNetwork& net, std::optional<LaneKind> kind) {
  std::vector<Id> out;
  for (const Lane& l : net.lanes()) {
    if (!kind || l.kind == *kind) out.push_back(l.id);
  }
  return out;
}

std::vector<Id> routes_of(const TrafficNetwork& net, TransitMode mode) {
  std::vector<Id> out;
  for (const TransitRoute& r : net.routes()) {
    if (r.mode == mode) out.push_back(r.id);
  }
  return out;
}

json infra_json(const ZoneInfrastructure& z) {
  return {{"lanes", z.lanes},       {"junctions", z.junctions}, {"highways", z.highways},
          {"ramps", z.ramps},       {"stations", z.stations}};
}

const std::vector<OpSpec>& ops() {
  static const std::vector<OpSpec> table = {
      {"read_lane_traffic_states", {"lanes", "window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         const auto ids = ids_arg(a, "lanes", lanes_of(env.net(), std::nullopt));
         return windows_json(read_lane_traffic_states(env.history(), ids, window_arg(a)));
       }},
      {"read_highway_traffic_states", {"segments", "window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         const auto ids = ids_arg(a, "segments", lanes_of(env.net(), LaneKind::highway_segment));
         return windows_json(read_highway_traffic_states(env.history(), ids, window_arg(a)));
       }},
      {"read_ramp_lane_traffic_states", {"ramps", "window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         const auto ids = ids_arg(a, "ramps", lanes_of(env.net(), LaneKind::ramp));
         return windows_json(read_ramp_lane_traffic_states(env.history(), ids, window_arg(a)));
       }},
      {"read_bus_states", {"routes", "window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         const auto ids = ids_arg(a, "routes", routes_of(env.net(), TransitMode::bus));
         return windows_json(read_bus_states(env.history(), ids, window_arg(a)));
       }},
      {"read_subway_states", {"routes", "window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         const auto ids = ids_arg(a, "routes", routes_of(env.net(), TransitMode::subway));
         return windows_json(read_subway_states(env.history(), ids, window_arg(a)));
       }},
      {"read_taxi_traffic_states", {"window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         return to_json(read_taxi_traffic_states(env.history(), window_arg(a)));
       }},
      {"analyze_zone_traffic", {"zone", "window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         return to_json(analyze_zone_traffic(env.history(), a.at("zone").get<std::string>(), window_arg(a)));
       }},
      {"identify_congestion_hotspots", {"queue_threshold", "speed_threshold"},
       [](const Args& a, const Environment& env, ContextCache&) {
         json out = json::array();
         for (const auto& o : identify_congestion_hotspots(env.history(), a.at("queue_threshold").get<double>(),
                                                           a.at("speed_threshold").get<double>())) {
           json j = to_json(o);
           j.erase("vehicle_details");
           out.push_back(j);
         }
         return out;
       }},
      {"calculate_network_metrics", {"window"},
       [](const Args& a, const Environment& env, ContextCache&) {
         return to_json(calculate_network_metrics(env.history(), window_arg(a)));
       }},
      {"predict_arima", {"lane", "feature", "window", "horizon", "p", "d"},
       [](const Args& a, const Environment& env, ContextCache&) {
         std::vector<double> series;
         Id entity = "series";
         std::string feature;
         if (a.contains("series")) {
           series = a["series"].get<std::vector<double>>();
         } else {
           entity = a.at("lane").get<std::string>();
           feature = a.value("feature", "vehicle_count");
           series = lane_feature_series(env.history(), entity, feature, a.value("window", 600.0));
         }
         Forecast f = predict_arima(series, a.value("horizon", 1), a.value("p", 1), a.value("d", 0));
         f.entity = entity;
         f.feature = feature;
         return to_json(f);
       }},
      {"rank_idle_taxis_by_distance", {"x", "y"},
       [](const Args& a, const Environment& env, ContextCache&) {
         Point target;
         if (a.contains("zone")) {
           const TrafficNetwork& net = env.net();
           target = net.junctions()[net.zone_anchor(net.zone_index(a["zone"].get<std::string>()))].position;
         } else {
           target = Point{a.at("x").get<double>(), a.at("y").get<double>()};
         }
         const auto fleet = taxi_snapshots(env.live());
         return json(rank_idle_taxis_by_distance(fleet, target));
       }},
      {"get_zone_infrastructure", {"zone"},
       [](const Args& a, const Environment& env, ContextCache&) {
         return infra_json(get_zone_infrastructure(env.net(), a.at("zone").get<std::string>()));
       }},
      {"get_zones_by_infrastructure", {"kind"},
       [](const Args& a, const Environment& env, ContextCache&) {
         return json(get_zones_by_infrastructure(env.net(), a.at("kind").get<std::string>()));
       }},
      {"free_flow_travel_time", {"origin", "destination"},
       [](const Args& a, const Environment& env, ContextCache&) {
         return json(free_flow_travel_time(env.net(), a.at("origin").get<std::string>(),
                                           a.at("destination").get<std::string>()));
       }},
      {"list_entities", {"kind"},
       [](const Args& a, const Environment& env, ContextCache&) {
         const TrafficNetwork& net = env.net();
         const std::string kind = a.at("kind").get<std::string>();
         std::vector<Id> out;
         if (kind == "lane") out = lanes_of(net, std::nullopt);
         else if (kind == "highway") out = lanes_of(net, LaneKind::highway_segment);
         else if (kind == "ramp") out = lanes_of(net, LaneKind::ramp);
         else if (kind == "junction") for (const auto& j : net.junctions()) out.push_back(j.id);
         else if (kind == "zone") for (const auto& z : net.zones()) out.push_back(z.id);
         else if (kind == "station") for (const auto& s : net.stations()) out.push_back(s.id);
         else if (kind == "route") for (const auto& r : net.routes()) out.push_back(r.id);
         else throw Error(Errc::not_found, "unknown entity kind '" + kind + "'");
         return json(out);
       }},
      {"save_cache", {"label", "value", "key"},
       [](const Args& a, const Environment& env, ContextCache& cache) {
         const json& v = a.at("value");
         cache.put(a.at("label").get<std::string>(), v.is_string() ? v.get<std::string>() : v.dump(),
                   cache_key_from_json(a.value("key", json::object())), env.live().tick);
         return json{{"saved", a.at("label")}};
       }},
      {"load_cache", {"label"},
       [](const Args& a, const Environment&, ContextCache& cache) {
         return json(cache.get(a.at("label").get<std::string>()));
       }},
      {"list_cache", {},
       [](const Args&, const Environment&, ContextCache& cache) { return json(cache.list()); }},
      {"retrieve_cache", {"key"},
       [](const Args& a, const Environment&, ContextCache& cache) {
         json out = json::array();
         for (const CacheEntry* e : cache.retrieve(cache_key_from_json(a.value("key", json::object())))) {
           out.push_back({{"label", e->label}, {"key", to_json(e->key)}, {"created_at", e->created_at}});
         }
         return out;
       }},
  };
  return table;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& analysis_whitelist() {
  static const std::vector<std::pair<std::string, std::string>> list = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const OpSpec& op : ops()) {
      std::string args;
      for (const auto& a : op.args) args += (args.empty() ? "" : ", ") + a;
      out.emplace_back(op.name, args);
    }
    return out;
  }();
  return list;
}

json run_analysis(const json& request, const Environment& env, ContextCache& cache) {
  if (!request.is_object() || !request.contains("op") || !request["op"].is_string()) {
    throw Error(Errc::protocol, "analysis request must be an object with a string 'op'");
  }
  const std::string name = request["op"];
  const auto& table = ops();
  const auto it = std::find_if(table.begin(), table.end(), [&](const OpSpec& s) { return s.name == name; });
  if (it == table.end()) {
    json allowed = json::array();
    for (const OpSpec& s : table) allowed.push_back(s.name);
    throw Error(Errc::not_found, "unknown operation '" + name + "'; allowed operations: " + allowed.dump());
  }
  json args = request.value("args", json::object());
  if (args.is_array()) {
    json named = json::object();
    for (std::size_t k = 0; k < args.size() && k < it->args.size(); ++k) named[it->args[k]] = args[k];
    args = std::move(named);
  }
  if (!args.is_object()) throw Error(Errc::protocol, "analysis 'args' must be an object or an array");

  json result;
  try {
    result = it->fn(args, env, cache);
  } catch (const json::exception& e) {
    throw Error(Errc::precondition, name + ": bad arguments (" + e.what() + ")");
  }
  if (request.contains("save") && request["save"].is_string()) {
    CacheKey key = cache_key_from_json(request.value("key", json::object()));
    if (!request.contains("key")) {
      const double w = args.value("window", 0.0);
      key.window_start = env.live().clock - w;
      key.window_end = env.live().clock;
      if (args.contains("zone") && args["zone"].is_string()) key.zones = {args["zone"].get<std::string>()};
      key.task = request.value("task", "");
    }
    if (key.kind.empty()) key.kind = name;
    cache.put(request["save"].get<std::string>(), result.dump(), std::move(key), env.live().tick);
    return json{{"op", name}, {"result", result}, {"saved", request["save"]}};
  }
  return json{{"op", name}, {"result", result}};
}

// ---- capability sheets -------------------------------------------------------

json module_dependencies(std::span<const Task> enabled) {
  // Signals shape bus and taxi travel times; mainline limits shape ramp merging.
  static const std::multimap<Task, Task> affects = {
      {Task::signal_timing, Task::bus_scheduling},
      {Task::signal_timing, Task::taxi_dispatching},
      {Task::highway_speed_limit, Task::ramp_metering},
  };
  auto on = [&](Task t) { return std::find(enabled.begin(), enabled.end(), t) != enabled.end(); };
  json out = json::object();
  for (Task t : enabled) {
    json a = json::array(), by = json::array();
    for (const auto& [from, to] : affects) {
      if (from == t && on(to)) a.push_back(to_string(to));
      if (to == t && on(from)) by.push_back(to_string(from));
    }
    out[std::string(to_string(t))] = {{"affects", a}, {"affected_by", by}};
  }
  return out;
}

json capability_sheet(Task task, const Environment& env, std::span<const Task> enabled) {
  const EnvState& s = env.live();
  const TrafficNetwork& net = env.net();
  json sheet;
  sheet["module"] = to_string(task);

  // Metric names, units and directions come straight from the evaluator.
  const Task one[] = {task};
  const HorizonMetrics probe = eval_task_metrics(s, log_cursor(s), one);
  json metrics = json::array();
  for (const MetricValue& m : probe.tasks.front().values) {
    metrics.push_back({{"name", m.name}, {"unit", m.unit}, {"higher_is_better", m.higher_is_better}});
  }
  sheet["metrics"] = metrics;
  sheet["dependencies"] = module_dependencies(enabled)[std::string(to_string(task))];

  json callables = json::array();
  auto add = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) callables.push_back(n);
  };
  add({"calculate_network_metrics", "identify_congestion_hotspots", "analyze_zone_traffic", "predict_arima",
       "save_cache", "load_cache", "list_cache"});

  switch (task) {
    case Task::signal_timing: {
      add({"read_lane_traffic_states"});
      json current = json::object(), bounds = json::object(), ratios = json::object();
      const auto rates = recent_arrival_rates(env.history(), 900.0);
      for (std::size_t j = 0; j < net.junctions().size(); ++j) {
        const Junction& junction = net.junctions()[j];
        if (!junction.signalized || !s.signals[j]) continue;
        current[junction.id] = json(s.signals[j]->plan);
        json phases = json::array();
        for (const Phase& p : junction.phases) {
          json movements = json::array();
          for (const Movement& m : p.green_movements) movements.push_back({m.from, m.to});
          phases.push_back({{"id", p.id}, {"min_green", p.min_green}, {"max_green", p.max_green},
                            {"movements", movements}});
        }
        bounds[junction.id] = {{"phases", phases}, {"lost_time", lost_time(junction)}};
        ratios[junction.id] = phase_flow_ratios(net, junction, rates);
      }
      sheet["action_schema"] = {
          {"signals", "array of {junction, cycle_time, greens[]}; greens in phase order"},
          {"rule", "cycle_time = sum(greens) + lost_time; each green within its phase bounds"}};
      sheet["bounds"] = bounds;
      sheet["current_signal_config"] = current;
      sheet["phase_flow_ratios"] = ratios;
      json lanes = json::object();
      const Snapshot& latest = env.history().latest();
      for (std::size_t l = 0; l < net.lanes().size(); ++l) {
        lanes[net.lanes()[l].id] = {{"saturation_flow", net.lanes()[l].saturation_flow},
                                    {"arrival_rate", rates[l]},
                                    {"queue_length", latest.lanes[l].queue_length}};
      }
      sheet["lanes"] = lanes;
      sheet["webster"] = {{"min_cycle", kWebsterMinCycle}, {"max_cycle", kWebsterMaxCycle}};
      break;
    }
    case Task::highway_speed_limit: {
      add({"read_highway_traffic_states"});
      json current = json::object(), bounds = json::object();
      for (std::size_t l = 0; l < net.lanes().size(); ++l) {
        const Lane& lane = net.lanes()[l];
        if (lane.kind != LaneKind::highway_segment) continue;
        current[lane.id] = {{"limit", s.lanes[l].effective_speed_limit}, {"default", lane.speed_limit}};
        bounds[lane.id] = {kSpeedLimitLowerFactor * lane.speed_limit, kSpeedLimitUpperFactor * lane.speed_limit};
      }
      sheet["action_schema"] = {{"speed_limits", "array of {segment, limit} in m/s"}};
      sheet["bounds"] = bounds;
      sheet["current_highway_speed_limit_config"] = current;
      break;
    }
    case Task::ramp_metering: {
      add({"read_ramp_lane_traffic_states", "read_highway_traffic_states"});
      json current = json::object();
      for (std::size_t l = 0; l < net.lanes().size(); ++l) {
        if (net.lanes()[l].kind == LaneKind::ramp) current[net.lanes()[l].id] = {{"open_duration", s.ramp_open[l]}};
      }
      sheet["action_schema"] = {{"ramps", "array of {ramp, open_duration}; seconds open per 60 s cycle"}};
      sheet["bounds"] = {{"open_duration", {0.0, kRampMeterCycle}}};
      sheet["current_ramp_metering_config"] = current;
      sheet["alinea"] = {{"gain", kAlineaGain}, {"target_occupancy", kAlineaTarget}};
      break;
    }
    case Task::bus_scheduling:
    case Task::subway_scheduling: {
      const TransitMode mode = task == Task::bus_scheduling ? TransitMode::bus : TransitMode::subway;
      add({mode == TransitMode::bus ? "read_bus_states" : "read_subway_states"});
      json current = json::object();
      for (std::size_t r = 0; r < net.routes().size(); ++r) {
        const TransitRoute& route = net.routes()[r];
        if (route.mode != mode) continue;
        json sched = json(s.routes[r].schedule);
        sched["stations"] = route.station_sequence;
        sched["capacity"] = route.vehicle_capacity;
        sched["default_headway"] = route.default_headway;
        current[route.id] = sched;
      }
      sheet["action_schema"] = {
          {"transit", "array of {route, headway, dwell_overrides{station: s}, service_start, service_end}"}};
      sheet["bounds"] = {{"min_headway", kMinHeadway}};
      sheet[mode == TransitMode::bus ? "current_bus_schedule" : "current_subway_schedule"] = current;
      break;
    }
    case Task::taxi_dispatching: {
      add({"read_taxi_traffic_states", "rank_idle_taxis_by_distance"});
      sheet["actions"] = {"dispatch_taxi", "reposition_taxi"};
      const DynamicsParams& p = s.ctx->params;
      sheet["action_schema"] = {
          {"dispatch", "{assignments: [{taxi, reservation}], repositions: [{taxi, zone}]}; idle taxis only"}};
      sheet["current_taxi_config"] = {{"fleet_size", s.taxis.size()},
                                      {"fare_base", p.fare_base},
                                      {"fare_per_km", p.fare_per_km},
                                      {"greedy_dispatch", "built in, every tick"}};
      json fleet = json::array();
      std::map<std::size_t, int> idle_by_zone, pending_by_zone;
      for (const Taxi& tx : s.taxis) {
        fleet.push_back({{"id", tx.id},
                         {"state", to_string(tx.status)},
                         {"parked", !tx.vehicle},
                         {"junction", net.junctions()[tx.junction].id},
                         {"zone", net.zones()[net.junction_zone(tx.junction)].id}});
        if (tx.status == TaxiStatus::idle && !tx.vehicle) ++idle_by_zone[net.junction_zone(tx.junction)];
      }
      json pending = json::array();
      for (const Reservation& r : s.pending) {
        pending.push_back({{"id", reservation_name(r.id)},
                           {"origin", net.junctions()[r.origin].id},
                           {"destination", net.junctions()[r.destination].id},
                           {"request_time", r.request_time}});
        ++pending_by_zone[net.junction_zone(r.origin)];
      }
      json taz = json::object();
      for (std::size_t z = 0; z < net.zones().size(); ++z) {
        taz[net.zones()[z].id] = {{"idle_taxis", idle_by_zone[z]},
                                  {"pending_reservations", pending_by_zone[z]},
                                  {"population_density", net.zones()[z].population_density},
                                  {"poi_count", net.zones()[z].poi_count}};
      }
      sheet["taxi_fleet_state"] = fleet;
      sheet["pending_reservations"] = pending;
      sheet["taz_stats"] = taz;
      break;
    }
  }
  sheet["callables"] = callables;
  return sheet;
}

}  // namespace utc
