#include "utc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "utc/controllers.hpp"
#include "utc/dynamics.hpp"
#include "utc/error.hpp"

namespace utc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool multiple_of(double x, double dt) {
  const double k = std::round(x / dt);
  return std::abs(k * dt - x) <= 1e-9 * std::max(1.0, std::abs(x));
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

// Reads a number field, recording an issue when it has the wrong type.
struct Checker {
  std::vector<ScenarioIssue>& out;
  void fail(Errc code, std::string msg) { out.push_back({code, std::move(msg)}); }
  std::optional<double> num(const json& obj, const char* key, const std::string& where, bool required = false) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) fail(Errc::validation, where + "." + key + " is required");
      return std::nullopt;
    }
    if (!obj[key].is_number()) {
      fail(Errc::validation, where + "." + key + " must be a number");
      return std::nullopt;
    }
    return obj[key].get<double>();
  }
};

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  return doc.contains(key) ? doc[key] : empty;
}

}  // namespace

std::string Scenario::digest() const { return hex64(fnv1a(document.dump())); }

std::vector<ScenarioIssue> scenario_issues(const json& doc, const fs::path& base) {
  std::vector<ScenarioIssue> issues;
  Checker c{issues};
  if (!doc.is_object()) {
    c.fail(Errc::validation, "scenario must be a JSON object");
    return issues;
  }

  if (!doc.contains("name") || !doc["name"].is_string() || doc["name"].get<std::string>().empty()) {
    c.fail(Errc::validation, "name must be a non-empty string");
  } else {
    for (char ch : doc["name"].get<std::string>()) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-') {
        c.fail(Errc::validation, "name may only use letters, digits, '_' and '-'");
        break;
      }
    }
  }

  std::optional<TrafficNetwork> net;
  if (!doc.contains("network") || !doc["network"].is_string()) {
    c.fail(Errc::validation, "network must be a file path");
  } else {
    const fs::path p = resolve(base, doc["network"]);
    if (!fs::exists(p)) {
      c.fail(Errc::not_found, "network file " + p.string() + " does not exist");
    } else {
      try {
        const json nd = read_json_file(p);
        const auto net_issues = network_issues(nd);
        for (const auto& i : net_issues) c.fail(i.code, "network: " + i.message);
        if (net_issues.empty()) net = TrafficNetwork::from_json(nd);
      } catch (const Error& e) {
        c.fail(e.code(), std::string("network: ") + e.what());
      }
    }
  }

  const json& demand = section(doc, "demand");
  if (!doc.contains("demand") || !demand.is_object()) {
    c.fail(Errc::validation, "demand must be an object");
  } else {
    if (auto t = c.num(demand, "total_trips", "demand", true); t && !(*t > 0)) {
      c.fail(Errc::validation, "demand.total_trips must be > 0");
    }
    const auto wp = c.num(demand, "w_pop", "demand");
    const auto wi = c.num(demand, "w_poi", "demand");
    if ((wp && *wp < 0) || (wi && *wi < 0)) c.fail(Errc::validation, "demand weights must be >= 0");
    if (wp && wi && *wp == 0 && *wi == 0) c.fail(Errc::validation, "demand weights cannot both be 0");
    if (auto f = c.num(demand, "intra_zone_floor", "demand"); f && !(*f > 0)) {
      c.fail(Errc::validation, "demand.intra_zone_floor must be > 0");
    }
    if (demand.contains("profile")) {
      try {
        const TemporalProfile p = profile_from_json(demand["profile"]);
        double sum = 0.0;
        for (double w : p) {
          if (w < 0) c.fail(Errc::validation, "demand.profile weights must be >= 0");
          sum += w;
        }
        if (!(sum > 0)) c.fail(Errc::validation, "demand.profile must have a positive weight");
      } catch (const std::exception& e) {
        c.fail(Errc::validation, std::string("demand.profile: ") + e.what());
      }
    }
    if (demand.contains("mode_table") && !(demand["mode_table"].is_string() && demand["mode_table"] == "default")) {
      try {
        json table = demand["mode_table"];
        if (table.is_string()) table = read_json_file(resolve(base, table.get<std::string>()));
        (void)ModeSplitTable::from_json(table);
      } catch (const std::exception& e) {
        c.fail(Errc::validation, std::string("demand.mode_table: ") + e.what());
      }
    }
    if (demand.contains("purposes")) {
      if (!demand["purposes"].is_array()) {
        c.fail(Errc::validation, "demand.purposes must be an array");
      } else {
        for (const json& p : demand["purposes"]) {
          if (!p.is_object() || !p.contains("origin") || !p.contains("destination") || !p.contains("purpose")) {
            c.fail(Errc::validation, "demand.purposes entries need origin, destination and purpose");
          } else if (net && (!net->find_zone(p["origin"]) || !net->find_zone(p["destination"]))) {
            c.fail(Errc::dangling_reference, "demand.purposes references an unknown zone");
          }
        }
      }
    }
  }

  if (doc.contains("fleet_size") && !(doc["fleet_size"].is_number_unsigned() || doc["fleet_size"] == 0)) {
    c.fail(Errc::validation, "fleet_size must be a nonnegative integer");
  }

  if (!doc.contains("tasks") || !doc["tasks"].is_array() || doc["tasks"].empty()) {
    c.fail(Errc::validation, "tasks must be a non-empty array");
  } else {
    std::set<std::string> seen;
    for (const json& t : doc["tasks"]) {
      if (!t.is_string()) {
        c.fail(Errc::validation, "tasks entries must be strings");
        continue;
      }
      try {
        (void)parse_task(t.get<std::string>());
      } catch (const std::exception& e) {
        c.fail(Errc::validation, std::string("tasks: ") + e.what());
      }
      if (!seen.insert(t.get<std::string>()).second) c.fail(Errc::duplicate, "tasks lists " + t.get<std::string>() + " twice");
    }
  }

  const json& sim = section(doc, "simulation");
  const double start = c.num(sim, "start", "simulation").value_or(0.0);
  const double end = c.num(sim, "end", "simulation").value_or(86400.0);
  const double dt = c.num(sim, "dt", "simulation").value_or(kDefaultDt);
  bool timing_ok = true;
  if (start < 0 || end > 86400.0 || !(end > start)) {
    c.fail(Errc::validation, "simulation needs 0 <= start < end <= 86400");
    timing_ok = false;
  }
  if (!(dt > 0) || !multiple_of(end - start, dt)) {
    c.fail(Errc::validation, "simulation.dt must be > 0 and divide end - start");
    timing_ok = false;
  }

  const json& ep = section(doc, "episodes");
  const double horizon = c.num(ep, "horizon", "episodes").value_or(1800.0);
  if (!(horizon > 0) || (dt > 0 && !multiple_of(horizon, dt))) {
    c.fail(Errc::validation, "episodes.horizon must be a positive multiple of dt");
    timing_ok = false;
  }
  if (ep.contains("starts")) {
    if (!ep["starts"].is_array()) {
      c.fail(Errc::validation, "episodes.starts must be an array of times");
    } else if (timing_ok) {
      double prev_end = start;
      for (const json& s : ep["starts"]) {
        if (!s.is_number()) {
          c.fail(Errc::validation, "episodes.starts entries must be numbers");
          continue;
        }
        const double t = s.get<double>();
        if (t < prev_end || t + horizon > end) {
          c.fail(Errc::validation, "episode at " + std::to_string(t) +
                                       " overlaps another episode or leaves the simulated span");
        } else if (!multiple_of(t - start, dt)) {
          c.fail(Errc::validation, "episode at " + std::to_string(t) + " is not on a tick boundary");
        }
        prev_end = std::max(prev_end, t + horizon);
      }
    }
  }

  if (doc.contains("seed") && !doc["seed"].is_number_unsigned() && doc["seed"] != 0) {
    c.fail(Errc::validation, "seed must be a nonnegative integer");
  }
  for (const char* k : {"alpha", "beta"}) {
    if (auto v = c.num(doc, k, "scenario"); v && !(*v > 0)) c.fail(Errc::validation, std::string(k) + " must be > 0");
  }

  const json& agent = section(doc, "agent");
  for (const char* k : {"turn_limit", "rollout_budget", "workers"}) {
    if (auto v = c.num(agent, k, "agent"); v && !(*v >= 1)) {
      c.fail(Errc::validation, std::string("agent.") + k + " must be >= 1");
    }
  }
  if (auto v = c.num(agent, "reflection_turn_limit", "agent"); v && *v < 0) {
    c.fail(Errc::validation, "agent.reflection_turn_limit must be >= 0");
  }
  for (const char* k : {"hotspot_queue", "hotspot_speed"}) {
    if (auto v = c.num(agent, k, "agent"); v && !(*v > 0)) c.fail(Errc::validation, std::string("agent.") + k + " must be > 0");
  }

  const json& ctl = section(doc, "controllers");
  for (const char* k : {"dwell_base", "dwell_per_boarding", "fare_base", "fare_per_km", "recent_order_window"}) {
    if (auto v = c.num(ctl, k, "controllers"); v && *v < 0) {
      c.fail(Errc::validation, std::string("controllers.") + k + " must be >= 0");
    }
  }
  return issues;
}

Scenario scenario_from_json(const json& doc, const fs::path& base) {
  const auto issues = scenario_issues(doc, base);
  if (!issues.empty()) {
    std::string msg = "invalid scenario (" + std::to_string(issues.size()) + " issue" +
                      (issues.size() == 1 ? "" : "s") + "):";
    for (const auto& i : issues) msg += "\n  [" + std::string(errc_name(i.code)) + "] " + i.message;
    throw Error(issues.front().code == Errc::not_found ? Errc::not_found : Errc::validation, msg);
  }
  Scenario s;
  s.document = doc;
  s.name = doc["name"];
  s.network = resolve(base, doc["network"]);
  const json& d = doc["demand"];
  s.demand.total_trips = d["total_trips"];
  s.demand.w_pop = d.value("w_pop", 0.5);
  s.demand.w_poi = d.value("w_poi", 0.5);
  s.demand.intra_zone_floor = d.value("intra_zone_floor", kDefaultIntraZoneFloor);
  if (d.contains("profile")) s.demand.profile = profile_from_json(d["profile"]);
  if (d.contains("mode_table") && !(d["mode_table"].is_string() && d["mode_table"] == "default")) {
    json table = d["mode_table"];
    if (table.is_string()) table = read_json_file(resolve(base, table.get<std::string>()));
    s.demand.modes = ModeSplitTable::from_json(table);
  }
  for (const json& p : d.value("purposes", json::array())) {
    s.demand.purposes[{p["origin"].get<Id>(), p["destination"].get<Id>()}] = p["purpose"].get<std::string>();
  }
  s.fleet_size = doc.value("fleet_size", std::size_t{0});
  for (const json& t : doc["tasks"]) s.tasks.push_back(parse_task(t.get<std::string>()));
  const json& sim = section(doc, "simulation");
  s.start = sim.value("start", 0.0);
  s.end = sim.value("end", 86400.0);
  s.dt = sim.value("dt", kDefaultDt);
  const json& ep = section(doc, "episodes");
  s.horizon = ep.value("horizon", 1800.0);
  s.episodes = ep.value("starts", std::vector<double>{});
  s.seed = doc.value("seed", std::uint64_t{0});
  s.alpha = doc.value("alpha", 0.5);
  s.beta = doc.value("beta", 0.5);
  const json& ctl = section(doc, "controllers");
  s.controllers.dwell_base = ctl.value("dwell_base", s.controllers.dwell_base);
  s.controllers.dwell_per_boarding = ctl.value("dwell_per_boarding", s.controllers.dwell_per_boarding);
  s.controllers.fare_base = ctl.value("fare_base", s.controllers.fare_base);
  s.controllers.fare_per_km = ctl.value("fare_per_km", s.controllers.fare_per_km);
  s.controllers.recent_order_window = ctl.value("recent_order_window", s.controllers.recent_order_window);
  s.controllers.start_time = s.start;
  const json& ag = section(doc, "agent");
  s.agent.turn_limit = ag.value("turn_limit", 20);
  s.agent.reflection_turn_limit = ag.value("reflection_turn_limit", 5);
  s.agent.rollout_budget = ag.value("rollout_budget", 5);
  s.agent.workers = ag.value("workers", 1u);
  s.agent.judge_endpoint = ag.value("judge_endpoint", "");
  if (ag.contains("psm")) s.agent.psm = resolve(base, ag["psm"].get<std::string>());
  s.agent.hotspot_queue = ag.value("hotspot_queue", 5.0);
  s.agent.hotspot_speed = ag.value("hotspot_speed", 2.0);
  return s;
}

Scenario load_scenario(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::not_found, "scenario file " + path.string() + " does not exist");
  Scenario s = scenario_from_json(read_json_file(path), path.parent_path());
  s.file = path;
  return s;
}

BuiltDemand build_demand(const Scenario& sc, std::uint64_t seed) {
  BuiltDemand out;
  out.net = std::make_shared<const TrafficNetwork>(load_network(sc.network));
  const ActivityProfile activity = compute_activity(*out.net, sc.demand.w_pop, sc.demand.w_poi);
  const auto imp = impedance_matrix(*out.net, sc.demand.intra_zone_floor);
  out.od = apply_mode_split(gravity_demand(activity, imp, sc.demand.total_trips), sc.demand.modes,
                            distance_purpose_categorizer(*out.net, sc.demand.purposes));
  out.trips = sample_trips(out.od, sc.demand.profile, seed);
  return out;
}

std::string_view to_string(RunMode mode) noexcept {
  switch (mode) {
    case RunMode::baseline: return "baseline";
    case RunMode::scripted: return "scripted";
    case RunMode::external: return "external";
  }
  return "baseline";
}

RunMode parse_run_mode(std::string_view text) {
  if (text == "baseline") return RunMode::baseline;
  if (text == "scripted") return RunMode::scripted;
  if (text == "external" || text == "external-agent" || text == "agent") return RunMode::external;
  throw Error(Errc::precondition, "unknown mode '" + std::string(text) + "'; expected baseline, scripted or external");
}

std::string run_name(const Scenario& sc, std::uint64_t seed, RunMode mode) {
  return sc.name + "_" + std::to_string(seed) + "_" + std::string(to_string(mode));
}

// ---- metric tables ----------------------------------------------------------

std::string_view metric_column(std::string_view m) {
  if (m == "throughput") return "Throughput";
  if (m == "avg_waiting_time" || m == "passenger_waiting_time") return "Wait";
  if (m == "fuel_kg") return "Fuel";
  if (m == "income") return "Income";
  if (m == "dropoffs") return "Drop-off";
  if (m == "electricity_kwh") return "Electricity";
  if (m == "avg_travel_time") return "Travel";
  if (m == "avg_queue") return "Queue";
  if (m == "avg_speed") return "Speed";
  return m;
}

bool metric_higher_is_better(std::string_view m) {
  return m == "throughput" || m == "income" || m == "dropoffs" || m == "avg_speed";
}

HorizonMetrics horizon_metrics_from_json(const json& j) {
  HorizonMetrics m;
  m.start = j.value("start", 0.0);
  m.duration = j.value("duration", 0.0);
  m.avg_travel = j.value("avg_travel_time", 0.0);
  m.avg_waiting = j.value("avg_waiting_time", 0.0);
  m.throughput = j.value("throughput", 0.0);
  m.empty = j.value("empty", true);
  for (const json& t : j.value("tasks", json::array())) {
    TaskMetrics tm;
    tm.task = parse_task(t.at("task").get<std::string>());
    tm.empty = t.value("empty", false);
    for (const auto& [name, v] : t.at("metrics").items()) {
      tm.values.push_back(MetricValue{name, v.get<double>(), metric_higher_is_better(name), ""});
    }
    m.tasks.push_back(std::move(tm));
  }
  return m;
}

namespace {

inline const char* const kColumns[] = {"Throughput", "Wait",   "Fuel",  "Income", "Drop-off",
                                       "Electricity", "Travel", "Queue", "Speed"};

json task_table(const HorizonMetrics& m) {
  json rows = json::array();
  for (const TaskMetrics& t : m.tasks) {
    json cols = json::object();
    for (const MetricValue& v : t.values) cols[std::string(metric_column(v.name))] = v.value;
    rows.push_back({{"task", to_string(t.task)}, {"empty", t.empty}, {"columns", cols}});
  }
  return rows;
}

double task_f_ri(const HorizonMetrics& policy, const HorizonMetrics& baseline, std::vector<double>* per_task) {
  for (const TaskMetrics& p : policy.tasks) {
    const TaskMetrics* b = baseline.find(p.task);
    if (!b || !per_task) continue;
    const TaskMetrics pt[] = {p};
    const TaskMetrics bt[] = {*b};
    per_task->push_back(relative_improvement(pt, bt));
  }
  return relative_improvement(policy.tasks, baseline.tasks);
}

struct Writer {
  std::ofstream events;
  std::ofstream transcripts;

  void drain(Environment& env, const std::string& window) {
    for (const Event& e : env.drain_events()) {
      json line = to_json(e);
      line["window"] = window;
      events << line.dump() << '\n';
    }
  }
};

std::string clock_text(double t) {
  const long s = std::lround(t);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%02ld:%02ld", (s / 3600), (s / 60) % 60);
  return buf;
}

std::pair<std::string, int> parse_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::precondition, "--listen expects stdio or host:port");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(Errc::precondition, "--listen port is not a number: " + listen);
  }
}

}  // namespace

RunResult cmd_run(const Scenario& sc, const RunOptions& opt) {
  using Clock = std::chrono::steady_clock;
  const auto wall_start = Clock::now();
  const std::uint64_t seed = opt.seed.value_or(sc.seed);
  RunResult result;
  result.dir = opt.out / run_name(sc, seed, opt.mode);

  json baseline_report;
  if (opt.mode != RunMode::baseline) {
    const fs::path base = opt.out / run_name(sc, seed, RunMode::baseline) / "report.json";
    if (!fs::exists(base)) {
      throw Error(Errc::missing_baseline, "no baseline report for scenario '" + sc.name + "' seed " +
                                              std::to_string(seed) + " at " + base.string() +
                                              "; run `utc run --scenario <file> --mode baseline --seed " +
                                              std::to_string(seed) + "` first");
    }
    baseline_report = read_json_file(base);
    if (baseline_report.value("scenario_digest", "") != sc.digest()) {
      throw Error(Errc::scenario_mismatch, "stored baseline at " + base.string() +
                                               " was produced from a different scenario document; rerun the baseline");
    }
  }

  fs::remove_all(result.dir);
  fs::create_directories(result.dir);
  write_text(result.dir / "scenario.json", sc.document.dump(2) + "\n");

  BuiltDemand demand = build_demand(sc, seed);
  const std::size_t trip_count = demand.trips.size();
  EnvState initial = init_state(demand.net, std::move(demand.trips), sc.fleet_size, seed, sc.controllers);
  initial.record_events = true;
  Environment env(std::move(initial));
  const LogCursor origin = log_cursor(env.live());

  Writer out;
  out.events.open(result.dir / "events.ndjson", std::ios::binary);
  out.transcripts.open(result.dir / "transcripts.ndjson", std::ios::binary);
  if (!out.events || !out.transcripts) throw Error(Errc::io, "cannot create run artifacts in " + result.dir.string());

  const fs::path psm_path = sc.agent.psm.empty() ? result.dir / "psm.json" : sc.agent.psm;
  PsmStore psm = opt.mode == RunMode::baseline ? PsmStore{} : load_psm(psm_path);

  json windows = json::array();
  json episodes = json::array();
  json timing_episodes = json::array();
  std::vector<double> f_ri_values;

  auto classic_until = [&](double until) {
    while (env.live().clock + 1e-9 < until) {
      const double chunk = std::min(sc.horizon, until - env.live().clock);
      const double from = env.live().clock;
      const ActionBundle bundle = classic_bundle(env.live(), env.history(), chunk);
      const HorizonMetrics m = env.advance(bundle, chunk, sc.tasks, sc.dt);
      out.drain(env, clock_text(from) + "-" + clock_text(from + chunk));
      windows.push_back({{"kind", "classic"}, {"start", from}, {"end", from + chunk}, {"metrics", m.to_json()}});
    }
  };

  for (std::size_t k = 0; k < sc.episodes.size(); ++k) {
    classic_until(sc.episodes[k]);
    const auto ep_start = Clock::now();
    const double start = env.live().clock;
    const std::string id = sc.name + "_" + std::to_string(seed) + "_ep" + std::to_string(k + 1);
    const std::string window = clock_text(start) + "-" + clock_text(start + sc.horizon);
    json ep = {{"episode_id", id}, {"start", start}, {"window", window}};
    HorizonMetrics metrics;
    if (opt.mode == RunMode::baseline) {
      const ActionBundle bundle = classic_bundle(env.live(), env.history(), sc.horizon);
      metrics = env.advance(bundle, sc.horizon, sc.tasks, sc.dt);
      const HorizonMetrics self[] = {metrics};
      ep["reward"] = system_reward(self, self).to_json();
      ep["baseline_committed"] = true;
    } else {
      EpisodeConfig cfg;
      cfg.tasks = sc.tasks;
      cfg.horizon = sc.horizon;
      cfg.turn_limit = sc.agent.turn_limit;
      cfg.reflection_turn_limit = sc.agent.reflection_turn_limit;
      cfg.rollout_budget = sc.agent.rollout_budget;
      cfg.seed = seed;
      cfg.alpha = sc.alpha;
      cfg.beta = sc.beta;
      cfg.dt = sc.dt;
      cfg.workers = sc.agent.workers;
      cfg.judge.endpoint = sc.agent.judge_endpoint;
      cfg.episode_id = id;
      cfg.psm_path = psm_path;
      EpisodeSession session(env, cfg, psm);
      if (opt.mode == RunMode::scripted) {
        run_scripted_episode(session, ScriptedAgent(sc.agent.hotspot_queue, sc.agent.hotspot_speed));
      } else if (opt.listen == "stdio") {
        serve_stream(session, opt.in ? *opt.in : std::cin, opt.out_stream ? *opt.out_stream : std::cout);
      } else {
        const auto [host, port] = parse_listen(opt.listen);
        serve_tcp(session, host, port);
      }
      if (!session.finished()) session.handle(json{{"type", "finish"}});
      psm = session.psm();
      const EpisodeRecord& rec = session.record();
      out.transcripts << transcript_ndjson(rec);
      metrics = rec.committed_metrics;
      ep["reward"] = rec.reward.to_json();
      ep["baseline_committed"] = rec.baseline_committed;
      ep["committed_rollout"] = rec.committed_rollout ? json(*rec.committed_rollout) : json(nullptr);
      ep["rollouts"] = rec.rollouts.size();
      ep["turns"] = rec.turns.size();
      ep["judge"] = {{"score", rec.verdict.score},
                     {"source", rec.verdict.source == JudgeSource::stub ? "stub" : "external"},
                     {"fell_back", rec.verdict.fell_back}};
      ep["insights"] = rec.insights;
      ep["summary_fallback"] = rec.summary_fallback;
      ep["warnings"] = rec.warnings;
      ep["committed"] = json(rec.committed);
    }
    out.drain(env, window);

    HorizonMetrics reference = metrics;
    if (opt.mode != RunMode::baseline) {
      bool found = false;
      for (const json& b : baseline_report["episodes"]) {
        if (b.value("start", -1.0) == start) {
          reference = horizon_metrics_from_json(b["metrics"]);
          found = true;
        }
      }
      if (!found) throw Error(Errc::scenario_mismatch, "stored baseline has no episode starting at " + window);
    }
    std::vector<double> per_task;
    const double f = task_f_ri(metrics, reference, &per_task);
    f_ri_values.push_back(f);
    ep["f_ri_vs_baseline"] = f;
    ep["task_ri_vs_baseline"] = per_task;
    ep["metrics"] = metrics.to_json();
    episodes.push_back(ep);
    windows.push_back({{"kind", "episode"}, {"start", start}, {"end", start + sc.horizon}, {"metrics", metrics.to_json()}});
    timing_episodes.push_back(
        {{"episode_id", id}, {"seconds", std::chrono::duration<double>(Clock::now() - ep_start).count()}});
  }
  classic_until(sc.end);

  const HorizonMetrics global = eval_task_metrics(env.live(), origin, sc.tasks);
  double f_mean = 0.0;
  for (double f : f_ri_values) f_mean += f;
  if (!f_ri_values.empty()) f_mean /= static_cast<double>(f_ri_values.size());
  json tasks = json::array();
  for (Task t : sc.tasks) tasks.push_back(to_string(t));
  const EnvState& end = env.live();

  json report = {
      {"scenario", sc.name},
      {"scenario_digest", sc.digest()},
      {"seed", seed},
      {"mode", to_string(opt.mode)},
      {"tasks", tasks},
      {"simulation", {{"start", sc.start}, {"end", sc.end}, {"dt", sc.dt}, {"horizon", sc.horizon}}},
      {"global", {{"avg_travel_time", global.avg_travel},
                  {"avg_waiting_time", global.avg_waiting},
                  {"throughput", global.throughput},
                  {"metrics", global.to_json()}}},
      {"task_table", task_table(global)},
      {"f_ri", {{"mean", f_mean}, {"per_episode", f_ri_values}}},
      {"episodes", episodes},
      {"windows", windows},
      {"counts", {{"trips", trip_count},
                  {"entered", end.entered},
                  {"exited", end.exited},
                  {"in_network", end.in_network()},
                  {"walk_trips", end.logs.walk_trips},
                  {"unroutable_trips", end.logs.unroutable_trips},
                  {"unserved_transit", end.logs.unserved_transit},
                  {"cancelled_reservations", end.logs.cancelled_reservations}}},
      {"state_hash", hex64(state_hash(end))}};

  write_text(result.dir / "report.json", report.dump(2) + "\n");
  write_text(result.dir / "report.txt", render_report(report));
  const double wall = std::chrono::duration<double>(Clock::now() - wall_start).count();
  const json timing = {{"wall_seconds", wall},
                       {"simulated_seconds", sc.end - sc.start},
                       {"ticks", end.tick},
                       {"ticks_per_second", wall > 0 ? static_cast<double>(end.tick) / wall : 0.0},
                       {"episodes", timing_episodes}};
  write_text(result.dir / "timing.json", timing.dump(2) + "\n");
  result.report = std::move(report);
  return result;
}

// ---- compare -----------------------------------------------------------------

json cmd_compare(const json& a, const json& b) {
  const auto same = [&](const char* key) { return a.value(key, json(nullptr)) == b.value(key, json(nullptr)); };
  if (!same("scenario") || !same("seed") || !same("scenario_digest")) {
    throw Error(Errc::scenario_mismatch,
                "reports come from different runs: scenario " + a.value("scenario", json("?")).dump() + " seed " +
                    a.value("seed", json(nullptr)).dump() + " vs scenario " + b.value("scenario", json("?")).dump() +
                    " seed " + b.value("seed", json(nullptr)).dump());
  }
  json rows = json::array();
  double sum = 0.0;
  int n = 0;
  auto row = [&](const std::string& scope, const std::string& metric, double va, double vb) {
    const bool higher = metric_higher_is_better(metric);
    json change = nullptr, improvement = nullptr;
    if (va != 0.0) {
      const double pct = (vb - va) / std::abs(va) * 100.0;
      change = pct;
      improvement = higher ? pct : -pct;
    } else if (vb == 0.0) {
      change = 0.0;
      improvement = 0.0;
    }
    if (!improvement.is_null()) {
      sum += improvement.get<double>();
      ++n;
    }
    rows.push_back({{"scope", scope},
                    {"metric", metric},
                    {"column", metric_column(metric)},
                    {"higher_is_better", higher},
                    {"a", va},
                    {"b", vb},
                    {"change_pct", change},
                    {"improvement_pct", improvement}});
  };
  for (const char* m : {"avg_travel_time", "avg_waiting_time", "throughput"}) {
    row("global", m, a["global"].value(m, 0.0), b["global"].value(m, 0.0));
  }
  const HorizonMetrics ma = horizon_metrics_from_json(a["global"]["metrics"]);
  const HorizonMetrics mb = horizon_metrics_from_json(b["global"]["metrics"]);
  for (const TaskMetrics& ta : ma.tasks) {
    const TaskMetrics* tb = mb.find(ta.task);
    if (!tb) continue;
    for (const MetricValue& v : ta.values) {
      row(std::string(to_string(ta.task)), v.name, v.value, tb->value(v.name));
    }
  }
  return {{"scenario", a["scenario"]},
          {"seed", a["seed"]},
          {"a_mode", a.value("mode", "")},
          {"b_mode", b.value("mode", "")},
          {"rows", rows},
          {"mean_improvement_pct", n ? sum / n : 0.0}};
}

// ---- validate / demand -----------------------------------------------------------

json cmd_validate(const fs::path& path) {
  json failures = json::array();
  if (!fs::exists(path)) {
    failures.push_back({{"code", errc_name(Errc::not_found)}, {"message", "scenario file " + path.string() + " does not exist"}});
  } else {
    try {
      for (const auto& i : scenario_issues(read_json_file(path), path.parent_path())) {
        failures.push_back({{"code", errc_name(i.code)}, {"message", i.message}});
      }
    } catch (const Error& e) {
      failures.push_back({{"code", errc_name(e.code())}, {"message", e.what()}});
    }
  }
  return {{"scenario", path.string()}, {"ok", failures.empty()}, {"failures", failures}};
}

json cmd_demand(const Scenario& sc, const fs::path& out, std::optional<std::uint64_t> seed_opt) {
  const std::uint64_t seed = seed_opt.value_or(sc.seed);
  const BuiltDemand d = build_demand(sc, seed);
  fs::create_directories(out);
  write_text(out / "od.json", to_json(d.od).dump(2) + "\n");
  std::ostringstream csv;
  csv << "id,origin,destination,mode,departure_time\n";
  char buf[32];
  for (const Trip& t : d.trips) {
    std::snprintf(buf, sizeof buf, "%.3f", t.departure_time);
    csv << t.id << ',' << t.origin << ',' << t.destination << ',' << to_string(t.mode) << ',' << buf << '\n';
  }
  write_text(out / "trips.csv", csv.str());
  const json stats = {{"scenario", sc.name},
                      {"seed", seed},
                      {"columns", {"Taxi", "Public Transit", "Walk", "Total"}},
                      {"expected", demand_stats(d.od).to_json()},
                      {"sampled", demand_stats(d.trips).to_json()},
                      {"trip_count", d.trips.size()}};
  write_text(out / "demand_stats.json", stats.dump(2) + "\n");
  write_text(out / "demand_stats.txt", render_demand_stats(stats));
  return stats;
}

// ---- rendering ---------------------------------------------------------------

namespace {

std::string fmt(const json& v, int precision = 2) {
  if (v.is_null()) return "-";
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_string()) return v.get<std::string>();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v.get<double>());
  return buf;
}

std::string pad(const std::string& s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

}  // namespace

std::string render_report(const json& r) {
  std::ostringstream out;
  out << "Scenario " << r["scenario"].get<std::string>() << "  seed " << r["seed"].get<std::uint64_t>() << "  mode "
      << r["mode"].get<std::string>() << "\n";
  out << "Simulated " << clock_text(r["simulation"]["start"]) << "-" << clock_text(r["simulation"]["end"])
      << ", state hash " << r["state_hash"].get<std::string>() << "\n\n";
  out << "Global average travel time (s): " << fmt(r["global"]["avg_travel_time"]) << "\n";
  out << "Global average waiting time (s): " << fmt(r["global"]["avg_waiting_time"]) << "\n";
  out << "Road throughput (veh/h): " << fmt(r["global"]["throughput"]) << "\n\n";

  out << pad("Task", 20, true);
  for (const char* c : kColumns) out << pad(c, 13);
  out << "\n";
  for (const json& row : r["task_table"]) {
    out << pad(row["task"].get<std::string>() + (row["empty"].get<bool>() ? "*" : ""), 20, true);
    for (const char* c : kColumns) out << pad(fmt(row["columns"].value(c, json(nullptr))), 13);
    out << "\n";
  }
  out << "(* no observations in the run; values reported as 0)\n\n";

  out << pad("Episode", 28, true) << pad("Window", 13) << pad("Committed", 11) << pad("f_RI", 9) << pad("R_env", 9)
      << pad("Judge", 7) << pad("Total", 9) << "\n";
  for (const json& e : r["episodes"]) {
    const json& rw = e["reward"];
    const bool base = e.value("baseline_committed", false);
    out << pad(e["episode_id"].get<std::string>(), 28, true) << pad(e["window"].get<std::string>(), 13)
        << pad(base ? "classic" : "rollout " + e.value("committed_rollout", json(0)).dump(), 11)
        << pad(fmt(e["f_ri_vs_baseline"], 4), 9) << pad(fmt(rw["R_env"], 4), 9)
        << pad(e.contains("judge") ? std::to_string(e["judge"]["score"].get<int>()) : "-", 7)
        << pad(fmt(rw["R"], 4), 9) << "\n";
  }
  out << "\nMean f_RI vs stored baseline: " << fmt(r["f_ri"]["mean"], 4) << "\n";
  const json& c = r["counts"];
  out << "Trips " << c["trips"].get<std::uint64_t>() << ", entered " << c["entered"].get<std::uint64_t>() << ", exited "
      << c["exited"].get<std::uint64_t>() << ", in network " << c["in_network"].get<std::uint64_t>() << "\n";
  return out.str();
}

std::string render_comparison(const json& cmp) {
  std::ostringstream out;
  out << "Comparison for " << cmp["scenario"].get<std::string>() << " seed " << cmp["seed"].dump() << ": "
      << cmp["a_mode"].get<std::string>() << " (A) vs " << cmp["b_mode"].get<std::string>() << " (B)\n";
  out << pad("Scope", 20, true) << pad("Metric", 24, true) << pad("A", 12) << pad("B", 12) << pad("Change %", 11)
      << pad("Improve %", 11) << "\n";
  for (const json& row : cmp["rows"]) {
    out << pad(row["scope"].get<std::string>(), 20, true) << pad(row["metric"].get<std::string>(), 24, true)
        << pad(fmt(row["a"]), 12) << pad(fmt(row["b"]), 12) << pad(fmt(row["change_pct"]), 11)
        << pad(fmt(row["improvement_pct"]), 11) << "\n";
  }
  out << "Mean improvement: " << fmt(cmp["mean_improvement_pct"]) << "%\n";
  return out.str();
}

std::string render_demand_stats(const json& stats) {
  std::ostringstream out;
  out << pad("", 16, true);
  for (const json& c : stats["columns"]) out << pad(c.get<std::string>(), 16);
  out << "\n";
  for (const char* row : {"expected", "sampled"}) {
    out << pad(row == std::string("expected") ? "Expected (OD)" : "Sampled trips", 16, true);
    for (const json& c : stats["columns"]) out << pad(fmt(stats[row][c.get<std::string>()], 1), 16);
    out << "\n";
  }
  return out.str();
}

}  // namespace utc
