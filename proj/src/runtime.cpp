#include "utc/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>

#include "utc/controllers.hpp"

namespace utc {

using nlohmann::json;

namespace {

std::string clock_text(double t) {
  const long s = std::lround(t);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02ld:%02ld", (s / 3600) % 24, (s / 60) % 60);
  return buf;
}

std::string window_text(double start, double horizon) { return clock_text(start) + "-" + clock_text(start + horizon); }

Task task_for_mode(TransitMode m) { return m == TransitMode::bus ? Task::bus_scheduling : Task::subway_scheduling; }

bool enabled(std::span<const Task> tasks, Task t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); }

}  // namespace

void EpisodeConfig::validate() const {
  if (tasks.empty()) throw Error(Errc::precondition, "episode needs at least one task");
  std::set<Task> seen(tasks.begin(), tasks.end());
  if (seen.size() != tasks.size()) throw Error(Errc::precondition, "duplicate task in episode config");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw Error(Errc::precondition, "horizon and dt must be positive");
  const double steps = std::round(horizon / dt);
  if (std::abs(steps * dt - horizon) > 1e-9 * horizon) {
    throw Error(Errc::precondition, "horizon must be a multiple of dt");
  }
  if (turn_limit < 1) throw Error(Errc::precondition, "turn_limit must be at least 1");
  if (reflection_turn_limit < 0) throw Error(Errc::precondition, "reflection_turn_limit must be >= 0");
  if (rollout_budget < 1) throw Error(Errc::precondition, "rollout_budget must be at least 1");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error(Errc::precondition, "alpha and beta must be positive");
  if (workers < 1) throw Error(Errc::precondition, "workers must be at least 1");
}

// ---- environment -----------------------------------------------------------

Environment::Environment(EnvState initial) : live_(std::move(initial)), history_(live_.ctx->net) {
  history_.record(live_);
}

HorizonMetrics Environment::advance(const ActionBundle& bundle, double seconds, std::span<const Task> tasks,
                                    double dt) {
  const double steps = std::round(seconds / dt);
  if (!(dt > 0.0) || seconds < 0.0 || std::abs(steps * dt - seconds) > 1e-9 * std::max(1.0, seconds)) {
    throw Error(Errc::precondition, "advance: horizon must be a nonnegative multiple of dt");
  }
  const LogCursor cursor = log_cursor(live_);
  for (long long i = 0; i < static_cast<long long>(steps); ++i) {
    step(live_, bundle, dt);
    history_.observe(live_);
  }
  return eval_task_metrics(live_, cursor, tasks);
}

std::vector<Event> Environment::drain_events() {
  std::vector<Event> out;
  out.swap(live_.events);
  return out;
}

std::vector<double> recent_arrival_rates(const History& history, double seconds) {
  const std::size_t L = history.net().lanes().size();
  std::vector<double> rates(L, 0.0);
  if (history.empty()) return rates;
  const auto w = history.window(std::min(seconds, kHistoryRetention));
  if (w.size() < 2) return rates;
  const double span = w.back()->time - w.front()->time;
  if (!(span > 0.0)) return rates;
  for (std::size_t l = 0; l < L; ++l) {
    rates[l] = static_cast<double>(w.back()->lane_entered[l] - w.front()->lane_entered[l]) / span;
  }
  return rates;
}

ActionBundle classic_bundle(const EnvState& state, const History& history, double horizon) {
  const TrafficNetwork& net = state.net();
  ActionBundle b;
  b.horizon = horizon;
  const std::vector<double> rates = recent_arrival_rates(history, 900.0);
  for (const Junction& j : net.junctions()) {
    if (!j.signalized || j.phases.empty()) continue;
    b.signals[j.id] = webster_plan(j, phase_flow_ratios(net, j, rates));
  }
  for (std::size_t l = 0; l < net.lanes().size(); ++l) {
    const Lane& lane = net.lanes()[l];
    if (lane.kind == LaneKind::highway_segment) b.speed_limits[lane.id] = SpeedLimitPlan{lane.id, lane.speed_limit};
    if (lane.kind != LaneKind::ramp) continue;
    // ALINEA measures the mainline the ramp merges into.
    double occ = 0.0;
    int n = 0;
    for (std::size_t s : net.lane_graph()[l]) {
      if (net.lanes()[s].kind != LaneKind::highway_segment) continue;
      occ += history.empty() ? 0.0 : history.latest().lanes[s].occupancy;
      ++n;
    }
    if (n == 0) {
      b.ramps[lane.id] = RampMeterPlan{lane.id, state.ramp_open[l]};
    } else {
      b.ramps[lane.id] = alinea_rate(lane.id, state.ramp_open[l], std::clamp(occ / n, 0.0, 1.0));
    }
  }
  for (const TransitRoute& r : net.routes()) {
    const TransitSchedule& cur = state.routes[net.route_index(r.id)].schedule;
    b.transit[r.id] = fixed_headway_schedule(r, r.default_headway, cur.service_start, cur.service_end);
  }
  return b;
}

ActionBundle uniform_bundle(const EnvState& state, double horizon) {
  const TrafficNetwork& net = state.net();
  ActionBundle b;
  b.horizon = horizon;
  for (const Junction& j : net.junctions()) {
    if (j.signalized && !j.phases.empty()) b.signals[j.id] = uniform_plan(j);
  }
  for (const Lane& lane : net.lanes()) {
    if (lane.kind == LaneKind::highway_segment) b.speed_limits[lane.id] = SpeedLimitPlan{lane.id, lane.speed_limit};
    if (lane.kind == LaneKind::ramp) b.ramps[lane.id] = RampMeterPlan{lane.id, kRampMeterCycle};
  }
  for (const TransitRoute& r : net.routes()) {
    const TransitSchedule& cur = state.routes[net.route_index(r.id)].schedule;
    b.transit[r.id] = fixed_headway_schedule(r, r.default_headway, cur.service_start, cur.service_end);
  }
  return b;
}

ActionBundle overlay(ActionBundle base, const ActionBundle& over) {
  for (const auto& [k, v] : over.signals) base.signals[k] = v;
  for (const auto& [k, v] : over.speed_limits) base.speed_limits[k] = v;
  for (const auto& [k, v] : over.ramps) base.ramps[k] = v;
  for (const auto& [k, v] : over.transit) base.transit[k] = v;
  if (over.dispatch) base.dispatch = over.dispatch;
  base.horizon = over.horizon;
  return base;
}

std::vector<std::string> disabled_plans(const TrafficNetwork& net, const ActionBundle& b, std::span<const Task> tasks) {
  std::vector<std::string> out;
  if (!b.signals.empty() && !enabled(tasks, Task::signal_timing)) out.push_back("signals need signal_timing");
  if (!b.speed_limits.empty() && !enabled(tasks, Task::highway_speed_limit)) {
    out.push_back("speed_limits need highway_speed_limit");
  }
  if (!b.ramps.empty() && !enabled(tasks, Task::ramp_metering)) out.push_back("ramps need ramp_metering");
  for (const auto& [id, s] : b.transit) {
    const auto r = net.find_route(id);
    if (!r) continue;  // validation reports unknown routes
    const Task t = task_for_mode(net.routes()[*r].mode);
    if (!enabled(tasks, t)) out.push_back("transit " + id + " needs " + std::string(to_string(t)));
  }
  if (b.dispatch && !b.dispatch->empty() && !enabled(tasks, Task::taxi_dispatching)) {
    out.push_back("dispatch needs taxi_dispatching");
  }
  return out;
}

// ---- rollouts --------------------------------------------------------------

json RolloutResult::to_json() const {
  return {{"index", index},
          {"rank", rank},
          {"bundle", json(bundle)},
          {"metrics", metrics.to_json()},
          {"reward", reward.to_json()},
          {"judge", {{"score", verdict.score}, {"comment", verdict.comment}}}};
}

RolloutResult rollout_evaluate(const EnvState& live, const ActionBundle& bundle, const HorizonMetrics& baseline,
                               const EpisodeConfig& config) {
  const ValidationReport report = validate_action(live.net(), bundle, &live);
  if (!report.ok()) throw Error(Errc::invalid_action, report.first_failure());
  RolloutResult r;
  r.bundle = bundle;
  EnvState sandbox = clone_state(live);
  sandbox.record_events = false;
  sandbox.events.clear();
  r.metrics = run_horizon(std::move(sandbox), bundle, config.horizon, config.dt, config.tasks).metrics;
  const HorizonMetrics p[] = {r.metrics};
  const HorizonMetrics b[] = {baseline};
  r.reward = system_reward(p, b);
  const auto improved = std::count_if(r.reward.task_ri.begin(), r.reward.task_ri.end(), [](double x) { return x > 0; });
  const double frac = r.reward.task_ri.empty() ? 0.0 : static_cast<double>(improved) / r.reward.task_ri.size();
  r.verdict = stub_judge(frac, r.reward.mean_f_ri);
  apply_verdict(r.reward, r.verdict, config.alpha, config.beta);
  return r;
}

std::vector<RolloutResult> rollout_many(const EnvState& live, const std::vector<ActionBundle>& bundles,
                                        const HorizonMetrics& baseline, const EpisodeConfig& config) {
  std::vector<RolloutResult> out(bundles.size());
  const std::size_t workers = std::max(1u, config.workers);
  for (std::size_t start = 0; start < bundles.size(); start += workers) {
    std::vector<std::future<RolloutResult>> batch;
    const std::size_t end = std::min(bundles.size(), start + workers);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                 [&, i] { return rollout_evaluate(live, bundles[i], baseline, config); }));
    }
    for (std::size_t i = start; i < end; ++i) {
      out[i] = batch[i - start].get();
      out[i].index = static_cast<int>(i);
    }
  }
  return out;
}

// ---- action grammar --------------------------------------------------------

std::string_view to_string(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::plan: return "PLAN";
    case ActionKind::get_control_api: return "GET_CONTROL_API";
    case ActionKind::data_analysis: return "DATA_ANALYSIS";
    case ActionKind::policy_planning: return "POLICY_PLANNING";
    case ActionKind::debug: return "DEBUG";
    case ActionKind::finish: return "FINISH";
    case ActionKind::reflection_finish: return "REFLECTION_FINISH";
    case ActionKind::invalid: return "INVALID";
  }
  return "INVALID";
}

ActionKind parse_action_kind(std::string_view name) {
  for (ActionKind k : {ActionKind::plan, ActionKind::get_control_api, ActionKind::data_analysis,
                       ActionKind::policy_planning, ActionKind::debug, ActionKind::finish,
                       ActionKind::reflection_finish}) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::protocol, "unknown action '" + std::string(name) +
                                  "'; expected PLAN, GET_CONTROL_API, DATA_ANALYSIS, POLICY_PLANNING, DEBUG, "
                                  "FINISH or REFLECTION_FINISH");
}

ParsedAction parse_action_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::optional<ParsedAction> parsed;
  std::string payload;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!parsed) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      static const std::string prefix = "ACTION: ";
      if (line.rfind(prefix, 0) != 0) {
        throw Error(Errc::protocol, "line " + std::to_string(lineno) + ": expected 'ACTION: <NAME>', got '" + line + "'");
      }
      std::string name = line.substr(prefix.size());
      while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
      try {
        parsed = ParsedAction{parse_action_kind(name), ""};
      } catch (const Error& e) {
        throw Error(Errc::protocol, "line " + std::to_string(lineno) + ": " + e.what());
      }
      continue;
    }
    if (line.rfind("ACTION:", 0) == 0) {
      throw Error(Errc::protocol, "line " + std::to_string(lineno) + ": one action per turn, found second '" + line + "'");
    }
    payload += line;
    payload += '\n';
  }
  if (!parsed) throw Error(Errc::protocol, "empty reply: expected 'ACTION: <NAME>'");
  parsed->payload = std::move(payload);
  return *parsed;
}

std::optional<json> extract_json(const std::string& text) {
  std::string body;
  if (auto fence = text.find("```"); fence != std::string::npos) {
    const auto start = text.find('\n', fence);
    const auto end = start == std::string::npos ? std::string::npos : text.find("```", start);
    if (end == std::string::npos) return std::nullopt;
    body = text.substr(start + 1, end - start - 1);
  } else {
    const auto open = text.find_first_of("{[");
    if (open == std::string::npos) return std::nullopt;
    body = text.substr(open);
  }
  try {
    return json::parse(body);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

// ---- records ---------------------------------------------------------------

json AgentTurn::to_json() const {
  return {{"index", index}, {"phase", phase}, {"action", to_string(kind)}, {"payload", payload}, {"reply", reply}};
}

json EpisodeRecord::to_json() const {
  json tasks_j = json::array();
  for (Task t : tasks) tasks_j.push_back(to_string(t));
  json rolls = json::array();
  for (const auto& r : rollouts) rolls.push_back(r.to_json());
  json turns_j = json::array();
  for (const auto& t : turns) turns_j.push_back(t.to_json());
  return {{"episode_id", episode_id},
          {"tasks", tasks_j},
          {"start", start},
          {"horizon", horizon},
          {"window", window_text(start, horizon)},
          {"turn_count", turns.size()},
          {"turns", turns_j},
          {"rollouts", rolls},
          {"baseline_metrics", baseline.to_json()},
          {"committed", json(committed)},
          {"baseline_committed", baseline_committed},
          {"committed_rollout", committed_rollout ? json(*committed_rollout) : json(nullptr)},
          {"committed_metrics", committed_metrics.to_json()},
          {"reward", reward.to_json()},
          {"judge",
           {{"score", verdict.score},
            {"comment", verdict.comment},
            {"source", verdict.source == JudgeSource::stub ? "stub" : "external"},
            {"fell_back", verdict.fell_back}}},
          {"insights", insights},
          {"summary_fallback", summary_fallback},
          {"warnings", warnings}};
}

std::string EpisodeRecord::conversation() const {
  std::ostringstream out;
  for (const AgentTurn& t : turns) {
    out << "Turn " << t.index << " (" << t.phase << ")\nACTION: " << to_string(t.kind) << "\n";
    if (!t.payload.is_null()) out << t.payload.dump() << "\n";
    std::string reply = t.reply.dump();
    if (reply.size() > 2000) reply = reply.substr(0, 2000) + "...";
    out << "Environment: " << reply << "\n\n";
  }
  return out.str();
}

std::string transcript_ndjson(const EpisodeRecord& record) {
  std::string out;
  for (const AgentTurn& t : record.turns) {
    json line = t.to_json();
    line["episode_id"] = record.episode_id;
    out += line.dump();
    out += '\n';
  }
  return out;
}

// ---- session ---------------------------------------------------------------

EpisodeSession::EpisodeSession(Environment& env, EpisodeConfig config, PsmStore psm)
    : env_(env), config_(std::move(config)), psm_(std::move(psm)) {
  config_.validate();
  record_.episode_id = config_.episode_id;
  record_.tasks = config_.tasks;
  record_.start = env_.live().clock;
  record_.horizon = config_.horizon;
  record_.state_hash_before = state_hash(env_.live());
  classic_ = classic_bundle(env_.live(), env_.history(), config_.horizon);
  EnvState sandbox = clone_state(env_.live());
  sandbox.record_events = false;
  sandbox.events.clear();
  record_.baseline =
      run_horizon(std::move(sandbox), classic_, config_.horizon, config_.dt, config_.tasks).metrics;
}

json EpisodeSession::error_reply(Errc code, const std::string& message, json detail) {
  json e = {{"type", "error"}, {"code", errc_name(code)}, {"message", message}};
  if (!detail.is_null()) e["detail"] = std::move(detail);
  return e;
}

json EpisodeSession::hello() const {
  json modules = json::array();
  for (Task t : config_.tasks) modules.push_back(to_string(t));
  json memory = json::array();
  for (const auto& it : psm_.items) memory.push_back(it.text);
  json ops = json::array();
  for (const auto& [op, args] : analysis_whitelist()) ops.push_back(op);
  return {{"type", "hello"},
          {"episode_id", config_.episode_id},
          {"modules", modules},
          {"dependencies", module_dependencies(config_.tasks)},
          {"turn_limit", config_.turn_limit},
          {"reflection_turn_limit", config_.reflection_turn_limit},
          {"rollout_budget", config_.rollout_budget},
          {"horizon", config_.horizon},
          {"time", env_.live().clock},
          {"window", window_text(record_.start, config_.horizon)},
          {"memory", memory},
          {"operations", ops},
          {"phase", phase_ == Phase::decision ? "decision" : phase_ == Phase::reflection ? "reflection" : "done"}};
}

json EpisodeSession::handle_line(const std::string& line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::exception& e) {
    return error_reply(Errc::protocol, std::string("malformed message: ") + e.what());
  }
  return handle(msg);
}

json EpisodeSession::handle(const json& msg) {
  try {
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
      return error_reply(Errc::protocol, "message must be an object with a string 'type'");
    }
    const std::string type = msg["type"];
    if (type == "hello") return hello();
    if (phase_ == Phase::done && type != "finish") return error_reply(Errc::protocol, "episode already finished");
    if (type == "observe") {
      json result = run_analysis(msg, env_, cache_);
      return {{"type", "observe"}, {"result", result}};
    }
    if (type == "call") {
      if (msg.contains("text")) {
        const std::string text = msg["text"].get<std::string>();
        ParsedAction parsed;
        try {
          parsed = parse_action_text(text);
        } catch (const Error& e) {
          return turn(ActionKind::invalid, json(text), e.what());
        }
        return turn(parsed.kind, nullptr, parsed.payload);
      }
      if (!msg.contains("action")) return error_reply(Errc::protocol, "call needs 'action' or 'text'");
      ActionKind kind;
      try {
        kind = parse_action_kind(msg["action"].get<std::string>());
      } catch (const Error& e) {
        return turn(ActionKind::invalid, msg, e.what());
      }
      return turn(kind, msg.value("payload", json(nullptr)), "");
    }
    if (type == "policy") return turn(ActionKind::policy_planning, msg.value("bundle", json(nullptr)), "");
    if (type == "commit") return turn(ActionKind::finish, nullptr, "");
    if (type == "reflect") return turn(ActionKind::reflection_finish, msg.value("insights", json(nullptr)), "");
    if (type == "finish") return finish();
    return error_reply(Errc::protocol, "unknown message type '" + type +
                                           "'; expected hello, observe, call, policy, commit, reflect or finish");
  } catch (const Error& e) {
    return error_reply(e.code(), e.what());
  } catch (const json::exception& e) {
    return error_reply(Errc::protocol, std::string("bad message field: ") + e.what());
  }
}

void EpisodeSession::log_turn(ActionKind kind, const json& payload, const json& reply) {
  AgentTurn t;
  t.index = static_cast<int>(record_.turns.size()) + 1;
  t.phase = phase_ == Phase::reflection ? "reflection" : "decision";
  t.kind = kind;
  t.payload = payload;
  t.reply = reply;
  record_.turns.push_back(std::move(t));
}

json EpisodeSession::turn(ActionKind kind, const json& payload, const std::string& raw_text) {
  return phase_ == Phase::decision ? decision_turn(kind, payload, raw_text) : reflection_turn(kind, payload, raw_text);
}

json EpisodeSession::decision_turn(ActionKind kind, const json& payload, const std::string& raw_text) {
  if (decision_turns_ >= config_.turn_limit) {
    json reply = error_reply(Errc::turn_limit, "turn limit of " + std::to_string(config_.turn_limit) +
                                                   " reached; committing the best candidate so far");
    reply["commit"] = commit();
    return reply;
  }
  ++decision_turns_;
  const json logged = payload.is_null() && !raw_text.empty() ? json(raw_text) : payload;
  json reply;
  try {
    switch (kind) {
      case ActionKind::invalid:
        throw Error(Errc::protocol, raw_text);
      case ActionKind::plan:
        reply = {{"type", "call"}, {"action", "PLAN"}, {"result", "noted"}};
        break;
      case ActionKind::get_control_api: {
        std::string module;
        if (payload.is_string()) module = payload.get<std::string>();
        else if (payload.is_object()) module = payload.value("module", "");
        else module = raw_text;
        std::optional<Task> task;
        for (Task t : kAllTasks) {
          if (module.find(to_string(t)) != std::string::npos) {
            task = t;
            break;
          }
        }
        if (!task) throw Error(Errc::not_found, "GET_CONTROL_API needs a module name");
        if (!enabled(config_.tasks, *task)) {
          throw Error(Errc::not_enabled, "module " + std::string(to_string(*task)) +
                                             " is not enabled; only enabled modules can be optimized");
        }
        reply = {{"type", "call"},
                 {"action", "GET_CONTROL_API"},
                 {"result", capability_sheet(*task, env_, config_.tasks)}};
        break;
      }
      case ActionKind::data_analysis:
        reply = data_analysis(payload, raw_text);
        break;
      case ActionKind::policy_planning:
        reply = policy_planning(payload, raw_text);
        break;
      case ActionKind::debug:
        reply = {{"type", "call"},
                 {"action", "DEBUG"},
                 {"result",
                  last_error_.is_null()
                      ? json{{"message", "no failed action to debug"}}
                      : json{{"last_error", last_error_}, {"failed_payload", last_failed_payload_}}}};
        break;
      case ActionKind::finish:
        reply = commit();
        break;
      case ActionKind::reflection_finish:
        throw Error(Errc::protocol, "REFLECTION_FINISH is only valid after FINISH");
    }
  } catch (const Error& e) {
    json detail = nullptr;
    if (e.code() == Errc::invalid_action && payload.is_object()) detail = json{{"payload", payload}};
    reply = error_reply(e.code(), e.what(), detail);
    last_error_ = reply;
    last_failed_payload_ = logged;
  }
  reply["turn"] = decision_turns_;
  reply["turns_remaining"] = config_.turn_limit - decision_turns_;
  // The commit reply moved the phase on; log the FINISH turn as a decision turn.
  const Phase saved = phase_;
  if (kind == ActionKind::finish) phase_ = Phase::decision;
  log_turn(kind, logged, reply);
  phase_ = saved;
  return reply;
}

json EpisodeSession::reflection_turn(ActionKind kind, const json& payload, const std::string& raw_text) {
  const json logged = payload.is_null() && !raw_text.empty() ? json(raw_text) : payload;
  json reply;
  try {
    switch (kind) {
      case ActionKind::data_analysis:
        if (reflection_turns_ >= config_.reflection_turn_limit) {
          reply = error_reply(Errc::turn_limit, "reflection allows " + std::to_string(config_.reflection_turn_limit) +
                                                    " DATA_ANALYSIS turns; summarizing with the fallback");
          auto fb = reflect(template_insights(task_deltas()), true, {"reflection turn limit reached"});
          reply["reflect"] = fb;
          return reply;
        }
        ++reflection_turns_;
        reply = data_analysis(payload, raw_text);
        break;
      case ActionKind::reflection_finish: {
        SummaryResult parsed;
        try {
          if (payload.is_array()) parsed = parse_reflection_array(payload.dump());
          else if (payload.is_string()) parsed = parse_reflection_array(payload.get<std::string>());
          else parsed = parse_reflection_array(raw_text);
          std::erase_if(parsed.insights, [&](const std::string& s) {
            if (valid_insight(s)) return false;
            parsed.warnings.push_back("dropped invalid insight: " + s);
            return true;
          });
        } catch (const Error& e) {
          parsed = SummaryResult{template_insights(task_deltas()), true, {std::string("malformed reflection: ") + e.what()}};
        }
        reply = reflect(parsed.insights, parsed.fallback, parsed.warnings);
        break;
      }
      default:
        throw Error(Errc::protocol, "only DATA_ANALYSIS and REFLECTION_FINISH are allowed during reflection");
    }
  } catch (const Error& e) {
    reply = error_reply(e.code(), e.what());
  }
  const Phase saved = phase_;
  phase_ = Phase::reflection;
  log_turn(kind, logged, reply);
  phase_ = saved;
  return reply;
}

json EpisodeSession::data_analysis(const json& payload, const std::string& raw_text) {
  json requests = payload;
  if (requests.is_null()) {
    auto parsed = extract_json(raw_text);
    if (!parsed) {
      json ops = json::array();
      for (const auto& [op, args] : analysis_whitelist()) ops.push_back(op);
      throw Error(Errc::not_found, "DATA_ANALYSIS runs whitelisted operations sent as JSON {op, args}; "
                                   "code runs on the client. Operations: " + ops.dump());
    }
    requests = *parsed;
  }
  json results;
  if (requests.is_array()) {
    results = json::array();
    for (const json& r : requests) results.push_back(run_analysis(r, env_, cache_));
  } else {
    results = run_analysis(requests, env_, cache_);
  }
  return {{"type", "observe"}, {"action", "DATA_ANALYSIS"}, {"result", results}};
}

json EpisodeSession::policy_planning(const json& payload, const std::string& raw_text) {
  json j = payload;
  if (j.is_null()) {
    auto parsed = extract_json(raw_text);
    if (!parsed) throw Error(Errc::invalid_action, "POLICY_PLANNING needs an action bundle as JSON");
    j = *parsed;
  }
  if (static_cast<int>(record_.rollouts.size()) >= config_.rollout_budget) {
    throw Error(Errc::precondition, "rollout budget of " + std::to_string(config_.rollout_budget) + " exhausted");
  }
  ActionBundle proposed = parse_bundle(j);
  proposed.horizon = config_.horizon;
  if (auto off = disabled_plans(env_.net(), proposed, config_.tasks); !off.empty()) {
    throw Error(Errc::not_enabled, "only enabled modules can be optimized: " + off.front());
  }
  const ValidationReport report = validate_action(env_.net(), proposed, &env_.live());
  if (!report.ok()) throw Error(Errc::invalid_action, report.first_failure());

  RolloutResult r = rollout_evaluate(env_.live(), overlay(classic_, proposed), record_.baseline, config_);
  r.bundle = proposed;
  r.index = static_cast<int>(record_.rollouts.size());
  record_.rollouts.push_back(std::move(r));
  // Rank by recorded total reward; earlier candidates win ties.
  std::vector<std::size_t> order(record_.rollouts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return record_.rollouts[a].reward.total > record_.rollouts[b].reward.total;
  });
  for (std::size_t k = 0; k < order.size(); ++k) record_.rollouts[order[k]].rank = static_cast<int>(k) + 1;

  const RolloutResult& last = record_.rollouts.back();
  json reply = last.to_json();
  reply["type"] = "rollout_result";
  reply["validation"] = report.to_json();
  reply["baseline_metrics"] = record_.baseline.to_json();
  reply["rollouts_remaining"] = config_.rollout_budget - static_cast<int>(record_.rollouts.size());
  return reply;
}

json EpisodeSession::commit() {
  if (phase_ != Phase::decision) throw Error(Errc::protocol, "episode already committed");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < record_.rollouts.size(); ++i) {
    if (!best || record_.rollouts[i].reward.total > record_.rollouts[*best].reward.total) best = i;
  }
  // The Classic plan competes as an implicit candidate scored against itself.
  const HorizonMetrics self[] = {record_.baseline};
  RewardBreakdown classic_reward = system_reward(self, self);
  apply_verdict(classic_reward, stub_judge(0.0, 0.0), config_.alpha, config_.beta);
  if (best && !(record_.rollouts[*best].reward.total > classic_reward.total)) {
    record_.warnings.push_back("no candidate beat the Classic baseline's reward; the baseline was committed");
    best.reset();
  }
  ActionBundle effective = classic_;
  if (best) {
    record_.committed = record_.rollouts[*best].bundle;
    record_.committed_rollout = static_cast<int>(*best);
    effective = overlay(classic_, record_.committed);
    record_.reward = record_.rollouts[*best].reward;
  } else {
    record_.baseline_committed = true;
    record_.committed = classic_;
    record_.reward = classic_reward;
    if (record_.rollouts.empty()) {
      record_.warnings.push_back("no candidate was rolled out; the Classic baseline was committed");
    }
  }
  record_.committed_metrics = env_.advance(effective, config_.horizon, config_.tasks, config_.dt);
  record_.state_hash_after = state_hash(env_.live());

  const auto& ri = record_.reward.task_ri;
  const auto improved = std::count_if(ri.begin(), ri.end(), [](double x) { return x > 0; });
  const double frac = ri.empty() ? 0.0 : static_cast<double>(improved) / ri.size();
  record_.verdict = coordination_score(record_.conversation(), config_.tasks, frac, record_.reward.mean_f_ri,
                                       config_.judge);
  apply_verdict(record_.reward, record_.verdict, config_.alpha, config_.beta);
  phase_ = Phase::reflection;

  return {{"type", "commit"},
          {"bundle", json(record_.committed)},
          {"baseline_committed", record_.baseline_committed},
          {"committed_rollout", record_.committed_rollout ? json(*record_.committed_rollout) : json(nullptr)},
          {"metrics", record_.committed_metrics.to_json()},
          {"reward", record_.reward.to_json()},
          {"judge", {{"score", record_.verdict.score}, {"comment", record_.verdict.comment}}},
          {"time", env_.live().clock}};
}

std::vector<TaskDelta> EpisodeSession::task_deltas() const {
  std::vector<TaskDelta> out;
  const ActionBundle& b = record_.committed;
  for (std::size_t k = 0; k < config_.tasks.size(); ++k) {
    const Task t = config_.tasks[k];
    std::string kind = "baseline";
    if (!record_.baseline_committed) {
      switch (t) {
        case Task::signal_timing: if (!b.signals.empty()) kind = "cycle-split"; break;
        case Task::highway_speed_limit: if (!b.speed_limits.empty()) kind = "speed-limit"; break;
        case Task::ramp_metering: if (!b.ramps.empty()) kind = "metering-rate"; break;
        case Task::bus_scheduling:
        case Task::subway_scheduling: if (!b.transit.empty()) kind = "headway"; break;
        case Task::taxi_dispatching: if (b.dispatch && !b.dispatch->empty()) kind = "dispatch"; break;
      }
    }
    const double ri = k < record_.reward.task_ri.size() ? record_.reward.task_ri[k] : 0.0;
    out.push_back(TaskDelta{std::string(to_string(t)), kind, window_text(record_.start, record_.horizon), ri});
  }
  return out;
}

json EpisodeSession::reflect(const std::vector<std::string>& insights, bool fallback, std::vector<std::string> warnings) {
  record_.insights = insights;
  record_.summary_fallback = fallback;
  for (auto& w : warnings) record_.warnings.push_back(w);
  psm_ = psm_update(std::move(psm_), insights, config_.episode_id);
  if (!config_.psm_path.empty()) save_psm(psm_, config_.psm_path);
  cache_.clear();
  phase_ = Phase::done;
  return {{"type", "reflect"}, {"insights", insights}, {"fallback", fallback}, {"warnings", warnings},
          {"memory", to_json(psm_)}};
}

json EpisodeSession::finish() {
  if (phase_ == Phase::decision) commit();
  if (phase_ == Phase::reflection) {
    SummaryResult s = summarize_episode(cache_, task_deltas());
    reflect(s.insights, true, {"no reflection received; templated insights used"});
  }
  json rec = record_.to_json();
  rec.erase("turns");
  return {{"type", "finish"}, {"record", rec}};
}

EpisodeRecord run_scripted_episode(EpisodeSession& session, ScriptedAgent agent) {
  json reply = nullptr;
  // Every path through the scripted agent ends with finish; the guard only
  // protects against a protocol bug looping forever.
  for (int guard = 0; guard < 200 && !session.finished(); ++guard) reply = session.handle(agent.next(reply));
  if (!session.finished()) session.handle(json{{"type", "finish"}});
  return session.record();
}

}  // namespace utc
