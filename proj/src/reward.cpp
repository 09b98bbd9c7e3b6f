#include "utc/reward.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "httplib.h"
#include "utc/dynamics.hpp"

namespace utc {

using nlohmann::json;

std::string_view to_string(Task task) noexcept {
  switch (task) {
    case Task::signal_timing: return "signal_timing";
    case Task::highway_speed_limit: return "highway_speed_limit";
    case Task::ramp_metering: return "ramp_metering";
    case Task::bus_scheduling: return "bus_scheduling";
    case Task::subway_scheduling: return "subway_scheduling";
    case Task::taxi_dispatching: return "taxi_dispatching";
  }
  return "signal_timing";
}

Task parse_task(std::string_view text) {
  for (Task t : kAllTasks) {
    if (to_string(t) == text) return t;
  }
  throw Error(Errc::validation, "unknown task '" + std::string(text) + "'");
}

double TaskMetrics::value(std::string_view name) const {
  for (const MetricValue& m : values) {
    if (m.name == name) return m.value;
  }
  throw Error(Errc::not_found, "task " + std::string(to_string(task)) + " has no metric '" + std::string(name) + "'");
}

json TaskMetrics::to_json() const {
  json vals = json::object();
  for (const MetricValue& m : values) vals[m.name] = m.value;
  return json{{"task", to_string(task)}, {"metrics", vals}, {"empty", empty}};
}

const TaskMetrics* HorizonMetrics::find(Task task) const {
  for (const TaskMetrics& t : tasks) {
    if (t.task == task) return &t;
  }
  return nullptr;
}

json HorizonMetrics::to_json() const {
  json t = json::array();
  for (const TaskMetrics& m : tasks) t.push_back(m.to_json());
  return json{{"start", start},           {"duration", duration},     {"avg_travel_time", avg_travel},
              {"avg_waiting_time", avg_waiting}, {"throughput", throughput}, {"empty", empty},
              {"tasks", t}};
}

LogCursor log_cursor(const EnvState& s) {
  LogCursor c;
  c.time = s.clock;
  c.exits = s.logs.exits.size();
  c.boardings = s.logs.boardings.size();
  c.dropoffs = s.logs.dropoffs.size();
  c.route_consumption = s.logs.route_consumption;
  c.ramp_queue = s.logs.ramp_queue_integral;
  return c;
}

namespace {

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double value() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

bool road(VehicleKind k) { return k == VehicleKind::car || k == VehicleKind::taxi; }

MetricValue metric(const char* name, double value, bool higher, const char* unit) {
  return MetricValue{name, value, higher, unit};
}

}  // namespace

HorizonMetrics eval_task_metrics(const EnvState& s, const LogCursor& from, std::span<const Task> tasks) {
  const TrafficNetwork& net = s.net();
  HorizonMetrics m;
  m.start = from.time;
  m.duration = s.clock - from.time;
  const double hours = m.duration / 3600.0;
  const double now = s.clock;

  Mean travel, waiting, hw_travel, ramp_travel;
  double hw_dist = 0.0, hw_time = 0.0;
  std::size_t road_exits = 0;
  for (std::size_t i = from.exits; i < s.logs.exits.size(); ++i) {
    const ExitRecord& e = s.logs.exits[i];
    if (!road(e.kind)) continue;
    ++road_exits;
    travel.add(e.exit - e.depart);
    waiting.add(e.waiting);
    if (e.highway_distance > 0.0) {
      hw_travel.add(e.exit - e.depart);
      hw_dist += e.highway_distance;
      hw_time += e.highway_time;
    }
    if (e.used_ramp) ramp_travel.add(e.exit - e.depart);
  }
  for (const auto& [id, v] : s.vehicles) {
    if (!road(v.kind)) continue;
    const LaneKind here = net.lanes()[v.path[v.pos]].kind;
    travel.add(now - v.depart_time);
    waiting.add(current_waiting(s, v));
    if (v.highway_distance > 0.0 || here == LaneKind::highway_segment) {
      hw_travel.add(now - v.depart_time);
      hw_dist += v.highway_distance;
      hw_time += v.highway_time;
    }
    if (v.used_ramp || here == LaneKind::ramp) ramp_travel.add(now - v.depart_time);
  }
  m.avg_travel = travel.value();
  m.avg_waiting = waiting.value();
  m.throughput = hours > 0.0 ? static_cast<double>(road_exits) / hours : 0.0;
  m.empty = travel.n == 0;

  auto transit_task = [&](Task task, TransitMode mode) {
    TaskMetrics t{task, {}, false};
    double consumption = 0.0;
    bool any_route = false;
    std::vector<bool> of_mode(net.routes().size(), false);
    for (std::size_t r = 0; r < net.routes().size(); ++r) {
      if (net.routes()[r].mode != mode) continue;
      of_mode[r] = true;
      any_route = true;
      const double before = r < from.route_consumption.size() ? from.route_consumption[r] : 0.0;
      consumption += s.logs.route_consumption[r] - before;
    }
    Mean wait;
    for (std::size_t i = from.boardings; i < s.logs.boardings.size(); ++i) {
      if (of_mode[s.logs.boardings[i].route]) wait.add(s.logs.boardings[i].wait);
    }
    for (const auto& q : s.stations) {
      for (const Passenger& p : q) {
        if (of_mode[p.route]) wait.add(now - p.arrival);
      }
    }
    const bool bus = mode == TransitMode::bus;
    t.values.push_back(metric(bus ? "fuel_kg" : "electricity_kwh", consumption / 1000.0, false, bus ? "kg" : "kWh"));
    t.values.push_back(metric("passenger_waiting_time", wait.value(), false, "s"));
    t.empty = !any_route || wait.n == 0;
    return t;
  };

  for (Task task : tasks) {
    switch (task) {
      case Task::signal_timing: {
        TaskMetrics t{task, {}, m.empty};
        t.values.push_back(metric("throughput", m.throughput, true, "veh/h"));
        t.values.push_back(metric("avg_waiting_time", m.avg_waiting, false, "s"));
        t.values.push_back(metric("avg_travel_time", m.avg_travel, false, "s"));
        m.tasks.push_back(std::move(t));
        break;
      }
      case Task::highway_speed_limit: {
        TaskMetrics t{task, {}, hw_travel.n == 0};
        t.values.push_back(metric("avg_travel_time", hw_travel.value(), false, "s"));
        t.values.push_back(metric("avg_speed", hw_time > 0.0 ? hw_dist / hw_time : 0.0, true, "m/s"));
        m.tasks.push_back(std::move(t));
        break;
      }
      case Task::ramp_metering: {
        double integral = 0.0;
        std::size_t ramps = 0;
        for (std::size_t l = 0; l < net.lanes().size(); ++l) {
          if (net.lanes()[l].kind != LaneKind::ramp) continue;
          ++ramps;
          const double before = l < from.ramp_queue.size() ? from.ramp_queue[l] : 0.0;
          integral += s.logs.ramp_queue_integral[l] - before;
        }
        const double queue = ramps && m.duration > 0.0 ? integral / (m.duration * static_cast<double>(ramps)) : 0.0;
        TaskMetrics t{task, {}, ramps == 0 || ramp_travel.n == 0};
        t.values.push_back(metric("avg_travel_time", ramp_travel.value(), false, "s"));
        t.values.push_back(metric("avg_queue", queue, false, "veh"));
        m.tasks.push_back(std::move(t));
        break;
      }
      case Task::bus_scheduling:
        m.tasks.push_back(transit_task(task, TransitMode::bus));
        break;
      case Task::subway_scheduling:
        m.tasks.push_back(transit_task(task, TransitMode::subway));
        break;
      case Task::taxi_dispatching: {
        double income = 0.0;
        for (std::size_t i = from.dropoffs; i < s.logs.dropoffs.size(); ++i) income += s.logs.dropoffs[i].fare;
        const auto count = s.logs.dropoffs.size() - from.dropoffs;
        TaskMetrics t{task, {}, count == 0};
        t.values.push_back(metric("income", income, true, "currency"));
        t.values.push_back(metric("dropoffs", static_cast<double>(count), true, "count"));
        m.tasks.push_back(std::move(t));
        break;
      }
    }
  }
  return m;
}

double relative_improvement(const MetricValue& policy, const MetricValue& baseline) {
  const double b = baseline.value;
  const double p = policy.value;
  if (b == 0.0) {
    if (p == b) return 0.0;
    const bool better = policy.higher_is_better ? p > b : p < b;
    return better ? 1.0 : -1.0;
  }
  const double raw = policy.higher_is_better ? (p - b) / std::abs(b) : (b - p) / std::abs(b);
  return std::clamp(raw, -1.0, 1.0);
}

namespace {

std::optional<double> task_improvement(const TaskMetrics& policy, const TaskMetrics& baseline) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const MetricValue& p : policy.values) {
    for (const MetricValue& b : baseline.values) {
      if (b.name != p.name) continue;
      sum += relative_improvement(p, b);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<double> per_task(std::span<const TaskMetrics> policy, std::span<const TaskMetrics> baseline) {
  std::vector<double> out;
  for (const TaskMetrics& p : policy) {
    for (const TaskMetrics& b : baseline) {
      if (b.task != p.task) continue;
      if (auto v = task_improvement(p, b)) out.push_back(*v);
    }
  }
  return out;
}

}  // namespace

double relative_improvement(std::span<const TaskMetrics> policy, std::span<const TaskMetrics> baseline) {
  const std::vector<double> ri = per_task(policy, baseline);
  if (ri.empty()) return 0.0;
  double sum = 0.0;
  for (double v : ri) sum += v;
  return std::clamp(sum / static_cast<double>(ri.size()), -1.0, 1.0);
}

json RewardBreakdown::to_json() const {
  return json{{"f_TT", f_tt},     {"f_TP", f_tp},   {"f_RI", f_ri},       {"mean_f_RI", mean_f_ri},
              {"task_RI", task_ri}, {"R_env", r_env}, {"R_coord", r_coord}, {"R", total},
              {"alpha", alpha},   {"beta", beta},   {"steps", steps}};
}

RewardBreakdown system_reward(std::span<const HorizonMetrics> policy, std::span<const HorizonMetrics> baseline) {
  if (baseline.empty() || baseline.size() != policy.size()) {
    throw Error(Errc::missing_baseline, "system_reward: baseline metrics missing for " +
                                            std::to_string(policy.size()) + " decision step(s)");
  }
  RewardBreakdown r;
  double ri_sum = 0.0;
  for (std::size_t i = 0; i < policy.size(); ++i) {
    const HorizonMetrics& p = policy[i];
    const HorizonMetrics& b = baseline[i];
    r.f_tt = b.avg_travel > 0.0 ? 1.0 - std::min(p.avg_travel / b.avg_travel, 1.0) : (p.avg_travel > 0.0 ? 0.0 : 1.0);
    r.f_tp = b.throughput > 0.0 ? std::min(p.throughput / b.throughput, 1.0) : (p.throughput > 0.0 ? 1.0 : 0.0);
    r.task_ri = per_task(p.tasks, b.tasks);
    r.f_ri = relative_improvement(p.tasks, b.tasks);
    ri_sum += r.f_ri;
    r.r_env += r.f_tt + r.f_tp + r.f_ri;
  }
  r.steps = policy.size();
  r.mean_f_ri = ri_sum / static_cast<double>(policy.size());
  r.total = r.alpha * r.r_env;
  return r;
}

JudgeVerdict stub_judge(double fraction_improved, double mean_f_ri) {
  const double raw = 5.0 * std::clamp(fraction_improved, 0.0, 1.0) + 5.0 * std::clamp(mean_f_ri + 0.5, 0.0, 1.0);
  JudgeVerdict v;
  v.score = std::clamp(static_cast<int>(std::lround(raw)), 0, 10);
  std::ostringstream os;
  os << "Deterministic stub: " << fraction_improved * 100.0 << "% of tasks improved, mean f_RI " << mean_f_ri << ".";
  v.comment = os.str();
  v.source = JudgeSource::stub;
  return v;
}

std::string render_judge_prompt(std::span<const Task> tasks, const std::string& conversation) {
  std::string names;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (i) names += ", ";
    names += to_string(tasks[i]);
  }
  std::ostringstream os;
  os << "You are a professional traffic optimization expert. Please evaluate the following conversation between an "
        "LLM Agent and a traffic simulation environment. Score from 0-10 points.\n\n"
     << "Dimension 1: Multi-module Coordination Quality (0-5 points):\n"
     << "- This environment has the following control modules: " << names << ".\n"
     << "- Whether these modules are reasonably coordinated with each other.\n"
     << "- Whether the interactions and dependencies between modules are considered.\n"
     << "- Whether conflicts between modules are identified and avoided.\n\n"
     << "Dimension 2: Modeling Effectiveness (0-5 points):\n"
     << "- Whether the policy code correctly implements the optimization approach for " << names << ".\n"
     << "- Whether appropriate algorithms and parameters are used.\n"
     << "- Whether the data provided by the environment is fully utilized.\n"
     << "- Whether the agent iteratively improves the policy based on simulation feedback.\n\n"
     << "Please read the conversation carefully and provide your evaluation in the following STRICT format:\n"
     << "Score: [0-10 integer]\n"
     << "Brief Comment: [Your brief comment in 1-2 sentences]\n\n"
     << "Example output:\n"
     << "Score: 7\n"
     << "Brief Comment: The agent demonstrates good optimization strategy with reasonable parameter tuning, but "
        "could better utilize the simulation feedback for iterative improvement.\n\n"
     << "Conversation:\n"
     << conversation << "\n\n"
     << "Your Evaluation:\n";
  return os.str();
}

std::optional<JudgeVerdict> parse_judge_reply(const std::string& reply) {
  static const std::regex score_re(R"(^\s*Score:\s*(\d{1,2})\s*$)");
  static const std::regex comment_re(R"(^\s*Brief Comment:\s*(.*\S)\s*$)");
  std::optional<int> score;
  std::optional<std::string> comment;
  std::istringstream in(reply);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (!score && std::regex_match(line, m, score_re)) {
      score = std::stoi(m[1].str());
    } else if (score && !comment && std::regex_match(line, m, comment_re)) {
      comment = m[1].str();
    }
  }
  if (!score || !comment || *score < 0 || *score > 10) return std::nullopt;
  return JudgeVerdict{*score, *comment, JudgeSource::external, false};
}

namespace {

std::optional<std::string> post_prompt(const JudgeConfig& config, const std::string& prompt) {
  static const std::regex url_re(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config.endpoint, m, url_re)) return std::nullopt;
  const int port = m[2].matched ? std::stoi(m[2].str()) : 80;
  const std::string path = m[3].matched ? m[3].str() : "/";
  httplib::Client client(m[1].str(), port);
  const auto secs = config.timeout.count() / 1000;
  const auto usecs = (config.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  const auto res = client.Post(path, json{{"prompt", prompt}}.dump(), "application/json");
  if (!res || res->status != 200) return std::nullopt;
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_object()) {
    for (const char* key : {"text", "reply", "content"}) {
      if (body.contains(key) && body[key].is_string()) return body[key].get<std::string>();
    }
  }
  return res->body;
}

}  // namespace

JudgeVerdict coordination_score(const std::string& conversation, std::span<const Task> tasks,
                                double fraction_improved, double mean_f_ri, const JudgeConfig& config) {
  if (!config.endpoint.empty()) {
    if (const auto reply = post_prompt(config, render_judge_prompt(tasks, conversation))) {
      if (auto verdict = parse_judge_reply(*reply)) return *verdict;
    }
    JudgeVerdict v = stub_judge(fraction_improved, mean_f_ri);
    v.fell_back = true;
    return v;
  }
  return stub_judge(fraction_improved, mean_f_ri);
}

double total_reward(double r_env, int score, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error(Errc::precondition, "reward weights must be positive");
  return alpha * r_env + beta * (static_cast<double>(score) / 10.0);
}

void apply_verdict(RewardBreakdown& b, const JudgeVerdict& verdict, double alpha, double beta) {
  b.alpha = alpha;
  b.beta = beta;
  b.r_coord = static_cast<double>(verdict.score) / 10.0;
  b.total = total_reward(b.r_env, verdict.score, alpha, beta);
}

}  // namespace utc
