#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "utc/state.hpp"

namespace utc {

enum class Task : std::uint8_t {
  signal_timing,
  highway_speed_limit,
  ramp_metering,
  bus_scheduling,
  subway_scheduling,
  taxi_dispatching,
};
inline constexpr std::array<Task, 6> kAllTasks{Task::signal_timing,     Task::highway_speed_limit,
                                               Task::ramp_metering,     Task::bus_scheduling,
                                               Task::subway_scheduling, Task::taxi_dispatching};

std::string_view to_string(Task task) noexcept;
Task parse_task(std::string_view text);

struct MetricValue {
  std::string name;
  double value = 0.0;
  bool higher_is_better = false;
  std::string unit;
};

struct TaskMetrics {
  Task task = Task::signal_timing;
  std::vector<MetricValue> values;
  bool empty = false;  // no observations behind the values; they are reported as 0

  double value(std::string_view name) const;
  nlohmann::json to_json() const;
};

/// Metrics over one interval. Road-traffic aggregates cover cars and taxi legs
/// that exited in the interval plus those still present at its end (censored
/// at the end time), so a policy cannot look good by holding vehicles back.
struct HorizonMetrics {
  double start = 0.0;
  double duration = 0.0;
  double avg_travel = 0.0;   // s
  double avg_waiting = 0.0;  // s
  double throughput = 0.0;   // exits per hour
  bool empty = true;
  std::vector<TaskMetrics> tasks;

  const TaskMetrics* find(Task task) const;
  nlohmann::json to_json() const;
};

/// Offsets into the cumulative logs at the start of an interval.
struct LogCursor {
  double time = 0.0;
  std::size_t exits = 0;
  std::size_t boardings = 0;
  std::size_t dropoffs = 0;
  std::vector<double> route_consumption;
  std::vector<double> ramp_queue;
};

LogCursor log_cursor(const EnvState& state);

HorizonMetrics eval_task_metrics(const EnvState& end, const LogCursor& from, std::span<const Task> tasks);

/// Signed relative improvement of one metric, clipped to [-1, 1].
double relative_improvement(const MetricValue& policy, const MetricValue& baseline);
/// Mean over tasks of the mean per-metric relative improvement, clipped.
double relative_improvement(std::span<const TaskMetrics> policy, std::span<const TaskMetrics> baseline);

struct RewardBreakdown {
  double f_tt = 0.0;
  double f_tp = 0.0;
  double f_ri = 0.0;  // last decision step
  double mean_f_ri = 0.0;
  std::vector<double> task_ri;  // last decision step, per task in order
  double r_env = 0.0;
  double r_coord = 0.0;  // judge score / 10
  double total = 0.0;
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

/// R_env summed over decision steps; policy[i] is compared with baseline[i] and
/// normalised by the baseline's own travel time and throughput.
RewardBreakdown system_reward(std::span<const HorizonMetrics> policy,
                              std::span<const HorizonMetrics> baseline);

enum class JudgeSource : std::uint8_t { stub, external };

struct JudgeVerdict {
  int score = 0;
  std::string comment;
  JudgeSource source = JudgeSource::stub;
  bool fell_back = false;  // an external judge was configured but unusable
};

/// round(5 * fraction_improved + 5 * clamp(mean_f_ri + 0.5, 0, 1)).
JudgeVerdict stub_judge(double fraction_improved, double mean_f_ri);

std::string render_judge_prompt(std::span<const Task> tasks, const std::string& conversation);
/// Strict "Score: n" / "Brief Comment: ..." reply; nullopt when malformed.
std::optional<JudgeVerdict> parse_judge_reply(const std::string& reply);

struct JudgeConfig {
  std::string endpoint;  // http://host:port/path; empty = stub only
  std::chrono::milliseconds timeout{10000};
};

/// External judge when configured, falling back to the stub on any failure.
JudgeVerdict coordination_score(const std::string& conversation, std::span<const Task> tasks,
                                double fraction_improved, double mean_f_ri, const JudgeConfig& config);

double total_reward(double r_env, int score, double alpha, double beta);
/// Fills r_coord and total from a verdict.
void apply_verdict(RewardBreakdown& breakdown, const JudgeVerdict& verdict, double alpha, double beta);

}  // namespace utc
