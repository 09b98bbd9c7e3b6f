#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "utc/dynamics.hpp"
#include "utc/memory.hpp"
#include "utc/observe.hpp"
#include "utc/reward.hpp"

namespace utc {

struct EpisodeConfig {
  std::vector<Task> tasks{kAllTasks.begin(), kAllTasks.end()};
  double horizon = 1800.0;
  int turn_limit = 20;
  int reflection_turn_limit = 5;
  int rollout_budget = 5;
  std::uint64_t seed = 0;
  double alpha = 0.5;
  double beta = 0.5;
  double dt = kDefaultDt;
  unsigned workers = 1;
  JudgeConfig judge;
  std::string episode_id = "episode";
  std::filesystem::path psm_path;  // empty: memory is not persisted

  /// Throws Errc::precondition on an unusable configuration.
  void validate() const;
};

/// Live simulation plus its observation history. Only `advance` mutates it.
class Environment {
 public:
  explicit Environment(EnvState initial);

  const EnvState& live() const noexcept { return live_; }
  const History& history() const noexcept { return history_; }
  const TrafficNetwork& net() const { return live_.net(); }

  /// Steps the live state for `seconds`, recording history as it goes.
  HorizonMetrics advance(const ActionBundle& bundle, double seconds, std::span<const Task> tasks,
                         double dt = kDefaultDt);
  /// Hands over the events recorded so far and clears them from the live state.
  std::vector<Event> drain_events();

 private:
  EnvState live_;
  History history_;
};

/// Mean lane arrival rates (veh/s) over the last `seconds` of history.
std::vector<double> recent_arrival_rates(const History& history, double seconds);

/// The Classic Method for the next window: Webster signals from recent
/// arrival rates, ALINEA ramps, default speed limits and fixed headways.
/// Taxis use the environment's built-in greedy dispatch.
ActionBundle classic_bundle(const EnvState& state, const History& history, double horizon = 1800.0);
/// Uniform fixed-time signals, open ramps, default limits and headways.
ActionBundle uniform_bundle(const EnvState& state, double horizon = 1800.0);
/// `over` replaces `base` plan by plan.
ActionBundle overlay(ActionBundle base, const ActionBundle& over);
/// Plans in the bundle that fall outside the enabled tasks.
std::vector<std::string> disabled_plans(const TrafficNetwork& net, const ActionBundle& bundle,
                                        std::span<const Task> tasks);

struct RolloutResult {
  int index = 0;
  ActionBundle bundle;  // as proposed; evaluated over the Classic defaults
  HorizonMetrics metrics;
  RewardBreakdown reward;
  JudgeVerdict verdict;  // stub score recorded with the rollout
  int rank = 0;          // 1 = best so far this episode

  nlohmann::json to_json() const;
};

/// Runs `bundle` over a clone of `live` and scores it against `baseline`.
/// The live state is never modified.
RolloutResult rollout_evaluate(const EnvState& live, const ActionBundle& bundle, const HorizonMetrics& baseline,
                               const EpisodeConfig& config);
/// Independent rollouts on up to `config.workers` threads; results in input order.
std::vector<RolloutResult> rollout_many(const EnvState& live, const std::vector<ActionBundle>& bundles,
                                        const HorizonMetrics& baseline, const EpisodeConfig& config);

enum class ActionKind : std::uint8_t {
  plan,
  get_control_api,
  data_analysis,
  policy_planning,
  debug,
  finish,
  reflection_finish,
  invalid,  // malformed ACTION text; the turn is still consumed
};
std::string_view to_string(ActionKind kind) noexcept;
ActionKind parse_action_kind(std::string_view name);

struct ParsedAction {
  ActionKind kind = ActionKind::plan;
  std::string payload;  // text after the ACTION line
};

/// Strict grammar: the first non-blank line is "ACTION: <NAME>" and no other
/// line starts with "ACTION:". Throws Errc::protocol naming the offending line.
ParsedAction parse_action_text(const std::string& text);
/// First fenced code block, else the text from the first '{' or '['.
std::optional<nlohmann::json> extract_json(const std::string& text);

/// Whitelisted analysis operations, with their argument names.
const std::vector<std::pair<std::string, std::string>>& analysis_whitelist();
/// Runs one {op, args, save?, key?} request; cache ops act on `cache`.
nlohmann::json run_analysis(const nlohmann::json& request, const Environment& env, ContextCache& cache);

/// Module capability sheet: action schema and bounds, current configuration,
/// metric definitions, callable operations and dependencies.
nlohmann::json capability_sheet(Task task, const Environment& env, std::span<const Task> enabled);
/// Module names affected by / affecting each enabled module.
nlohmann::json module_dependencies(std::span<const Task> enabled);

struct AgentTurn {
  int index = 0;
  std::string phase;  // decision or reflection
  ActionKind kind = ActionKind::plan;
  nlohmann::json payload;
  nlohmann::json reply;

  nlohmann::json to_json() const;
};

struct EpisodeRecord {
  std::string episode_id;
  std::vector<Task> tasks;
  double start = 0.0;
  double horizon = 0.0;
  std::vector<AgentTurn> turns;
  std::vector<RolloutResult> rollouts;
  HorizonMetrics baseline;
  ActionBundle committed;
  bool baseline_committed = false;
  std::optional<int> committed_rollout;
  HorizonMetrics committed_metrics;
  RewardBreakdown reward;  // committed, with the final judge verdict applied
  JudgeVerdict verdict;
  std::vector<std::string> insights;
  bool summary_fallback = false;
  std::vector<std::string> warnings;
  std::uint64_t state_hash_before = 0;
  std::uint64_t state_hash_after = 0;

  nlohmann::json to_json() const;
  std::string conversation() const;
};

/// One episode of the closed loop over an environment. `handle` answers every
/// message with exactly one reply object.
class EpisodeSession {
 public:
  EpisodeSession(Environment& env, EpisodeConfig config, PsmStore psm = {});

  nlohmann::json handle(const nlohmann::json& message);
  nlohmann::json handle_line(const std::string& line);

  bool finished() const noexcept { return phase_ == Phase::done; }
  const EpisodeRecord& record() const noexcept { return record_; }
  const PsmStore& psm() const noexcept { return psm_; }
  const ContextCache& cache() const noexcept { return cache_; }
  const EpisodeConfig& config() const noexcept { return config_; }

 private:
  enum class Phase { decision, reflection, done };

  nlohmann::json hello() const;
  nlohmann::json turn(ActionKind kind, const nlohmann::json& payload, const std::string& raw_text);
  nlohmann::json decision_turn(ActionKind kind, const nlohmann::json& payload, const std::string& raw_text);
  nlohmann::json reflection_turn(ActionKind kind, const nlohmann::json& payload, const std::string& raw_text);
  nlohmann::json policy_planning(const nlohmann::json& payload, const std::string& raw_text);
  nlohmann::json data_analysis(const nlohmann::json& payload, const std::string& raw_text);
  nlohmann::json commit();
  nlohmann::json reflect(const std::vector<std::string>& insights, bool fallback, std::vector<std::string> warnings);
  nlohmann::json finish();
  nlohmann::json error_reply(Errc code, const std::string& message, nlohmann::json detail = nullptr);
  std::vector<TaskDelta> task_deltas() const;
  void log_turn(ActionKind kind, const nlohmann::json& payload, const nlohmann::json& reply);

  Environment& env_;
  EpisodeConfig config_;
  PsmStore psm_;
  ContextCache cache_;
  EpisodeRecord record_;
  ActionBundle classic_;
  Phase phase_ = Phase::decision;
  int decision_turns_ = 0;
  int reflection_turns_ = 0;
  nlohmann::json last_error_;
  nlohmann::json last_failed_payload_;
};

/// Deterministic stand-in for the language model. Reads each reply and emits
/// the next protocol message.
class ScriptedAgent {
 public:
  explicit ScriptedAgent(double hotspot_queue = 5.0, double hotspot_speed = 2.0)
      : hotspot_queue_(hotspot_queue), hotspot_speed_(hotspot_speed) {}

  /// Next message given the previous reply (null before the first message).
  nlohmann::json next(const nlohmann::json& reply);

 private:
  nlohmann::json propose(bool refine) const;

  double hotspot_queue_;
  double hotspot_speed_;
  int step_ = 0;
  std::vector<std::string> modules_;
  std::size_t api_index_ = 0;
  std::map<std::string, nlohmann::json> sheets_;
  nlohmann::json hotspots_;
  nlohmann::json rollouts_ = nlohmann::json::array();
  nlohmann::json last_;
  bool proposed_refined_ = false;
  bool committed_ = false;
  bool reflected_ = false;
};

/// Drives a session with the scripted agent until it finishes.
EpisodeRecord run_scripted_episode(EpisodeSession& session, ScriptedAgent agent = ScriptedAgent{});

/// Newline-delimited request/reply over streams until the session finishes
/// or input ends.
void serve_stream(EpisodeSession& session, std::istream& in, std::ostream& out);
/// Accepts one control connection on host:port and serves the session on it.
void serve_tcp(EpisodeSession& session, const std::string& host, int port);

/// Newline-delimited transcript of an episode, one turn per line.
std::string transcript_ndjson(const EpisodeRecord& record);

}  // namespace utc
