#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "utc/demand.hpp"
#include "utc/runtime.hpp"

namespace utc {

struct DemandConfig {
  double total_trips = 0.0;
  double w_pop = 0.5;
  double w_poi = 0.5;
  double intra_zone_floor = kDefaultIntraZoneFloor;
  TemporalProfile profile = rush_hour_profile();
  ModeSplitTable modes = ModeSplitTable::defaults();
  std::map<std::pair<Id, Id>, std::string> purposes;
};

struct AgentConfig {
  int turn_limit = 20;
  int reflection_turn_limit = 5;
  int rollout_budget = 5;
  unsigned workers = 1;
  std::string judge_endpoint;
  std::filesystem::path psm;  // empty: one store per run directory
  double hotspot_queue = 5.0;
  double hotspot_speed = 2.0;
};

struct Scenario {
  std::string name;
  std::filesystem::path file;
  std::filesystem::path network;
  DemandConfig demand;
  std::size_t fleet_size = 0;
  std::vector<Task> tasks;
  double start = 0.0;
  double end = 86400.0;
  double dt = kDefaultDt;
  double horizon = 1800.0;
  std::vector<double> episodes;  // episode start times
  std::uint64_t seed = 0;
  double alpha = 0.5;
  double beta = 0.5;
  DynamicsParams controllers;
  AgentConfig agent;
  nlohmann::json document;  // as loaded, for the run directory copy

  /// FNV-1a over the canonical dump of the document, as 16 hex digits.
  std::string digest() const;
};

struct ScenarioIssue {
  Errc code;
  std::string message;
};

/// Every problem in a scenario document, including its network file.
std::vector<ScenarioIssue> scenario_issues(const nlohmann::json& doc, const std::filesystem::path& base_dir);
/// Parses and validates; throws Errc::validation listing every issue.
Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

struct BuiltDemand {
  std::shared_ptr<const TrafficNetwork> net;
  ODMatrix od;
  std::vector<Trip> trips;
};
BuiltDemand build_demand(const Scenario& scenario, std::uint64_t seed);

enum class RunMode : std::uint8_t { baseline, scripted, external };
std::string_view to_string(RunMode mode) noexcept;
RunMode parse_run_mode(std::string_view text);

struct RunOptions {
  RunMode mode = RunMode::baseline;
  std::filesystem::path out = "runs";
  std::optional<std::uint64_t> seed;
  std::string listen = "stdio";  // external mode: stdio or host:port
  std::istream* in = nullptr;    // stdio transport; defaults to std::cin
  std::ostream* out_stream = nullptr;
};

struct RunResult {
  std::filesystem::path dir;
  nlohmann::json report;
};

/// `<scenario>_<seed>_<mode>`.
std::string run_name(const Scenario& scenario, std::uint64_t seed, RunMode mode);
/// Baseline mode drives Classic controllers throughout; agent modes run the
/// scheduled episodes and compare each against the stored baseline run.
/// Throws Errc::missing_baseline when no baseline report exists for the seed.
RunResult cmd_run(const Scenario& scenario, const RunOptions& options);

/// Signed percent change from A to B per metric, plus the improvement with
/// lower-is-better metrics flipped. Throws Errc::scenario_mismatch.
nlohmann::json cmd_compare(const nlohmann::json& a, const nlohmann::json& b);

/// {ok, failures: [{code, message}]}.
nlohmann::json cmd_validate(const std::filesystem::path& scenario_path);

/// Writes od.json, trips.csv and demand_stats.{json,txt} into `out`.
nlohmann::json cmd_demand(const Scenario& scenario, const std::filesystem::path& out,
                          std::optional<std::uint64_t> seed = std::nullopt);

std::string render_report(const nlohmann::json& report);
std::string render_comparison(const nlohmann::json& comparison);
std::string render_demand_stats(const nlohmann::json& stats);

/// Report column for a task metric (Throughput, Wait, Fuel, ...).
std::string_view metric_column(std::string_view metric);
bool metric_higher_is_better(std::string_view metric);
HorizonMetrics horizon_metrics_from_json(const nlohmann::json& j);

}  // namespace utc
