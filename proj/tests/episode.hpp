#pragma once

#include "support.hpp"
#include "utc/harness.hpp"
#include "utc/runtime.hpp"

namespace testing {

// Environment at the scenario's first episode start, warmed up under Classic
// control for `warm` seconds.
inline utc::Environment episode_env(const std::string& scenario_file, double warm = 900.0) {
  utc::Scenario sc = utc::load_scenario(scenario(scenario_file));
  utc::BuiltDemand d = utc::build_demand(sc, sc.seed);
  utc::DynamicsParams p = sc.controllers;
  p.start_time = sc.episodes.front() - warm;
  utc::Environment env(utc::init_state(d.net, std::move(d.trips), sc.fleet_size, sc.seed, p));
  env.advance(utc::classic_bundle(env.live(), env.history(), warm), warm, sc.tasks, sc.dt);
  return env;
}

inline utc::EpisodeConfig episode_config(const std::string& scenario_file) {
  utc::Scenario sc = utc::load_scenario(scenario(scenario_file));
  utc::EpisodeConfig cfg;
  cfg.tasks = sc.tasks;
  cfg.horizon = sc.horizon;
  cfg.seed = sc.seed;
  cfg.judge.endpoint.clear();
  return cfg;
}

}  // namespace testing
