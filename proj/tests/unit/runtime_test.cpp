#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "episode.hpp"

using namespace utc;
using nlohmann::json;

namespace {

json call(EpisodeSession& s, const char* action, json payload = nullptr) {
  json m = {{"type", "call"}, {"action", action}};
  if (!payload.is_null()) m["payload"] = std::move(payload);
  return s.handle(m);
}

bool is_error(const json& reply, Errc code) {
  return reply.value("type", "") == "error" && reply.value("code", "") == errc_name(code);
}

}  // namespace

TEST_CASE("scripted episode on the congested grid") {
  Environment env = testing::episode_env("congested_grid.json");
  const auto before = state_hash(env.live());
  EpisodeSession s(env, testing::episode_config("congested_grid.json"));
  const EpisodeRecord& rec = run_scripted_episode(s);
  CHECK(s.finished());
  CHECK(rec.state_hash_before == before);
  CHECK(rec.state_hash_after == state_hash(env.live()));
  CHECK(env.live().clock == doctest::Approx(28800.0 + 1800.0));
  REQUIRE_FALSE(rec.rollouts.empty());
  CHECK(rec.turns.size() <= 25);
  CHECK_FALSE(rec.insights.empty());
  REQUIRE(rec.committed_rollout);
  CHECK_FALSE(rec.baseline_committed);
  CHECK(json(rec.committed) != json(classic_bundle(env.live(), env.history(), 1800.0)));
  // the committed candidate has the best recorded total
  double best = 0.0;
  for (const RolloutResult& r : rec.rollouts) best = std::max(best, r.reward.total);
  CHECK(rec.rollouts[*rec.committed_rollout].reward.total == best);
  CHECK(rec.rollouts[*rec.committed_rollout].rank == 1);
}

TEST_CASE("scripted agent on a quiet toy grid") {
  Environment env = testing::episode_env("toy_grid.json");
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  const EpisodeRecord& rec = run_scripted_episode(s);
  CHECK(s.finished());
  CHECK(env.live().clock == doctest::Approx(28800.0 + 1800.0));
  // baseline scores 0.5 * 1 + 0.5 * 0.3
  double best = 0.65;
  for (const RolloutResult& r : rec.rollouts) best = std::max(best, r.reward.total);
  if (rec.committed_rollout) {
    CHECK(rec.rollouts[*rec.committed_rollout].reward.total == best);
  } else {
    CHECK(best == 0.65);
    CHECK_FALSE(rec.warnings.empty());
  }
}

TEST_CASE("an agent that never plans commits the baseline") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  CHECK(s.handle(json{{"type", "hello"}}).value("turn_limit", 0) == 20);
  json c = s.handle(json{{"type", "commit"}});
  REQUIRE(c.value("type", "") == "commit");
  CHECK(c["baseline_committed"] == true);
  CHECK(s.record().baseline_committed);
  CHECK(s.record().reward.f_ri == 0.0);
  CHECK_FALSE(s.record().warnings.empty());
  json f = s.handle(json{{"type", "finish"}});
  CHECK(f.value("type", "") == "finish");
  CHECK(s.finished());
  CHECK(s.record().summary_fallback);
}

TEST_CASE("turn limit") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  for (int k = 0; k < 20; ++k) CHECK(call(s, "PLAN").value("type", "") == "call");
  json r = call(s, "PLAN");
  CHECK(is_error(r, Errc::turn_limit));
  CHECK(r["commit"].value("type", "") == "commit");
}

TEST_CASE("rollouts are isolated and reproducible") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeConfig cfg = testing::episode_config("toy_grid.json");
  const ActionBundle classic = classic_bundle(env.live(), env.history(), cfg.horizon);
  const auto hash = state_hash(env.live());
  const HorizonMetrics base = run_horizon(clone_state(env.live()), classic, cfg.horizon, cfg.dt, cfg.tasks).metrics;

  RolloutResult self = rollout_evaluate(env.live(), classic, base, cfg);
  CHECK(self.reward.f_ri == 0.0);
  CHECK(self.reward.f_tp == 1.0);

  ActionBundle longer = classic;
  for (auto& [id, plan] : longer.signals) {
    plan.cycle_time += 20.0;
    for (double& g : plan.greens) g += 20.0 / static_cast<double>(plan.greens.size());
  }
  cfg.workers = 2;
  auto pair = rollout_many(env.live(), {longer, longer}, base, cfg);
  REQUIRE(pair.size() == 2);
  CHECK(pair[0].metrics.to_json() == pair[1].metrics.to_json());
  CHECK(pair[0].reward.total == pair[1].reward.total);
  CHECK(state_hash(env.live()) == hash);
}

TEST_CASE("data analysis turns") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  json r = call(s, "DATA_ANALYSIS",
                {{"op", "identify_congestion_hotspots"}, {"args", {{"queue_threshold", 20}, {"speed_threshold", 2.0}}}});
  CHECK(r.value("type", "") == "observe");
  CHECK(r["result"]["result"].is_array());

  json bad = call(s, "DATA_ANALYSIS", {{"op", "teleport"}});
  CHECK(is_error(bad, Errc::not_found));
  CHECK(bad.value("message", "").find("calculate_network_metrics") != std::string::npos);

  json saved = s.handle(json{{"type", "observe"},
                             {"op", "calculate_network_metrics"},
                             {"args", {{"window", 300}}},
                             {"save", "net_t0"}});
  CHECK(saved["result"]["saved"] == "net_t0");
  json listed = s.handle(json{{"type", "observe"}, {"op", "list_cache"}});
  CHECK(listed["result"]["result"].dump().find("net_t0") != std::string::npos);
  CHECK(s.record().turns.size() == 2);
}

TEST_CASE("control api sheets") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  CHECK(is_error(call(s, "GET_CONTROL_API", "ramp_metering"), Errc::not_enabled));
  json bus = call(s, "GET_CONTROL_API", "bus_scheduling");
  REQUIRE(bus.value("type", "") == "call");
  CHECK(bus["result"].contains("current_bus_schedule"));
  CHECK(bus["result"].contains("metrics"));
}

TEST_CASE("policy planning validates before rolling out") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  ActionBundle bad;
  bad.transit["R1"] = TransitSchedule{"R1", 30.0, {}, 0.0, 86400.0};
  json r = s.handle(json{{"type", "policy"}, {"bundle", json(bad)}});
  CHECK(is_error(r, Errc::invalid_action));
  CHECK(s.record().rollouts.empty());
  json dbg = call(s, "DEBUG");
  CHECK(dbg["result"].contains("last_error"));

  ActionBundle ok;
  ok.transit["R1"] = TransitSchedule{"R1", 600.0, {}, 0.0, 86400.0};
  json good = s.handle(json{{"type", "policy"}, {"bundle", json(ok)}});
  CHECK(good.value("type", "") == "rollout_result");
  CHECK(s.record().rollouts.size() == 1);
}

TEST_CASE("action text grammar") {
  CHECK(parse_action_text("ACTION: FINISH").kind == ActionKind::finish);
  auto p = parse_action_text("\n  \nACTION: DATA_ANALYSIS\n{\"op\": \"list_cache\"}\n");
  CHECK(p.kind == ActionKind::data_analysis);
  CHECK(extract_json(p.payload)->at("op") == "list_cache");
  CHECK_THROWS_AS(parse_action_text("ACTION: PLAN\nACTION: FINISH"), Error);
  CHECK_THROWS_AS(parse_action_text("I think we should FINISH"), Error);
  CHECK_THROWS_AS(parse_action_text(""), Error);
  CHECK_THROWS_AS(parse_action_text("ACTION: JUMP"), Error);

  auto fenced = extract_json("here:\n```json\n{\"a\": [1, 2]}\n```\ntrailing {");
  REQUIRE(fenced);
  CHECK((*fenced)["a"].size() == 2);
  CHECK_FALSE(extract_json("no json at all"));
}

TEST_CASE("text calls consume a turn even when malformed") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  json r = s.handle(json{{"type", "call"}, {"text", "ACTION: PLAN\nACTION: FINISH"}});
  CHECK(is_error(r, Errc::protocol));
  CHECK(r.value("turns_remaining", 0) == 19);
}

TEST_CASE("stream transport") {
  Environment env = testing::episode_env("toy_grid.json", 300.0);
  EpisodeSession s(env, testing::episode_config("toy_grid.json"));
  std::istringstream in("{\"type\": \"hello\"}\nnot json\n{\"type\": \"finish\"}\n{\"type\": \"hello\"}\n");
  std::ostringstream out;
  serve_stream(s, in, out);
  CHECK(s.finished());
  std::istringstream lines(out.str());
  std::vector<json> replies;
  for (std::string l; std::getline(lines, l);) replies.push_back(json::parse(l));
  REQUIRE(replies.size() == 3);
  CHECK(replies[0]["type"] == "hello");
  CHECK(is_error(replies[1], Errc::protocol));
  CHECK(replies[2]["type"] == "finish");
}
