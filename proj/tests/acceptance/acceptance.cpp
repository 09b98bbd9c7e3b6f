// One line per acceptance criterion; exit status is nonzero when any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "episode.hpp"
#include "utc/controllers.hpp"
#include "utc/demand.hpp"
#include "utc/memory.hpp"
#include "utc/observe.hpp"
#include "utc/reward.hpp"

using namespace utc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

template <class F>
void guarded(const char* name, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(false, name, std::string("threw: ") + e.what());
  }
}

// 1 ---------------------------------------------------------------------------
void conservation() {
  Scenario sc = load_scenario(testing::scenario("toy_grid.json"));
  // Oversample, then thin evenly to exactly 10000 trips.
  sc.demand.total_trips = 10600.0;
  BuiltDemand d = build_demand(sc, sc.seed);
  if (d.trips.size() < 10000) throw std::runtime_error("sampled only " + std::to_string(d.trips.size()) + " trips");
  std::vector<Trip> trips;
  const std::size_t n = d.trips.size();
  for (std::size_t k = 0; k < 10000; ++k) trips.push_back(d.trips[k * n / 10000]);

  const auto t0 = std::chrono::steady_clock::now();
  EnvState s = init_state(d.net, std::move(trips), sc.fleet_size, sc.seed, sc.controllers);
  Environment env(std::move(s));
  std::size_t violations = 0, ticks = 0;
  std::string first;
  // Classic control refreshed every 30 minutes, invariants after every tick.
  while (env.live().clock < 86400.0) {
    const ActionBundle b = classic_bundle(env.live(), env.history(), 1800.0);
    for (int k = 0; k < 1800; ++k) {
      env.advance(b, 1.0, sc.tasks);
      ++ticks;
      const EnvState& st = env.live();
      std::uint64_t on_lanes = 0;
      for (const LaneState& l : st.lanes) on_lanes += l.count();
      const bool balanced = st.entered == st.exited + on_lanes;
      auto bad = check_invariants(st);
      if (!balanced || bad) {
        if (violations++ == 0) first = bad ? *bad : "entered != vehicles on lanes + exited";
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const EnvState& st = env.live();
  report(violations == 0 && secs <= 60.0 && ticks == 86400, "conservation",
         std::to_string(ticks) + " ticks, 10000 trips, entered " + std::to_string(st.entered) + " exited " +
             std::to_string(st.exited) + ", " + std::to_string(violations) + " violations" +
             (first.empty() ? "" : " (first: " + first + ")") + fmt(", %.2f s", secs));
}

// 2 ---------------------------------------------------------------------------
void gravity_oracle() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> q(0.05, 2.0), e(60.0, 1800.0), total(1000.0, 200000.0);
  const ModeSplitTable table = ModeSplitTable::defaults();
  std::vector<std::string> cats;
  for (const auto& [c, row] : table.rows()) cats.push_back(c);
  double worst_cell = 0.0, worst_modes = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    ActivityProfile a{{"Z1", "Z2", "Z3", "Z4"}, {}};
    for (int i = 0; i < 4; ++i) a.intensity.push_back(q(gen));
    std::vector<double> imp(16);
    for (double& v : imp) v = e(gen);
    const double t = total(gen);
    ODMatrix od = gravity_demand(a, imp, t);

    double denom = 0.0;
    for (int k = 0; k < 4; ++k) {
      for (int l = 0; l < 4; ++l) denom += a.intensity[k] * a.intensity[l] / imp[k * 4 + l];
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double want = t * (a.intensity[i] * a.intensity[j] / imp[i * 4 + j]) / denom;
        worst_cell = std::max(worst_cell, std::abs(od.at(i, j) - want));
      }
    }
    ODMatrix split = apply_mode_split(od, table, [&](std::size_t i, std::size_t j) { return cats[(i * 4 + j) % cats.size()]; });
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        double sum = 0.0;
        for (Mode m : kModes) sum += split.mode_demand(i, j, m);
        worst_modes = std::max(worst_modes, std::abs(sum - split.at(i, j)));
      }
    }
  }
  report(worst_cell <= 1e-9 && worst_modes <= 1e-9, "gravity_oracle",
         fmt("5 instances, max cell error %.3g, max mode-sum error %.3g", worst_cell, worst_modes));
}

// 3 ---------------------------------------------------------------------------
void webster() {
  const std::vector<double> y{0.3, 0.375};
  const WebsterResult r = webster_cycle(y, 10.0);
  bool over = false;
  try {
    const std::vector<double> full{0.6, 0.4};
    webster_cycle(full, 10.0);
  } catch (const Error& e) {
    over = e.code() == Errc::oversaturated;
  }
  const double err = std::abs(r.raw_cycle - 61.5);
  report(err <= 1e-6 && over, "webster",
         fmt("L=10 Y=0.675 pre-clamp cycle %.9f, |C - 61.5| = %.6g (tolerance 1e-6)", r.raw_cycle, err) +
             (over ? "; Y=1 raises oversaturated" : "; Y=1 did not raise oversaturated"));
}

// 4 ---------------------------------------------------------------------------
void alinea() {
  const double fixed = alinea_update(30.0, 0.25, 0.25, 100.0);
  double open = 60.0;
  int updates = 0;
  double worst = 0.0;
  bool ok = fixed == 30.0;
  while (open > 0.0 && updates < 100) {
    const double next = alinea_update(open, 0.35, 0.25, 100.0);
    const double want = std::max(0.0, open - 10.0);
    worst = std::max(worst, std::abs(next - want));
    open = next;
    ++updates;
  }
  const double after = alinea_update(open, 0.35, 0.25, 100.0);
  ok = ok && worst <= 1e-9 && updates == 6 && open == 0.0 && after == 0.0;
  report(ok, "alinea",
         fmt("fixed point %.1f -> %.1f; 60 s to 0 s in %.0f updates", 30.0, fixed, updates) +
             fmt(" of -10 s (max deviation %.3g), held at %.1f", worst, after));
}

// 5 ---------------------------------------------------------------------------
void forecaster() {
  std::vector<double> ar{1.0};
  for (int k = 0; k < 11; ++k) ar.push_back(2.0 * ar.back());
  const Forecast f = predict_arima(ar, 3, 1, 0);
  double ar_err = std::abs(f.coefficients.at(0) - 2.0);
  for (int h = 0; h < 3; ++h) ar_err = std::max(ar_err, std::abs(f.values[h] - ar.back() * std::pow(2.0, h + 1)));

  std::vector<double> ramp;
  for (int k = 0; k < 12; ++k) ramp.push_back(-4.0 + 2.5 * k);
  const Forecast r = predict_arima(ramp, 5, 1, 1);
  double ramp_err = 0.0;
  for (int h = 0; h < 5; ++h) ramp_err = std::max(ramp_err, std::abs(r.values[h] - (-4.0 + 2.5 * (12 + h))));
  report(ar_err <= 1e-6 && ramp_err <= 1e-6 && !f.fallback && !r.fallback, "forecaster",
         fmt("AR(1) coefficient %.9f (max error %.3g); ramp d=1 max error %.3g", f.coefficients.at(0), ar_err,
             ramp_err));
}

// 6 ---------------------------------------------------------------------------
ActionBundle random_bundle(const TrafficNetwork& net, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ActionBundle b;
  for (const Junction& j : net.junctions()) {
    if (!j.signalized || u(gen) < 0.2) continue;
    SignalPlan p{j.id, lost_time(j), {}};
    for (const Phase& ph : j.phases) {
      const double g = ph.min_green + u(gen) * (std::min(ph.max_green, 60.0) - ph.min_green);
      p.greens.push_back(g);
      p.cycle_time += g;
    }
    b.signals[j.id] = p;
  }
  for (const TransitRoute& r : net.routes()) {
    if (u(gen) < 0.5) b.transit[r.id] = TransitSchedule{r.id, 60.0 + u(gen) * 1140.0, {}, 0.0, 86400.0};
  }
  return b;
}

void rollout_isolation() {
  Environment env = testing::episode_env("toy_grid.json");
  EpisodeConfig cfg = testing::episode_config("toy_grid.json");
  const ActionBundle classic = classic_bundle(env.live(), env.history(), cfg.horizon);
  const HorizonMetrics base = run_horizon(clone_state(env.live()), classic, cfg.horizon, cfg.dt, cfg.tasks).metrics;
  const std::uint64_t before = state_hash(env.live());
  std::mt19937_64 gen(99);
  int invalid = 0, differing = 0;
  for (int k = 0; k < 10; ++k) {
    const ActionBundle b = random_bundle(env.net(), gen);
    if (!validate_action(env.net(), b, &env.live()).ok()) ++invalid;
    const RolloutResult a = rollout_evaluate(env.live(), overlay(classic, b), base, cfg);
    const RolloutResult c = rollout_evaluate(env.live(), overlay(classic, b), base, cfg);
    if (a.metrics.to_json() != c.metrics.to_json() || a.reward.total != c.reward.total) ++differing;
  }
  const std::uint64_t after = state_hash(env.live());
  report(invalid == 0 && differing == 0 && before == after, "rollout_isolation",
         "10 random bundles (" + std::to_string(invalid) + " invalid), live hash " +
             (before == after ? "unchanged" : "CHANGED") + ", " + std::to_string(differing) +
             " repeated rollouts differed");
}

// 7 ---------------------------------------------------------------------------
HorizonMetrics signal_metrics(double travel, double waiting, double throughput) {
  HorizonMetrics m;
  m.duration = 1800;
  m.avg_travel = travel;
  m.avg_waiting = waiting;
  m.throughput = throughput;
  m.empty = false;
  m.tasks.push_back(TaskMetrics{Task::signal_timing,
                                {{"throughput", throughput, true, "veh/h"},
                                 {"avg_waiting_time", waiting, false, "s"},
                                 {"avg_travel_time", travel, false, "s"}},
                                false});
  return m;
}

void reward_algebra() {
  const HorizonMetrics base[] = {signal_metrics(200.0, 40.0, 1000.0)};
  const RewardBreakdown self = system_reward(base, base);

  const HorizonMetrics policy[] = {signal_metrics(150.0, 30.0, 900.0)};
  RewardBreakdown r = system_reward(policy, base);
  apply_verdict(r, JudgeVerdict{7, "", JudgeSource::stub, false}, 0.5, 0.5);
  // f_TT = 1 - 150/200, f_TP = 900/1000, f_RI = (-0.1 + 0.25 + 0.25) / 3
  const double f_tt = 1.0 - 150.0 / 200.0;
  const double f_tp = 900.0 / 1000.0;
  const double f_ri = ((900.0 - 1000.0) / 1000.0 + (40.0 - 30.0) / 40.0 + (200.0 - 150.0) / 200.0) / 3.0;
  const double want = 0.5 * (f_tt + f_tp + f_ri) + 0.5 * 0.7;
  const double err = std::abs(r.total - want);
  report(self.f_ri == 0.0 && err <= 1e-12, "reward_algebra",
         fmt("self f_RI = %.1f; total %.15f vs hand %.15f", self.f_ri, r.total, want) + fmt(" (|diff| %.3g)", err));
}

// 8 ---------------------------------------------------------------------------
void psm_bound() {
  static const char* words[] = {"signal", "cycle",  "bus",     "headway", "taxi",    "queue",   "ramp",
                                "lane",   "zone",   "morning", "evening", "longer",  "shorter", "green",
                                "split",  "demand", "station", "dwell",   "reposition", "spillback",
                                "corridor", "north", "south",  "east",    "west",    "peak",    "idle"};
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(words) - 1), len(3, 9), batch(0, 4);
  auto sentence = [&] {
    std::string s;
    const std::size_t n = len(gen);
    for (std::size_t k = 0; k < n; ++k) s += (k ? " " : "") + std::string(words[pick(gen)]);
    return s;
  };
  PsmStore store;
  std::size_t max_size = 0;
  int inserted = 0, grew_on_duplicate = 0, duplicate_checks = 0, ep = 0;
  while (inserted < 1000) {
    std::vector<std::string> cands;
    const std::size_t n = std::min<std::size_t>(batch(gen) + 1, 1000 - inserted);
    for (std::size_t k = 0; k < n; ++k) cands.push_back(sentence());
    inserted += static_cast<int>(n);
    store = psm_update(std::move(store), cands, "ep" + std::to_string(ep++));
    max_size = std::max(max_size, store.items.size());

    // Reword one stored insight slightly; it must merge.
    if (!store.items.empty()) {
      std::string near = store.items[gen() % store.items.size()].text + " " + words[pick(gen)];
      bool similar = false;
      for (const auto& it : store.items) similar = similar || jaccard(it.text, near) >= kPsmMergeThreshold;
      if (similar) {
        ++duplicate_checks;
        const std::size_t size = store.items.size();
        store = psm_update(std::move(store), {near}, "ep" + std::to_string(ep++));
        if (store.items.size() > size) ++grew_on_duplicate;
      }
    }
  }
  report(max_size <= kPsmCapacity && grew_on_duplicate == 0 && duplicate_checks > 0, "psm_bound",
         "1000 insertions, max size " + std::to_string(max_size) + "; " + std::to_string(duplicate_checks) +
             " near-duplicates, " + std::to_string(grew_on_duplicate) + " grew the store");
}

// 9 ---------------------------------------------------------------------------
void scripted_improvement() {
  Scenario sc = load_scenario(testing::scenario("congested_grid.json"));
  Environment env = testing::episode_env("congested_grid.json", sc.episodes.front() - sc.start);
  EpisodeConfig cfg = testing::episode_config("congested_grid.json");
  const HorizonMetrics uniform =
      run_horizon(clone_state(env.live()), uniform_bundle(env.live(), cfg.horizon), cfg.horizon, cfg.dt, cfg.tasks)
          .metrics;
  EpisodeSession session(env, cfg);
  const EpisodeRecord& rec = run_scripted_episode(session);
  double best = -1e300;
  for (const RolloutResult& r : rec.rollouts) best = std::max(best, r.reward.total);
  const bool lower = rec.committed_metrics.avg_waiting < uniform.avg_waiting;
  const bool dominant = rec.rollouts.empty() || rec.reward.total >= best;
  report(lower && dominant, "scripted_improvement",
         fmt("avg wait committed %.2f s vs uniform %.2f s; ", rec.committed_metrics.avg_waiting, uniform.avg_waiting) +
             fmt("committed reward %.6f vs best rollout %.6f over ", rec.reward.total, best) +
             std::to_string(rec.rollouts.size()) + " rollouts" +
             (rec.baseline_committed ? " (baseline committed)" : ""));
}

// 10 --------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void end_to_end() {
  const Scenario sc = load_scenario(testing::scenario("toy_grid.json"));
  RunOptions opt;
  opt.out = testing::scratch("acceptance_runs");
  std::string detail;
  bool ok = true;
  for (RunMode m : {RunMode::baseline, RunMode::scripted}) {
    opt.mode = m;
    const std::string a = slurp(cmd_run(sc, opt).dir / "report.json");
    const std::string b = slurp(cmd_run(sc, opt).dir / "report.json");
    const bool same = !a.empty() && a == b;
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : ", ") + std::string(to_string(m)) + " reports " +
              (same ? "byte-identical" : "DIFFER") + " (" + std::to_string(a.size()) + " bytes)";
  }
  report(ok, "end_to_end_determinism", detail);
}

}  // namespace

int main() {
  guarded("conservation", conservation);
  guarded("gravity_oracle", gravity_oracle);
  guarded("webster", webster);
  guarded("alinea", alinea);
  guarded("forecaster", forecaster);
  guarded("rollout_isolation", rollout_isolation);
  guarded("reward_algebra", reward_algebra);
  guarded("psm_bound", psm_bound);
  guarded("scripted_improvement", scripted_improvement);
  guarded("end_to_end_determinism", end_to_end);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
