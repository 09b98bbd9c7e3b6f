#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "utc/harness.hpp"

using namespace utc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const json* find_row(const json& cmp, const std::string& scope, const std::string& metric) {
  for (const json& r : cmp["rows"]) {
    if (r["scope"] == scope && r["metric"] == metric) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("baseline runs are reproducible and scripted runs compare against them") {
  const Scenario sc = load_scenario(testing::scenario("toy_grid.json"));
  const fs::path out = testing::scratch("harness_runs");
  RunOptions opt;
  opt.out = out;

  CHECK(run_name(sc, 7, RunMode::baseline) == "toy_grid_7_baseline");
  opt.mode = RunMode::scripted;
  try {
    cmd_run(sc, opt);
    FAIL("expected missing baseline");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_baseline);
  }

  opt.mode = RunMode::baseline;
  RunResult first = cmd_run(sc, opt);
  const std::string bytes = slurp(first.dir / "report.json");
  RunResult second = cmd_run(sc, opt);
  CHECK(slurp(second.dir / "report.json") == bytes);
  CHECK(first.report["counts"]["entered"].get<int>() ==
        first.report["counts"]["exited"].get<int>() + first.report["counts"]["in_network"].get<int>());
  CHECK(fs::exists(first.dir / "timing.json"));
  CHECK(slurp(first.dir / "report.json").find("wall") == std::string::npos);

  opt.mode = RunMode::scripted;
  RunResult scripted = cmd_run(sc, opt);
  REQUIRE(scripted.report["episodes"].size() == 2);
  for (const json& ep : scripted.report["episodes"]) CHECK(ep["f_ri_vs_baseline"].is_number());
  CHECK(fs::exists(scripted.dir / "psm.json"));
  CHECK(fs::exists(scripted.dir / "transcripts.ndjson"));
  CHECK(render_report(scripted.report).find("f_RI") != std::string::npos);

  json self = cmd_compare(first.report, first.report);
  for (const json& r : self["rows"]) CHECK(r["change_pct"] == 0.0);

  json a = first.report, b = first.report;
  a["global"]["avg_waiting_time"] = 100.0;
  b["global"]["avg_waiting_time"] = 90.0;
  const json cmp = cmd_compare(a, b);
  const json* wait = find_row(cmp, "global", "avg_waiting_time");
  REQUIRE(wait);
  CHECK((*wait)["change_pct"].get<double>() == doctest::Approx(-10.0));
  CHECK((*wait)["improvement_pct"].get<double>() == doctest::Approx(10.0));

  b["seed"] = 8;
  try {
    cmd_compare(a, b);
    FAIL("expected a mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::scenario_mismatch);
  }
}

TEST_CASE("demand export") {
  const Scenario sc = load_scenario(testing::scenario("toy_grid.json"));
  const fs::path out = testing::scratch("demand");
  json stats = cmd_demand(sc, out);
  for (const char* f : {"od.json", "trips.csv", "demand_stats.json", "demand_stats.txt"}) CHECK(fs::exists(out / f));

  std::ifstream csv(out / "trips.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "id,origin,destination,mode,departure_time");
  std::map<std::string, int> by_mode;
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 5);
    ++by_mode[cells[3]];
  }
  CHECK(stats["trip_count"] == rows);
  CHECK(stats["sampled"]["Total"].get<double>() == rows);
  CHECK(stats["sampled"]["Walk"].get<double>() == by_mode["walk"]);
  CHECK(stats["sampled"]["Taxi"].get<double>() == by_mode["taxi"]);
  CHECK(stats["sampled"]["Public Transit"].get<double>() == by_mode["bus"] + by_mode["subway"]);
  const std::string table = render_demand_stats(stats);
  for (const char* h : {"Taxi", "Public Transit", "Walk", "Total"}) CHECK(table.find(h) != std::string::npos);
}

TEST_CASE("validate lists every failure") {
  const fs::path dir = testing::scratch("validate");
  CHECK(cmd_validate(testing::scenario("toy_grid.json"))["ok"] == true);

  json doc = json::parse(slurp(testing::scenario("toy_grid.json")));
  doc["network"] = "nowhere.network.json";
  doc["alpha"] = -1.0;
  doc["episodes"]["horizon"] = 0;
  std::ofstream(dir / "bad.json") << doc.dump(2);
  json r = cmd_validate(dir / "bad.json");
  CHECK(r["ok"] == false);
  CHECK(r["failures"].size() >= 3);
  const std::string all = r["failures"].dump();
  CHECK(all.find("nowhere.network.json") != std::string::npos);
  CHECK(all.find("alpha") != std::string::npos);
  CHECK(all.find("horizon") != std::string::npos);
  CHECK_THROWS_AS(load_scenario(dir / "bad.json"), Error);
}
