// Command-line front end: run, compare, validate, demand.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "utc/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int fail(std::string_view code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
  return 2;
}

fs::path report_path(const fs::path& p) { return fs::is_directory(p) ? p / "report.json" : p; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Urban traffic control harness"};
  app.require_subcommand(1);

  std::string scenario_path, mode = "baseline", listen = "stdio", out_dir = "runs";
  std::optional<std::uint64_t> seed;
  bool as_json = false;

  auto* run = app.add_subcommand("run", "Run a scenario in baseline, scripted or external-agent mode");
  run->add_option("--scenario", scenario_path, "Scenario file")->required();
  run->add_option("--mode", mode, "baseline | scripted | external")->check(CLI::IsMember({"baseline", "scripted", "external"}));
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Directory holding run directories");
  run->add_option("--listen", listen, "External agent transport: stdio or host:port");

  std::string report_a, report_b;
  auto* compare = app.add_subcommand("compare", "Relative improvement of report B over report A");
  compare->add_option("a", report_a, "Reference report or run directory")->required();
  compare->add_option("b", report_b, "Candidate report or run directory")->required();
  compare->add_flag("--json", as_json, "Print the comparison as JSON");

  auto* validate = app.add_subcommand("validate", "Check a scenario and its network");
  validate->add_option("--scenario,scenario", scenario_path, "Scenario file")->required();

  auto* demand = app.add_subcommand("demand", "Export OD matrix, trips and demand statistics");
  demand->add_option("--scenario", scenario_path, "Scenario file")->required();
  demand->add_option("--out", out_dir, "Output directory")->required();
  demand->add_option("--seed", seed, "Override the scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      utc::RunOptions opt;
      opt.mode = utc::parse_run_mode(mode);
      opt.out = out_dir;
      opt.seed = seed;
      opt.listen = listen;
      const utc::Scenario sc = utc::load_scenario(scenario_path);
      const utc::RunResult r = utc::cmd_run(sc, opt);
      // stdout carries the protocol in stdio mode, so the summary goes to stderr.
      std::ostream& summary = opt.mode == utc::RunMode::external && listen == "stdio" ? std::cerr : std::cout;
      summary << utc::render_report(r.report) << "Artifacts: " << r.dir.string() << "\n";
    } else if (*compare) {
      const json cmp = utc::cmd_compare(utc::read_json_file(report_path(report_a)), utc::read_json_file(report_path(report_b)));
      std::cout << (as_json ? cmp.dump(2) + "\n" : utc::render_comparison(cmp));
    } else if (*validate) {
      const json v = utc::cmd_validate(scenario_path);
      std::cout << v.dump(2) << "\n";
      return v["ok"].get<bool>() ? 0 : 1;
    } else if (*demand) {
      const json stats = utc::cmd_demand(utc::load_scenario(scenario_path), out_dir, seed);
      std::cout << utc::render_demand_stats(stats);
    }
  } catch (const utc::Error& e) {
    return fail(utc::errc_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
