// navsim: run, sweep, and batch-score navigation scenarios.
//
// Exit codes: 0 Success, 2 Collision, 3 Freezing, 64 config/usage error.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nav/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitCollision = 2;
constexpr int kExitFreezing = 3;
constexpr int kExitConfig = 64;

int eventExitCode(nav::RunEvent e) {
  switch (e) {
    case nav::RunEvent::Success:
      return 0;
    case nav::RunEvent::Collision:
      return kExitCollision;
    case nav::RunEvent::Freezing:
      return kExitFreezing;
  }
  return kExitConfig;
}

struct CommonFlags {
  std::optional<uint64_t> seed;
  std::string prediction;  // "", "on", "off"
  std::string out_dir = "out";
  std::optional<double> planning_period;
  std::vector<std::string> overrides;
};

void addCommonFlags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Random seed");
  cmd->add_option("--prediction", flags.prediction, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--planning-period", flags.planning_period,
                  "Planning period in seconds");
  cmd->add_option("--set", flags.overrides,
                  "Dotted-path override, e.g. agent.v_max=2.0 (repeatable)");
}

nav::Scenario loadWithFlags(const std::string& path, const CommonFlags& flags) {
  nav::Scenario sc = nav::loadScenario(path);
  if (flags.seed) sc.seed = *flags.seed;
  if (!flags.prediction.empty()) sc.prediction_enabled = flags.prediction == "on";
  if (flags.planning_period) sc.planning_period = *flags.planning_period;
  for (const auto& kv : flags.overrides) nav::applyOverride(sc, kv);
  sc.validate();
  return sc;
}

void writeFile(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  size_t rank = static_cast<size_t>(std::ceil(q * values.size()));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

json outcomeJson(const nav::Scenario& sc, const nav::RunOutcome& outcome) {
  json j;
  j["scenario"] = sc.name;
  j["seed"] = sc.seed;
  j["prediction_enabled"] = sc.prediction_enabled;
  j["event"] = nav::toString(outcome.event);
  j["duration"] = outcome.duration;
  j["min_clearance"] = outcome.min_clearance;
  std::vector<double> cycle;
  for (const auto& t : outcome.timings) cycle.push_back(t.search_ms + t.opt_ms);
  j["cycles"] = cycle.size();
  j["cycle_ms_p50"] = percentile(cycle, 0.50);
  j["cycle_ms_p95"] = percentile(cycle, 0.95);
  j["cycle_ms_max"] = cycle.empty() ? 0.0 : *std::max_element(cycle.begin(), cycle.end());
  try {
    nav::RmseReport r = nav::rmseReport(outcome);
    j["rmse"] = {{"position", r.position_rmse},
                 {"velocity", r.velocity_rmse},
                 {"matched_samples", r.matched_samples},
                 {"unmatched_truth_samples", r.unmatched_truth_samples}};
  } catch (const std::exception&) {
    j["rmse"] = nullptr;
  }
  return j;
}

std::string timingsCsv(const nav::RunOutcome& outcome) {
  std::ostringstream os;
  os << "stamp,search_ms,opt_ms,map_ms,expansions,search_ok\n";
  for (const auto& t : outcome.timings) {
    os << t.stamp << "," << t.search_ms << "," << t.opt_ms << "," << t.map_ms
       << "," << t.expansions << "," << (t.search_ok ? 1 : 0) << "\n";
  }
  return os.str();
}

void writeRunArtifacts(const fs::path& dir, const nav::Scenario& sc,
                       const nav::RunOutcome& outcome) {
  fs::create_directories(dir);
  writeFile(dir / "outcome.json", outcomeJson(sc, outcome).dump(2) + "\n");
  writeFile(dir / "trajectory.csv", outcome.trajectory_csv);
  writeFile(dir / "tracking.csv", outcome.tracking_csv);
  writeFile(dir / "pedestrians.csv", outcome.pedestrian_csv);
  writeFile(dir / "timings.csv", timingsCsv(outcome));
}

int cmdRun(const std::string& path, const CommonFlags& flags) {
  nav::Scenario sc = loadWithFlags(path, flags);
  nav::RunOutcome outcome = nav::runScenario(sc);
  writeRunArtifacts(flags.out_dir, sc, outcome);
  std::cout << nav::toString(outcome.event) << " duration=" << outcome.duration
            << "s min_clearance=" << outcome.min_clearance << "m\n";
  return eventExitCode(outcome.event);
}

int cmdSweep(const std::string& path, double from, double step, double to,
             const CommonFlags& flags) {
  if (!(step > 0)) throw nav::ScenarioError("sweep: step must be > 0");
  nav::Scenario sc = loadWithFlags(path, flags);
  nav::SweepResult result = nav::sweepPedestrianSpeed(sc, from, step, to);

  fs::create_directories(flags.out_dir);
  std::ostringstream csv;
  csv << "speed,event\n";
  json per_speed = json::array();
  for (const auto& [v, event] : result.outcomes) {
    csv << v << "," << nav::toString(event) << "\n";
    per_speed.push_back({{"speed", v}, {"event", nav::toString(event)}});
  }
  json j;
  j["scenario"] = sc.name;
  j["prediction_enabled"] = sc.prediction_enabled;
  j["max_collision_free_speed"] = result.max_collision_free_speed;
  j["outcomes"] = per_speed;
  writeFile(fs::path(flags.out_dir) / "sweep.json", j.dump(2) + "\n");
  writeFile(fs::path(flags.out_dir) / "sweep.csv", csv.str());
  std::cout << "max collision-free speed: " << result.max_collision_free_speed
            << " m/s\n";
  return 0;
}

int cmdBatch(const std::string& path, int runs, const CommonFlags& flags) {
  if (runs < 1) throw nav::ScenarioError("batch: runs must be >= 1");
  nav::Scenario base = loadWithFlags(path, flags);
  uint64_t base_seed = base.seed;

  int success = 0, collision = 0, freezing = 0;
  std::vector<uint64_t> seeds;
  std::vector<double> cycle_ms;
  std::vector<double> pos_rmse, vel_rmse;

  for (int i = 0; i < runs; ++i) {
    nav::Scenario sc = base;
    sc.seed = base_seed + static_cast<uint64_t>(i);
    seeds.push_back(sc.seed);
    nav::RunOutcome outcome = nav::runScenario(sc);
    switch (outcome.event) {
      case nav::RunEvent::Success:
        ++success;
        break;
      case nav::RunEvent::Collision:
        ++collision;
        break;
      case nav::RunEvent::Freezing:
        ++freezing;
        break;
    }
    for (const auto& t : outcome.timings) cycle_ms.push_back(t.search_ms + t.opt_ms);
    try {
      nav::RmseReport r = nav::rmseReport(outcome);
      pos_rmse.push_back(r.position_rmse);
      vel_rmse.push_back(r.velocity_rmse);
    } catch (const std::exception&) {
    }
    writeRunArtifacts(fs::path(flags.out_dir) / ("run_" + std::to_string(sc.seed)),
                      sc, outcome);
    std::cout << "seed " << sc.seed << ": " << nav::toString(outcome.event) << "\n";
  }

  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0
                     : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  json j;
  j["scenario"] = base.name;
  j["prediction_enabled"] = base.prediction_enabled;
  j["runs"] = runs;
  j["seeds"] = seeds;
  j["counts"] = {{"Success", success}, {"Collision", collision}, {"Freezing", freezing}};
  j["rmse"] = {{"position_mean", mean(pos_rmse)},
               {"velocity_mean", mean(vel_rmse)},
               {"runs_with_rmse", pos_rmse.size()}};
  j["cycle_ms"] = {{"p50", percentile(cycle_ms, 0.50)},
                   {"p95", percentile(cycle_ms, 0.95)},
                   {"max", cycle_ms.empty()
                               ? 0.0
                               : *std::max_element(cycle_ms.begin(), cycle_ms.end())}};
  fs::create_directories(flags.out_dir);
  writeFile(fs::path(flags.out_dir) / "batch_summary.json", j.dump(2) + "\n");
  std::cout << "Success " << success << " / Collision " << collision
            << " / Freezing " << freezing << "\n";
  return 0;
}

bool checkCsvHeader(const fs::path& file, const std::string& expected,
                    std::string& error) {
  std::ifstream is(file);
  if (!is) {
    error = "missing " + file.string();
    return false;
  }
  std::string header;
  std::getline(is, header);
  if (header != expected) {
    error = file.string() + ": header '" + header + "' != '" + expected + "'";
    return false;
  }
  return true;
}

bool checkOutcomeJson(const fs::path& file, std::string& error) {
  std::ifstream is(file);
  if (!is) {
    error = "missing " + file.string();
    return false;
  }
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    error = file.string() + ": " + e.what();
    return false;
  }
  for (const char* key :
       {"scenario", "seed", "event", "duration", "min_clearance"}) {
    if (!j.contains(key)) {
      error = file.string() + ": missing field '" + key + "'";
      return false;
    }
  }
  std::string event = j["event"];
  if (event != "Success" && event != "Collision" && event != "Freezing") {
    error = file.string() + ": bad event '" + event + "'";
    return false;
  }
  return true;
}

int cmdSchemaCheck(const std::string& dir) {
  // Validate every run directory (a directory holding outcome.json) plus
  // any sweep/batch summaries below `dir`.
  int checked = 0;
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& error) {
    ++checked;
    if (!ok) errors.push_back(error);
  };

  for (auto it = fs::recursive_directory_iterator(dir);
       it != fs::recursive_directory_iterator(); ++it) {
    const fs::path& p = it->path();
    std::string err;
    if (p.filename() == "outcome.json") {
      require(checkOutcomeJson(p, err), err);
      fs::path d = p.parent_path();
      require(checkCsvHeader(d / "trajectory.csv",
                             "stamp,x,y,z,vx,vy,vz,min_clearance,cycle_ms", err),
              err);
      require(checkCsvHeader(d / "tracking.csv",
                             "stamp,id,x,y,vx,vy,motion_class", err),
              err);
      require(checkCsvHeader(d / "pedestrians.csv",
                             "stamp,pedestrian,x,y,vx,vy", err),
              err);
      require(checkCsvHeader(d / "timings.csv",
                             "stamp,search_ms,opt_ms,map_ms,expansions,search_ok",
                             err),
              err);
    } else if (p.filename() == "sweep.csv") {
      require(checkCsvHeader(p, "speed,event", err), err);
    } else if (p.filename() == "batch_summary.json" ||
               p.filename() == "sweep.json") {
      std::ifstream is(p);
      json j;
      try {
        is >> j;
        require(true, "");
      } catch (const std::exception& e) {
        require(false, p.string() + ": " + e.what());
      }
    }
  }
  for (const auto& e : errors) std::cerr << "schema-check: " << e << "\n";
  std::cout << "schema-check: " << checked << " checks, " << errors.size()
            << " failures\n";
  return errors.empty() ? 0 : kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-planning simulator for dynamic environments"};
  app.require_subcommand(1);

  std::string scenario_path;
  CommonFlags flags;

  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  addCommonFlags(run, flags);

  double from = 0.0, step = 0.1, to = 2.0;
  auto* sweep = app.add_subcommand("sweep", "Sweep pedestrian speed");
  sweep->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  sweep->add_option("--from", from, "Start speed (m/s)");
  sweep->add_option("--step", step, "Speed increment (m/s)");
  sweep->add_option("--to", to, "End speed (m/s)");
  addCommonFlags(sweep, flags);

  int runs = 15;
  auto* batch = app.add_subcommand("batch", "Seeded batch of runs");
  batch->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  batch->add_option("--runs", runs, "Number of runs");
  addCommonFlags(batch, flags);

  std::string check_dir = "out";
  auto* schema = app.add_subcommand("schema-check", "Validate emitted artifacts");
  schema->add_option("dir", check_dir, "Directory of artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return cmdRun(scenario_path, flags);
    if (sweep->parsed()) return cmdSweep(scenario_path, from, step, to, flags);
    if (batch->parsed()) return cmdBatch(scenario_path, runs, flags);
    if (schema->parsed()) return cmdSchemaCheck(check_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
