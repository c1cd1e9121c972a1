#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wbfc/simulation.hpp"

namespace {

struct RunResult {
  std::string label;
  wbfc::Metrics metrics;
};

int run_one(const wbfc::KinematicTree& model, const wbfc::Scenario& scenario,
            wbfc::ControllerKind kind, const std::filesystem::path& out_dir,
            std::vector<RunResult>& results, nlohmann::json& metrics_json) {
  const wbfc::SimulationLog log = wbfc::run_experiment(model, scenario, kind);
  if (log.ticks.empty()) {
    std::cerr << "simulation failure (" << wbfc::to_string(kind) << "): " << log.failure << "\n";
    return 3;
  }
  const std::string label = std::string(wbfc::to_string(kind)) + "_" + scenario.profile.name();
  wbfc::write_csv(log, (out_dir / (label + ".csv")).string());
  // A controller that loses the robot mid-run still leaves a partial log; its
  // metrics cover the surviving window and the failure is recorded.
  const double skip = log.ticks.back().t >= 2.0 ? 1.0 : 0.0;
  const wbfc::Metrics metrics =
      wbfc::compute_metrics(log, scenario.profile, scenario.desired_pose(), skip);
  metrics_json[label] = nlohmann::json::parse(wbfc::metrics_to_json(metrics));
  if (!log.failure.empty()) {
    metrics_json[label]["failure"] = log.failure;
    std::cerr << "note (" << label << "): " << log.failure << "\n";
  }
  results.push_back({label + (log.failure.empty() ? "" : " (failed)"), metrics});
  return 0;
}

void print_table(std::vector<RunResult> results) {
  std::sort(results.begin(), results.end(), [](const RunResult& a, const RunResult& b) {
    return a.metrics.rms_force_error.z() < b.metrics.rms_force_error.z();
  });
  std::printf("%-22s %12s %12s %12s %14s %14s\n", "run", "rms_x [N]", "rms_y [N]", "rms_z [N]",
              "max |e_f| [N]", "max base [m]");
  for (const auto& r : results) {
    std::printf("%-22s %12.4f %12.4f %12.4f %14.4f %14.6f\n", r.label.c_str(),
                r.metrics.rms_force_error.x(), r.metrics.rms_force_error.y(),
                r.metrics.rms_force_error.z(), r.metrics.max_force_error,
                r.metrics.max_base_position_deviation);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projected whole-body interaction-force control experiments"};

  std::string scenario_path;
  std::string controller_override;
  std::string out_override;
  bool compare = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::optional<int> dump_tick;

  app.add_option("--scenario", scenario_path, "scenario JSON file")->required();
  app.add_option("--controller", controller_override, "proposed | howsm | pidcwcu");
  app.add_flag("--compare", compare, "run all three controllers");
  app.add_option("--out", out_override, "output directory (overrides the scenario)");
  app.add_option("--seed", seed, "simulation seed override");
  app.add_option("--duration", duration, "duration override, seconds");
  app.add_option("--dump-qp", dump_tick, "serialize the QP problems of the given tick and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  wbfc::Scenario scenario;
  try {
    scenario = wbfc::load_scenario(scenario_path);
    if (!controller_override.empty()) scenario.controller = controller_override;
    if (!out_override.empty()) scenario.output_dir = out_override;
    if (seed) scenario.sim.seed = *seed;
    if (duration) scenario.sim.duration = *duration;
    scenario.validate();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    const wbfc::KinematicTree model = wbfc::build_model_from_file(scenario.model_path);
    const std::filesystem::path out_dir(scenario.output_dir);
    std::filesystem::create_directories(out_dir);

    if (dump_tick) {
      wbfc::ControllerKind kind;
      try {
        kind = wbfc::controller_kind_from_string(scenario.controller);
        const auto [qp1, qp2] = wbfc::capture_qp_problems(model, scenario, kind, *dump_tick);
        const std::string stem = "tick" + std::to_string(*dump_tick);
        std::ofstream((out_dir / ("qp1_" + stem + ".json")).string()) << wbfc::qp_to_json(qp1);
        std::ofstream((out_dir / ("qp2_" + stem + ".json")).string()) << wbfc::qp_to_json(qp2);
        std::cout << "wrote qp1_" << stem << ".json and qp2_" << stem << ".json to "
                  << out_dir.string() << "\n";
        return 0;
      } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
      }
    }

    std::vector<wbfc::ControllerKind> kinds;
    if (compare) {
      kinds = {wbfc::ControllerKind::Proposed, wbfc::ControllerKind::Howsm,
               wbfc::ControllerKind::Pidcwcu};
    } else {
      kinds = {wbfc::controller_kind_from_string(scenario.controller)};
    }

    std::vector<RunResult> results;
    nlohmann::json metrics_json;
    for (const auto kind : kinds) {
      const int rc = run_one(model, scenario, kind, out_dir, results, metrics_json);
      if (rc != 0) return rc;
    }
    std::ofstream((out_dir / "metrics.json").string()) << metrics_json.dump(2) << "\n";
    print_table(results);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
}
