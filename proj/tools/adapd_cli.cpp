// Command-line front end for the experiment harness.
//
//   adapd run --config cfg.json [--override key=value ...] [--best-effort]
//   adapd grid --config cfg.json [--override key=value ...]
//   adapd validate-topology --config cfg.json [--override key=value ...]
//   adapd export-figures --run-dir DIR
//
// Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 data error,
// 1 anything else.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adapd/errors.hpp"
#include "adapd/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitData = 4;

adapd::ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides,
                             bool best_effort) {
  nlohmann::json doc = adapd::load_config_file(path);
  for (const auto& o : overrides) adapd::apply_override(doc, o);
  if (best_effort) adapd::apply_override(doc, "algorithm.inner.best_effort=true");
  return adapd::parse_config(doc);
}

int trial_exit_code(const adapd::RunSummary& s) {
  int code = 0;
  for (const auto& t : s.trials) {
    if (t.status == "ok") continue;
    if (t.error_type == "divergence") code = std::max(code, kExitDivergence);
    else if (t.error_type == "data") code = std::max(code, kExitData);
    else if (t.error_type == "config") code = std::max(code, kExitConfig);
    else code = std::max(code, 1);
  }
  return code;
}

void report(const adapd::RunSummary& s) {
  std::cout << "run_dir: " << s.run_dir << "\n"
            << "completed: " << s.json["completed"] << "/" << s.trials.size() << "\n";
  if (const auto m = s.final_mean("stationarity"))
    std::cout << "final stationarity (mean): " << adapd::format_double(*m) << "\n";
  if (const auto m = s.final_mean("target_distance"))
    std::cout << "final target distance (mean): " << adapd::format_double(*m) << "\n";
  for (const auto& t : s.trials)
    if (t.status != "ok")
      std::cerr << "trial " << t.trial << " " << t.status << ": " << t.error << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized primal-dual experiment harness"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  bool best_effort = false;

  auto* run = app.add_subcommand("run", "run all trials of one experiment");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--override", overrides, "dotted key=value assignment")->take_all();
  run->add_flag("--best-effort", best_effort, "accept inexact subproblem solves");

  auto* grid = app.add_subcommand("grid", "grid search, then a full run at the winner");
  grid->add_option("--config", config, "experiment config (JSON)")->required();
  grid->add_option("--override", overrides, "dotted key=value assignment")->take_all();
  grid->add_flag("--best-effort", best_effort, "accept inexact subproblem solves");

  auto* topo = app.add_subcommand("validate-topology", "check the mixing matrix of trial 0");
  topo->add_option("--config", config, "experiment config (JSON)")->required();
  topo->add_option("--override", overrides, "dotted key=value assignment")->take_all();

  std::string run_dir;
  auto* fig = app.add_subcommand("export-figures", "write per-metric CSV bundles for plotting");
  fig->add_option("--run-dir", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const auto cfg = load(config, overrides, best_effort);
      const auto s = adapd::run_experiment(cfg);
      report(s);
      return trial_exit_code(s);
    }
    if (*grid) {
      auto cfg = load(config, overrides, best_effort);
      if (cfg.grid.empty()) {
        nlohmann::json doc = cfg.resolved;
        const std::string key = cfg.solver.algorithm == adapd::Algorithm::Dgd        ? "alpha0"
                                : cfg.solver.algorithm == adapd::Algorithm::ProxGpda ? "beta"
                                                                                      : "eta";
        doc["grid"] = {{key, adapd::default_step_grid()}};
        cfg = adapd::parse_config(doc);
      }
      const auto g = adapd::grid_search(cfg);
      for (std::size_t i = 0; i < g.points.size(); ++i) {
        const auto& p = g.points[i];
        std::cout << (i == g.best ? "* " : "  ") << p.assignment.dump() << "  "
                  << (p.score ? adapd::format_double(*p.score) : "failed: " + p.failure) << "\n";
      }
      report(g.run);
      return trial_exit_code(g.run);
    }
    if (*topo) {
      const auto cfg = load(config, overrides, false);
      const auto j = adapd::validate_topology(cfg);
      std::cout << j.dump(2) << "\n";
      return j["valid"].get<bool>() ? 0 : kExitConfig;
    }
    if (*fig) {
      for (const auto& f : adapd::export_figures(run_dir)) std::cout << f << "\n";
      return 0;
    }
  } catch (const adapd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const adapd::InvalidParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const adapd::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const adapd::GridExhaustedError& e) {
    std::cerr << "grid exhausted: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const adapd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const adapd::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
