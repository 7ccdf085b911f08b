#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adapd/diagnostics.hpp"
#include "adapd/engine.hpp"
#include "adapd/problems.hpp"
#include "adapd/solvers.hpp"
#include "adapd/topology.hpp"
#include "json.hpp"

namespace adapd {

/// Environment variable that, when set, prefixes every relative output_dir.
inline constexpr const char* kOutputRootEnv = "ADAPD_OUTPUT_ROOT";

/// Starting point X^0.
///   zero             all rows 0
///   consensus_normal one N(0, sd^2) vector copied to every row
///   normal           independent N(0, sd^2) entries
///   local_minimizer  row i = a_i (quadratic problems only)
///   constant         every row equal to `value`
struct InitSpec {
  std::string kind = "zero";
  double sd = 1.0;
  std::vector<double> value;
};

/// Parsed experiment. `problem` and `topology` stay as JSON sections because
/// their keys depend on the kind; see build_trial for what each kind reads.
struct ExperimentConfig {
  std::string name = "experiment";
  nlohmann::json problem;
  nlohmann::json topology;
  SolverConfig solver;
  Budget budget;
  InitSpec init;
  bool lyapunov = false;
  bool dual_residual = false;
  bool wall_time = true;
  int trials = 1;
  std::uint64_t seed_base = 0;
  std::string output_dir = "runs/experiment";
  /// Dotted key -> list of values, e.g. {"eta": [0.01, 0.1]}.
  nlohmann::json grid = nlohmann::json::object();
  /// Trials per grid point; 0 means min(trials, 3).
  int grid_trials = 0;
  /// Worker threads for trials; 0 means hardware concurrency.
  int workers = 0;
  /// False keeps everything in memory (grid evaluation, tests).
  bool write_outputs = true;

  /// The fully resolved document this config was parsed from.
  nlohmann::json resolved;
};

/// Every key with its default value.
nlohmann::json default_config();

nlohmann::json load_config_file(const std::string& path);

/// Applies `a.b.c=value`. The value is parsed as JSON when possible and kept
/// as a string otherwise. Intermediate objects are created as needed.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Merges `doc` over the defaults and validates. Unknown top-level keys,
/// missing kinds and out-of-range values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// output_dir, prefixed by $ADAPD_OUTPUT_ROOT when that is set and the
/// directory is relative.
std::string resolve_output_dir(const std::string& dir);

/// Everything one trial needs, built from the trial seed.
struct TrialInstance {
  std::uint64_t seed = 0;
  ObjectivePtr objective;
  Graph graph;
  std::optional<MixingMatrix> mixing;
  Matrix x_start;
  std::shared_ptr<const LocalizationInstance> localization;
  /// Smoothness handed to the solver when the problem has no global hint.
  std::optional<double> lipschitz_estimate;
  nlohmann::json topology_json;
  nlohmann::json instance_json;  // null unless the problem has instance data
};

/// Section seeds: a `seed` key inside problem/topology/init pins that
/// component across trials; otherwise it follows the trial seed.
TrialInstance build_trial(const ExperimentConfig& cfg, int trial);

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> rows;
  std::string status = "ok";  // ok | diverged | error
  std::string error;
  std::string error_type;
  std::optional<long> failed_at;
  bool eta_above_theory = false;
  long inexact_violations = 0;
  int degree = 1;
  double operator_rho = 0.0;
};

/// Runs one trial to its budget. Module errors are captured in the result.
TrialResult run_trial(const ExperimentConfig& cfg, int trial);

/// Mean and 95% normal-approximation half width (1.96 sd / sqrt(n), sample
/// sd) of one metric across trials at every communication count seen in any
/// trial. Each trial contributes its last row with comms <= c.
struct MetricSeries {
  std::vector<double> comms;
  std::vector<double> mean;
  std::vector<double> ci_half;
  std::vector<int> n;
};

/// `series[t]` holds (comms, value) for trial t. NaN values are skipped.
MetricSeries aggregate_metric(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& series);

struct RunSummary {
  std::string run_dir;
  std::vector<TrialResult> trials;
  nlohmann::json json;
  int failures = 0;
  bool any_diverged = false;
  bool any_error = false;

  /// Mean of the final value of `metric` over successful trials.
  std::optional<double> final_mean(const std::string& metric) const;
};

/// All trials (seed = seed_base + t) in a worker pool. With write_outputs the
/// run directory receives resolved_config.json, summary.json and per trial
/// trial_NNN/{trace.csv, trace.jsonl, topology.json, instance.json, status.json}.
RunSummary run_experiment(const ExperimentConfig& cfg);

struct GridPoint {
  nlohmann::json assignment;  // dotted key -> value
  std::optional<double> score;  // mean final stationarity; empty if any trial failed
  std::string failure;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;
  ExperimentConfig best_config;
  RunSummary run;
};

/// Cartesian product of cfg.grid evaluated with grid_trials trials each, in
/// memory. The lowest mean final stationarity wins; ties go to the smaller
/// step parameter (eta, alpha0 or beta for the algorithm). The winner is then
/// run with the full trial count. Throws GridExhaustedError if every point failed.
GridResult grid_search(const ExperimentConfig& cfg);

/// Assignment list for a grid section in evaluation order.
std::vector<nlohmann::json> expand_grid(const nlohmann::json& grid);

/// Topology of trial 0 with its validation report.
nlohmann::json validate_topology(const ExperimentConfig& cfg);

/// Reads run_dir/trial_*/trace.csv and writes run_dir/figures/summary_<metric>.csv
/// (comms, mean, ci_half, n) for every numeric metric present. Returns the
/// files written.
std::vector<std::string> export_figures(const std::string& run_dir);

/// Default half-decade grid 10^{-3}, 10^{-2.5}, ..., 10^{2}.
std::vector<double> default_step_grid();

}  // namespace adapd
