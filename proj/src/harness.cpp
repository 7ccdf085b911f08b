#include "adapd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "adapd/errors.hpp"
#include "adapd/rng.hpp"

namespace adapd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- defaults

json problem_defaults(const std::string& kind) {
  if (kind == "quadratic")
    return {{"kind", kind}, {"p", 3}, {"target_sd", 1.0}, {"targets", nullptr},
            {"weights", nullptr}, {"seed", nullptr}};
  if (kind == "logistic")
    return {{"kind", kind}, {"m", 2000}, {"p", 20}, {"alpha", 0.01},
            {"data_path", nullptr}, {"dim", nullptr}, {"seed", nullptr}};
  if (kind == "localization")
    return {{"kind", kind},          {"n_targets", 3},          {"sigma2", 0.01},
            {"smoothness_box", 1.0}, {"smoothness_samples", 200}, {"instance_path", nullptr},
            {"seed", nullptr}};
  throw ConfigError("unknown problem kind '" + kind +
                    "' (expected quadratic, logistic or localization)");
}

json topology_defaults(const std::string& kind) {
  if (kind == "ring") return {{"kind", kind}, {"n", 10}, {"self_weight", 0.5}};
  if (kind == "erdos_renyi")
    return {{"kind", kind}, {"n", 10}, {"p", 0.3}, {"weights", "laplacian"},
            {"tau", nullptr}, {"seed", nullptr}};
  if (kind == "geometric")
    return {{"kind", kind}, {"n", 20}, {"radius", 0.45}, {"weights", "laplacian"},
            {"tau", nullptr}, {"seed", nullptr}};
  if (kind == "complete" || kind == "path" || kind == "star")
    return {{"kind", kind}, {"n", 10}, {"weights", "laplacian"}, {"tau", nullptr}};
  if (kind == "averaging") return {{"kind", kind}, {"n", 10}};
  throw ConfigError("unknown topology kind '" + kind + "'");
}

/// Overlays `user` on `base`; keys absent from `base` are rejected.
void merge_strict(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + " must be a table");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && !slot.empty() && it.value().is_object())
      merge_strict(slot, it.value(), path);
    else
      slot = it.value();
  }
}

json section_with_defaults(const json& user, const std::string& name,
                           json (*defaults)(const std::string&)) {
  if (!user.is_object() || !user.contains("kind") || !user["kind"].is_string())
    throw ConfigError(name + ".kind must be a string");
  json out = defaults(user["kind"].get<std::string>());
  merge_strict(out, user, name);
  return out;
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

double positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(what + " must be positive");
  return v;
}

std::uint64_t section_seed(const json& section, std::uint64_t trial_seed) {
  if (section.contains("seed") && !section["seed"].is_null())
    return section["seed"].get<std::uint64_t>();
  return trial_seed;
}

std::string short_key(const std::string& key) {
  static const std::map<std::string, std::string> aliases = {
      {"eta", "algorithm.eta"},
      {"alpha0", "algorithm.alpha0"},
      {"q", "algorithm.q"},
      {"beta", "algorithm.beta"},
      {"degree", "algorithm.degree"},
      {"dual_scale", "algorithm.dual_scale"},
      {"eps_hat", "algorithm.inner.eps_hat"},
      {"decay", "algorithm.inner.decay"}};
  const auto it = aliases.find(key);
  return it == aliases.end() ? key : it->second;
}

void set_dotted(json& doc, const std::string& key, const json& value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("malformed key '" + key + "'");
    if (!node->is_object()) throw ConfigError("'" + key + "' descends into a non-table value");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

// ---------------------------------------------------------------- builders

MixingMatrix weights_for(const Graph& g, const json& topo) {
  const std::string w = get_as<std::string>(topo, "weights", "topology");
  std::optional<double> tau;
  if (topo.contains("tau") && !topo["tau"].is_null()) tau = topo["tau"].get<double>();
  if (w == "laplacian") return laplacian_weights(g, tau);
  if (w == "metropolis") return metropolis_weights(g);
  throw ConfigError("topology.weights must be laplacian or metropolis, got '" + w + "'");
}

Graph graph_from_positions(const Matrix& pos, double radius) {
  std::vector<Graph::Edge> edges;
  for (int i = 0; i < pos.rows(); ++i)
    for (int j = i + 1; j < pos.rows(); ++j)
      if ((pos.row(i) - pos.row(j)).norm() <= radius) edges.emplace_back(i, j);
  return Graph(static_cast<int>(pos.rows()), edges);
}

struct BuiltTopology {
  Graph graph;
  MixingMatrix w;
  std::optional<Matrix> positions;
};

BuiltTopology build_topology(const json& topo, std::uint64_t trial_seed,
                             const std::optional<LocalizationInstance>& preset) {
  const std::string kind = topo["kind"];
  const int n = get_as<int>(topo, "n", "topology");
  if (kind == "ring") {
    const Graph g = Graph::ring(n);
    return {g, build_ring(n, get_as<double>(topo, "self_weight", "topology")), std::nullopt};
  }
  if (kind == "averaging") {
    return {Graph::complete(n), averaging_matrix(n), std::nullopt};
  }
  if (kind == "erdos_renyi") {
    const Graph g = build_erdos_renyi(n, get_as<double>(topo, "p", "topology"),
                                      section_seed(topo, trial_seed));
    return {g, weights_for(g, topo), std::nullopt};
  }
  if (kind == "geometric") {
    const double radius = get_as<double>(topo, "radius", "topology");
    if (preset) {
      if (preset->n_agents() != n)
        throw ConfigError("instance has " + std::to_string(preset->n_agents()) +
                          " agents but topology.n = " + std::to_string(n));
      Graph g = graph_from_positions(preset->positions, radius);
      if (!g.is_connected())
        throw InvalidTopologyError("instance positions give a disconnected graph");
      MixingMatrix w = weights_for(g, topo);
      return {std::move(g), std::move(w), preset->positions};
    }
    auto geo = build_geometric(n, radius, section_seed(topo, trial_seed));
    MixingMatrix w = weights_for(geo.graph, topo);
    return {std::move(geo.graph), std::move(w), std::move(geo.positions)};
  }
  Graph g = kind == "complete" ? Graph::complete(n) : kind == "path" ? Graph::path(n)
                                                                     : Graph::star(n);
  MixingMatrix w = weights_for(g, topo);
  return {std::move(g), std::move(w), std::nullopt};
}

Matrix read_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ConfigError(what + " must be a non-empty array of rows");
  const std::size_t cols = j[0].size();
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(what + " rows differ in length");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Matrix initial_point(const InitSpec& init, const json& init_section, const Objective& f,
                     std::uint64_t trial_seed) {
  const int n = f.n_agents();
  const int p = f.dim();
  CounterRng rng(section_seed(init_section, trial_seed), streams::kInit);
  if (init.kind == "zero") return Matrix::Zero(n, p);
  if (init.kind == "consensus_normal") {
    Eigen::RowVectorXd row(p);
    for (int j = 0; j < p; ++j) row[j] = rng.normal(0.0, init.sd);
    return row.replicate(n, 1);
  }
  if (init.kind == "normal") {
    Matrix x(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) x(i, j) = rng.normal(0.0, init.sd);
    return x;
  }
  if (init.kind == "local_minimizer") {
    const auto* q = dynamic_cast<const QuadraticConsensus*>(&f);
    if (!q) throw ConfigError("init.kind = local_minimizer needs a quadratic problem");
    return q->targets();
  }
  if (init.kind == "constant") {
    if (static_cast<int>(init.value.size()) != p)
      throw ConfigError("init.value has " + std::to_string(init.value.size()) +
                        " entries, problem dimension is " + std::to_string(p));
    const Eigen::RowVectorXd row =
        Eigen::Map<const Eigen::RowVectorXd>(init.value.data(), p);
    return row.replicate(n, 1);
  }
  throw ConfigError("unknown init.kind '" + init.kind + "'");
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const InvalidParameterError*>(&e)) return "config";
  if (dynamic_cast<const ParseError*>(&e)) return "data";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const InvalidPartitionError*>(&e)) return "data";
  if (dynamic_cast<const InexactnessError*>(&e)) return "inexactness";
  if (dynamic_cast<const TopologyGenerationError*>(&e)) return "topology";
  if (dynamic_cast<const InvalidTopologyError*>(&e)) return "topology";
  if (dynamic_cast<const DegenerateSpectrumError*>(&e)) return "topology";
  return "other";
}

std::string trial_dir_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%03d", t);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

json status_json(const TrialResult& r) {
  json j = {{"trial", r.trial},
            {"seed", r.seed},
            {"status", r.status},
            {"error", r.error},
            {"error_type", r.error_type},
            {"failed_at", r.failed_at ? json(*r.failed_at) : json(nullptr)},
            {"eta_above_theory", r.eta_above_theory},
            {"inexact_violations", r.inexact_violations},
            {"degree", r.degree},
            {"operator_rho", r.operator_rho},
            {"rows", r.rows.size()}};
  return j;
}

const std::vector<std::string>& summary_metrics() {
  static const std::vector<std::string> m = {
      "grads",       "stationarity",   "consensus_err", "mean_grad_norm2", "objective_F",
      "objective_fbar", "lyapunov",    "dual_residual", "target_distance"};
  return m;
}

double metric_value(const TraceRecord& r, const std::string& m) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (m == "grads") return r.grads;
  if (m == "stationarity") return r.stationarity;
  if (m == "consensus_err") return r.consensus_err;
  if (m == "mean_grad_norm2") return r.mean_grad_norm2;
  if (m == "objective_F") return r.objective_F;
  if (m == "objective_fbar") return r.objective_fbar;
  if (m == "lyapunov") return r.lyapunov.value_or(nan);
  if (m == "dual_residual") return r.dual_residual.value_or(nan);
  if (m == "target_distance") return r.target_distance.value_or(nan);
  return nan;
}

json series_json(const MetricSeries& s) {
  return {{"comms", s.comms}, {"mean", s.mean}, {"ci_half", s.ci_half}, {"n", s.n}};
}

std::pair<double, double> mean_ci(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(v.size()))};
}

json build_summary(const ExperimentConfig& cfg, const std::vector<TrialResult>& trials) {
  json failures = json::array();
  std::vector<const TrialResult*> ok;
  for (const auto& t : trials) {
    if (t.status == "ok")
      ok.push_back(&t);
    else
      failures.push_back({{"trial", t.trial},
                          {"seed", t.seed},
                          {"status", t.status},
                          {"error_type", t.error_type},
                          {"error", t.error},
                          {"failed_at", t.failed_at ? json(*t.failed_at) : json(nullptr)}});
  }
  bool above = false;
  long violations = 0;
  for (const auto& t : trials) {
    above = above || t.eta_above_theory;
    violations += t.inexact_violations;
  }
  json metrics = json::object();
  json finals = json::object();
  for (const auto& m : summary_metrics()) {
    std::vector<std::pair<std::vector<double>, std::vector<double>>> series;
    std::vector<double> last;
    bool any = false;
    for (const auto* t : ok) {
      std::vector<double> c, v;
      for (const auto& r : t->rows) {
        c.push_back(static_cast<double>(r.comms));
        v.push_back(metric_value(r, m));
        any = any || !std::isnan(v.back());
      }
      if (!t->rows.empty() && !std::isnan(v.back())) last.push_back(v.back());
      series.emplace_back(std::move(c), std::move(v));
    }
    if (!any) continue;
    metrics[m] = series_json(aggregate_metric(series));
    if (!last.empty()) {
      const auto [mean, ci] = mean_ci(last);
      finals[m] = {{"mean", mean}, {"ci_half", ci}, {"n", last.size()}};
    }
  }
  json j = {{"name", cfg.name},
            {"algorithm", to_string(cfg.solver.algorithm)},
            {"trials", cfg.trials},
            {"completed", ok.size()},
            {"failures", failures},
            {"eta_above_theory", above},
            {"inexact_violations", violations},
            {"degree", trials.empty() ? 1 : trials.front().degree},
            {"operator_rho", trials.empty() ? 0.0 : trials.front().operator_rho},
            {"final", finals},
            {"metrics", metrics}};
  return j;
}

std::string step_key(Algorithm a) {
  switch (a) {
    case Algorithm::Dgd: return "alpha0";
    case Algorithm::ProxGpda: return "beta";
    default: return "eta";
  }
}

double step_value(const SolverConfig& s) {
  switch (s.algorithm) {
    case Algorithm::Dgd: return s.alpha0;
    case Algorithm::ProxGpda: return s.beta;
    default: return s.eta;
  }
}

}  // namespace

// -------------------------------------------------------------- config I/O

json default_config() {
  return {{"name", "experiment"},
          {"problem", problem_defaults("quadratic")},
          {"topology", topology_defaults("ring")},
          {"algorithm",
           {{"kind", "adapd"},
            {"eta", 0.1},
            {"inner",
             {{"method", "fista"},
              {"eps_hat", 1e-4},
              {"decay", 1.5},
              {"max_iters", 500},
              {"best_effort", false},
              {"batch_size", 0}}},
            {"mix", "plain"},
            {"degree", 0},
            {"dual_scale", 1.0},
            {"alpha0", 0.1},
            {"q", 0.5},
            {"beta", 1.0},
            {"lipschitz", nullptr},
            {"seed", nullptr}}},
          {"budget", {{"kind", "communications"}, {"limit", 500}}},
          {"init", {{"kind", "zero"}, {"sd", 1.0}, {"value", json::array()}, {"seed", nullptr}}},
          {"diagnostics", {{"lyapunov", false}, {"dual_residual", false}, {"wall_time", true}}},
          {"trials", 1},
          {"seed_base", 0},
          {"output_dir", "runs/experiment"},
          {"grid", json::object()},
          {"grid_trials", 0},
          {"workers", 0}};
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  set_dotted(doc, key, value);
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a table");
  json full = default_config();
  json user = doc;
  // Kind-dependent sections are resolved against their own defaults.
  const json problem = user.contains("problem") ? user["problem"] : full["problem"];
  const json topology = user.contains("topology") ? user["topology"] : full["topology"];
  user.erase("problem");
  user.erase("topology");
  if (user.contains("grid")) {
    full["grid"] = user["grid"];
    user.erase("grid");
  }
  merge_strict(full, user, "");
  full["problem"] = section_with_defaults(problem, "problem", problem_defaults);
  full["topology"] = section_with_defaults(topology, "topology", topology_defaults);

  ExperimentConfig c;
  c.resolved = full;
  c.name = get_as<std::string>(full, "name", "config");
  c.problem = full["problem"];
  c.topology = full["topology"];

  const json& a = full["algorithm"];
  SolverConfig& s = c.solver;
  try {
    s.algorithm = algorithm_from_string(get_as<std::string>(a, "kind", "algorithm"));
    s.inner.method = inner_method_from_string(get_as<std::string>(a["inner"], "method", "algorithm.inner"));
    s.mix = mix_mode_from_string(get_as<std::string>(a, "mix", "algorithm"));
    c.budget.kind = budget_kind_from_string(get_as<std::string>(full["budget"], "kind", "budget"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  s.eta = positive(get_as<double>(a, "eta", "algorithm"), "algorithm.eta");
  s.inner.eps_hat = positive(get_as<double>(a["inner"], "eps_hat", "algorithm.inner"),
                             "algorithm.inner.eps_hat");
  s.inner.decay = get_as<double>(a["inner"], "decay", "algorithm.inner");
  if (!(s.inner.decay >= 0.0)) throw ConfigError("algorithm.inner.decay must be non-negative");
  s.inner.max_iters = get_as<int>(a["inner"], "max_iters", "algorithm.inner");
  if (s.inner.max_iters < 1) throw ConfigError("algorithm.inner.max_iters must be at least 1");
  s.inner.best_effort = get_as<bool>(a["inner"], "best_effort", "algorithm.inner");
  s.inner.batch_size = get_as<int>(a["inner"], "batch_size", "algorithm.inner");
  if (s.inner.batch_size < 0) throw ConfigError("algorithm.inner.batch_size must be non-negative");
  s.degree = get_as<int>(a, "degree", "algorithm");
  if (s.degree < 0) throw ConfigError("algorithm.degree must be non-negative");
  s.dual_scale = positive(get_as<double>(a, "dual_scale", "algorithm"), "algorithm.dual_scale");
  s.alpha0 = positive(get_as<double>(a, "alpha0", "algorithm"), "algorithm.alpha0");
  s.q = get_as<double>(a, "q", "algorithm");
  if (!(s.q >= 0.0)) throw ConfigError("algorithm.q must be non-negative");
  s.beta = positive(get_as<double>(a, "beta", "algorithm"), "algorithm.beta");
  if (!a["seed"].is_null()) s.seed = get_as<std::uint64_t>(a, "seed", "algorithm");
  if (!a["lipschitz"].is_null())
    s.lipschitz = positive(get_as<double>(a, "lipschitz", "algorithm"), "algorithm.lipschitz");
  try {
    s.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  c.budget.limit = get_as<long>(full["budget"], "limit", "budget");
  if (c.budget.limit < 1) throw ConfigError("budget.limit must be at least 1");

  const json& init = full["init"];
  c.init.kind = get_as<std::string>(init, "kind", "init");
  c.init.sd = get_as<double>(init, "sd", "init");
  c.init.value = get_as<std::vector<double>>(init, "value", "init");
  static const std::set<std::string> init_kinds = {"zero", "consensus_normal", "normal",
                                                   "local_minimizer", "constant"};
  if (!init_kinds.count(c.init.kind)) throw ConfigError("unknown init.kind '" + c.init.kind + "'");

  c.lyapunov = get_as<bool>(full["diagnostics"], "lyapunov", "diagnostics");
  c.dual_residual = get_as<bool>(full["diagnostics"], "dual_residual", "diagnostics");
  c.wall_time = get_as<bool>(full["diagnostics"], "wall_time", "diagnostics");

  c.trials = get_as<int>(full, "trials", "config");
  if (c.trials < 1) throw ConfigError("trials must be at least 1");
  c.seed_base = get_as<std::uint64_t>(full, "seed_base", "config");
  c.output_dir = get_as<std::string>(full, "output_dir", "config");
  c.grid = full["grid"];
  if (!c.grid.is_object()) throw ConfigError("grid must be a table of value lists");
  for (auto it = c.grid.begin(); it != c.grid.end(); ++it)
    if (!it.value().is_array() || it.value().empty())
      throw ConfigError("grid." + it.key() + " must be a non-empty list");
  c.grid_trials = get_as<int>(full, "grid_trials", "config");
  if (c.grid_trials < 0) throw ConfigError("grid_trials must be non-negative");
  c.workers = get_as<int>(full, "workers", "config");
  if (c.workers < 0) throw ConfigError("workers must be non-negative");

  const std::string pk = c.problem["kind"];
  const std::string tk = c.topology["kind"];
  if (pk == "localization" && tk != "geometric")
    throw ConfigError("localization needs topology.kind = geometric (agent positions)");
  return c;
}

std::string resolve_output_dir(const std::string& dir) {
  const char* root = std::getenv(kOutputRootEnv);
  if (!root || !*root || fs::path(dir).is_absolute()) return dir;
  return (fs::path(root) / dir).string();
}

// -------------------------------------------------------------- trials

TrialInstance build_trial(const ExperimentConfig& cfg, int trial) {
  TrialInstance t;
  t.seed = cfg.seed_base + static_cast<std::uint64_t>(trial);
  const json& prob = cfg.problem;
  const std::string kind = prob["kind"];
  const std::uint64_t pseed = section_seed(prob, t.seed);

  std::optional<LocalizationInstance> preset;
  if (kind == "localization" && !prob["instance_path"].is_null()) {
    const std::string path = prob["instance_path"];
    std::ifstream in(path);
    if (!in) throw DataError("cannot open localization instance '" + path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError("instance '" + path + "' is not valid JSON: " + std::string(e.what()));
    }
    preset = localization_from_json(j);
  }

  BuiltTopology topo = build_topology(cfg.topology, t.seed, preset);
  const int n = topo.graph.n_agents();
  t.graph = topo.graph;
  t.topology_json = to_json(topo.graph, topo.w);

  if (kind == "quadratic") {
    Matrix targets;
    if (!prob["targets"].is_null()) {
      targets = read_matrix(prob["targets"], "problem.targets");
      if (targets.rows() != n)
        throw ConfigError("problem.targets has " + std::to_string(targets.rows()) +
                          " rows for " + std::to_string(n) + " agents");
    } else {
      const int p = get_as<int>(prob, "p", "problem");
      if (p < 1) throw ConfigError("problem.p must be at least 1");
      const double sd = get_as<double>(prob, "target_sd", "problem");
      CounterRng rng(pseed, streams::kData);
      targets.resize(n, p);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) targets(i, j) = rng.normal(0.0, sd);
    }
    std::optional<Vector> weights;
    if (!prob["weights"].is_null()) {
      const auto v = get_as<std::vector<double>>(prob, "weights", "problem");
      weights = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    auto q = quadratic_consensus(targets, weights);
    t.instance_json = {{"targets", json::array()}};
    for (int i = 0; i < targets.rows(); ++i)
      t.instance_json["targets"].push_back(
          std::vector<double>(targets.row(i).data(), targets.row(i).data() + targets.cols()));
    t.objective = q;
  } else if (kind == "logistic") {
    BinaryDataset data;
    if (!prob["data_path"].is_null()) {
      std::optional<int> dim;
      if (!prob["dim"].is_null()) dim = prob["dim"].get<int>();
      data = parse_libsvm(prob["data_path"].get<std::string>(), dim);
    } else {
      const int m = get_as<int>(prob, "m", "problem");
      const int p = get_as<int>(prob, "p", "problem");
      if (m < 1 || p < 1) throw ConfigError("problem.m and problem.p must be positive");
      data = synthetic_logistic_data(m, p, pseed);
    }
    data = partition_uniform(data, n, pseed);
    const double alpha = get_as<double>(prob, "alpha", "problem");
    if (!(alpha >= 0.0)) throw ConfigError("problem.alpha must be non-negative");
    t.objective = logistic_nonconvex(data, alpha);
    json parts = json::array();
    for (const auto& [b, e] : data.partition) parts.push_back({b, e});
    t.instance_json = {{"samples", data.n_samples()}, {"dim", data.dim()}, {"partition", parts}};
  } else {
    LocalizationInstance inst =
        preset ? *preset
               : localization_instance_on(*topo.positions, get_as<int>(prob, "n_targets", "problem"),
                                          get_as<double>(prob, "sigma2", "problem"), pseed);
    auto loc = std::make_shared<const LocalizationInstance>(inst);
    t.localization = loc;
    t.instance_json = to_json(inst);
    t.objective = localization_objective(inst);
  }

  t.x_start = initial_point(cfg.init, cfg.resolved["init"], *t.objective, t.seed);
  if (!cfg.solver.lipschitz && !t.objective->max_smoothness()) {
    const double box = get_as<double>(prob, "smoothness_box", "problem");
    const int samples = get_as<int>(prob, "smoothness_samples", "problem");
    t.lipschitz_estimate = estimate_smoothness(*t.objective, box, samples, pseed);
  }
  t.mixing = std::move(topo.w);
  return t;
}

TrialResult run_trial(const ExperimentConfig& cfg, int trial) {
  TrialResult r;
  r.trial = trial;
  r.seed = cfg.seed_base + static_cast<std::uint64_t>(trial);
  std::optional<Engine> engine;
  try {
    TrialInstance inst = build_trial(cfg, trial);
    SolverConfig s = cfg.solver;
    if (!s.lipschitz && inst.lipschitz_estimate) s.lipschitz = inst.lipschitz_estimate;
    if (cfg.resolved["algorithm"]["seed"].is_null()) s.seed = r.seed;
    DiagnosticsOptions d;
    d.lyapunov = cfg.lyapunov;
    d.dual_residual = cfg.dual_residual;
    d.wall_time = cfg.wall_time;
    d.lyapunov_lipschitz = s.lipschitz;
    d.targets = inst.localization;
    engine.emplace(inst.objective, *inst.mixing, inst.x_start, s, d);
    r.eta_above_theory = engine->eta_above_theory();
    r.degree = engine->config().degree;
    r.operator_rho = engine->operator_rho();
    r.rows.push_back(engine->record());
    while (engine->can_step(cfg.budget)) r.rows.push_back(engine->step());
  } catch (const std::exception& e) {
    r.status = dynamic_cast<const DivergenceError*>(&e) ? "diverged" : "error";
    r.error = e.what();
    r.error_type = error_type(e);
    if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) r.failed_at = d->iteration();
  }
  if (engine) r.inexact_violations = engine->state().inexact_violations;
  return r;
}

MetricSeries aggregate_metric(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& series) {
  std::set<double> grid;
  for (const auto& [c, v] : series) grid.insert(c.begin(), c.end());
  MetricSeries out;
  std::vector<std::size_t> pos(series.size(), 0);
  std::vector<double> vals;
  for (double c : grid) {
    vals.clear();
    for (std::size_t t = 0; t < series.size(); ++t) {
      const auto& [cs, vs] = series[t];
      while (pos[t] < cs.size() && cs[pos[t]] <= c) ++pos[t];
      if (pos[t] == 0) continue;
      const double v = vs[pos[t] - 1];
      if (!std::isnan(v)) vals.push_back(v);
    }
    if (vals.empty()) continue;
    const auto [mean, ci] = mean_ci(vals);
    out.comms.push_back(c);
    out.mean.push_back(mean);
    out.ci_half.push_back(ci);
    out.n.push_back(static_cast<int>(vals.size()));
  }
  return out;
}

std::optional<double> RunSummary::final_mean(const std::string& metric) const {
  if (!json.contains("final") || !json["final"].contains(metric)) return std::nullopt;
  return json["final"][metric]["mean"].get<double>();
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  RunSummary out;
  fs::path run_dir;
  if (cfg.write_outputs) {
    run_dir = resolve_output_dir(cfg.output_dir);
    out.run_dir = run_dir.string();
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw DataError("cannot create run directory '" + run_dir.string() + "'");
    write_text(run_dir / "resolved_config.json", cfg.resolved.dump(2) + "\n");
  }

  const bool with_target = cfg.problem["kind"] == "localization";
  out.trials.resize(cfg.trials);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < cfg.trials; t = next++) {
      TrialResult r = run_trial(cfg, t);
      if (cfg.write_outputs) {
        const fs::path dir = run_dir / trial_dir_name(t);
        fs::create_directories(dir);
        std::ostringstream csv, jsonl;
        write_trace_csv(csv, r.rows, with_target);
        write_trace_jsonl(jsonl, r.rows, with_target);
        write_text(dir / "trace.csv", csv.str());
        write_text(dir / "trace.jsonl", jsonl.str());
        write_text(dir / "status.json", status_json(r).dump(2) + "\n");
        try {
          const TrialInstance inst = build_trial(cfg, t);
          write_text(dir / "topology.json", inst.topology_json.dump() + "\n");
          if (!inst.instance_json.is_null())
            write_text(dir / "instance.json", inst.instance_json.dump() + "\n");
        } catch (const Error&) {
          // The failure is already in status.json.
        }
      }
      out.trials[t] = std::move(r);
    }
  };
  int workers = cfg.workers > 0 ? cfg.workers
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, cfg.trials);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& r : out.trials) {
    if (r.status != "ok") ++out.failures;
    if (r.status == "diverged") out.any_diverged = true;
    if (r.status == "error") out.any_error = true;
  }
  out.json = build_summary(cfg, out.trials);
  if (cfg.write_outputs) write_text(run_dir / "summary.json", out.json.dump(2) + "\n");
  return out;
}

// -------------------------------------------------------------- grid search

std::vector<json> expand_grid(const json& grid) {
  std::vector<json> points = {json::object()};
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    const std::string key = short_key(it.key());
    std::vector<json> next;
    for (const auto& p : points)
      for (const auto& v : it.value()) {
        json q = p;
        q[key] = v;
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

GridResult grid_search(const ExperimentConfig& cfg) {
  if (cfg.grid.empty()) throw ConfigError("grid is empty");
  GridResult res;
  std::vector<ExperimentConfig> parsed;
  for (const json& assignment : expand_grid(cfg.grid)) {
    json doc = cfg.resolved;
    doc["grid"] = json::object();
    for (auto it = assignment.begin(); it != assignment.end(); ++it)
      set_dotted(doc, it.key(), it.value());
    ExperimentConfig point = parse_config(doc);
    point.trials = cfg.grid_trials > 0 ? cfg.grid_trials : std::min(cfg.trials, 3);
    point.write_outputs = false;
    point.workers = cfg.workers;

    GridPoint gp;
    gp.assignment = assignment;
    const RunSummary s = run_experiment(point);
    if (s.failures > 0) {
      for (const auto& t : s.trials)
        if (t.status != "ok") {
          gp.failure = t.error;
          break;
        }
    } else if (const auto m = s.final_mean("stationarity"); m && std::isfinite(*m)) {
      gp.score = *m;
    } else {
      gp.failure = "non-finite final stationarity";
    }
    res.points.push_back(std::move(gp));
    parsed.push_back(std::move(point));
  }

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    if (!res.points[i].score) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double a = *res.points[i].score, b = *res.points[*best].score;
    if (a < b || (a == b && step_value(parsed[i].solver) < step_value(parsed[*best].solver)))
      best = i;
  }
  if (!best)
    throw GridExhaustedError("all " + std::to_string(res.points.size()) +
                             " grid points failed or diverged");
  res.best = *best;

  json doc = cfg.resolved;
  doc["grid"] = json::object();
  for (auto it = res.points[*best].assignment.begin(); it != res.points[*best].assignment.end();
       ++it)
    set_dotted(doc, it.key(), it.value());
  res.best_config = parse_config(doc);
  res.best_config.write_outputs = cfg.write_outputs;
  res.run = run_experiment(res.best_config);

  if (cfg.write_outputs) {
    json pts = json::array();
    for (const auto& p : res.points)
      pts.push_back({{"assignment", p.assignment},
                     {"score", p.score ? json(*p.score) : json(nullptr)},
                     {"failure", p.failure}});
    json g = {{"selection", "mean final stationarity, ties to smaller " +
                                step_key(cfg.solver.algorithm)},
              {"points", pts},
              {"best", res.best},
              {"winner", res.points[*best].assignment}};
    write_text(fs::path(res.run.run_dir) / "grid.json", g.dump(2) + "\n");
  }
  return res;
}

// -------------------------------------------------------------- topology check

json validate_topology(const ExperimentConfig& cfg) {
  std::optional<LocalizationInstance> preset;
  if (cfg.problem["kind"] == "localization" && !cfg.problem["instance_path"].is_null()) {
    std::ifstream in(cfg.problem["instance_path"].get<std::string>());
    if (!in) throw DataError("cannot open localization instance");
    preset = localization_from_json(json::parse(in));
  }
  const BuiltTopology t = build_topology(cfg.topology, cfg.seed_base, preset);
  const ValidationReport rep = validate_mixing(t.w, t.graph);
  json j = {{"topology", to_json(t.graph, t.w)},
            {"validation", rep.to_json()},
            {"valid", rep.all_pass()},
            {"rho", t.w.rho()},
            {"default_mc_degree", rep.all_pass() && t.w.rho() < 1.0
                                      ? json(default_mc_degree(t.w.rho()))
                                      : json(nullptr)}};
  return j;
}

// -------------------------------------------------------------- figures

std::vector<std::string> export_figures(const std::string& run_dir) {
  const fs::path root(run_dir);
  if (!fs::is_directory(root)) throw DataError("run directory '" + run_dir + "' does not exist");
  std::vector<fs::path> traces;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("trial_", 0) != 0) continue;
    const fs::path csv = entry.path() / "trace.csv";
    if (!fs::exists(csv)) continue;
    const fs::path status = entry.path() / "status.json";
    if (fs::exists(status)) {
      std::ifstream in(status);
      try {
        if (json::parse(in).value("status", "ok") != "ok") continue;
      } catch (const json::parse_error&) {
        throw DataError("malformed " + status.string());
      }
    }
    traces.push_back(csv);
  }
  if (traces.empty()) throw DataError("no successful trial traces under '" + run_dir + "'");
  std::sort(traces.begin(), traces.end());

  std::vector<TraceTable> tables;
  for (const auto& p : traces) {
    std::ifstream in(p);
    tables.push_back(read_trace_csv(in));
    if (tables.back().header != tables.front().header)
      throw DataError("trace headers differ between trials");
  }
  const int comms_col = tables.front().column("comms");
  if (comms_col < 0) throw DataError("trace has no comms column");

  const fs::path out_dir = root / "figures";
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (std::size_t c = 0; c < tables.front().header.size(); ++c) {
    const std::string& name = tables.front().header[c];
    if (name == "k" || name == "comms" || name == "wall_time_s") continue;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> series;
    for (const auto& t : tables) {
      std::vector<double> cs, vs;
      for (const auto& row : t.rows) {
        cs.push_back(row[comms_col]);
        vs.push_back(row[c]);
      }
      series.emplace_back(std::move(cs), std::move(vs));
    }
    const MetricSeries s = aggregate_metric(series);
    if (s.comms.empty()) continue;
    std::ostringstream os;
    os << "comms,mean,ci_half,n\n";
    for (std::size_t i = 0; i < s.comms.size(); ++i)
      os << format_double(s.comms[i]) << ',' << format_double(s.mean[i]) << ','
         << format_double(s.ci_half[i]) << ',' << s.n[i] << '\n';
    const fs::path file = out_dir / ("summary_" + name + ".csv");
    write_text(file, os.str());
    written.push_back(file.string());
  }
  return written;
}

std::vector<double> default_step_grid() {
  std::vector<double> g;
  for (int e = -6; e <= 4; ++e) g.push_back(std::pow(10.0, e / 2.0));
  return g;
}

}  // namespace adapd
