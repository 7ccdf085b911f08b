// Acceptance runner: one line per criterion, "PASS name (t s): detail" or
// "FAIL name (t s): detail". Exit status is 0 only if every selected
// criterion passed.
//
//   adapd_acceptance            run everything
//   adapd_acceptance NAME...    run the named criteria
//   adapd_acceptance --list

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adapd/communicator.hpp"
#include "adapd/engine.hpp"
#include "adapd/errors.hpp"
#include "adapd/harness.hpp"
#include "adapd/rng.hpp"
#include "adapd/topology.hpp"

using namespace adapd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 means no limit
  std::function<Verdict()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  CounterRng rng(seed, "acceptance");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix row_mean(const Matrix& a) { return a.colwise().mean().replicate(a.rows(), 1); }

DiagnosticsOptions no_clock() {
  DiagnosticsOptions d;
  d.wall_time = false;
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig in_memory(const json& doc) {
  ExperimentConfig c = parse_config(doc);
  c.write_outputs = false;
  c.workers = 1;
  return c;
}

json step_grid() {
  json g = json::array();
  for (double v : default_step_grid()) g.push_back(v);
  return g;
}

std::string step_key(const std::string& alg) {
  if (alg == "dgd") return "alpha0";
  if (alg == "prox_gpda") return "beta";
  return "eta";
}

// ------------------------------------------------------------------ mixing

Verdict mixing_suite() {
  CounterRng rng(2024, "mixing-suite");
  int checked = 0, failed = 0;
  double worst_power = 0.0;
  std::string first_failure;
  auto check = [&](const std::string& what, const MixingMatrix& w, const Graph& g) {
    ++checked;
    const ValidationReport r = validate_mixing(w, g);
    bool ok = r.all_pass();
    for (int p = 1; p <= 8; ++p) {
      const double err = std::abs(power_matrix(w, p).rho() - std::pow(w.rho(), p));
      worst_power = std::max(worst_power, err);
      ok = ok && err <= 1e-8;
    }
    if (!ok) {
      ++failed;
      if (first_failure.empty()) first_failure = what + " " + r.to_json().dump();
    }
  };
  for (int t = 0; t < 20; ++t) {
    const int n = 5 + static_cast<int>(rng.uniform_index(56));
    const std::uint64_t seed = 1000 + t;
    const double p = std::max(0.3, 2.0 * std::log(n) / n);
    const Graph er = build_erdos_renyi(n, p, seed);
    const double radius = 2.0 * std::sqrt(std::log(n) / n) + 0.2;
    const Graph geo = build_geometric(n, radius, seed).graph;
    const std::string tag = "N=" + std::to_string(n) + " seed=" + std::to_string(seed);
    check("laplacian/er " + tag, laplacian_weights(er), er);
    check("metropolis/er " + tag, metropolis_weights(er), er);
    check("laplacian/geometric " + tag, laplacian_weights(geo), geo);
    check("metropolis/geometric " + tag, metropolis_weights(geo), geo);
    check("ring " + tag, build_ring(n, rng.uniform(0.2, 0.8)), Graph::ring(n));
    check("averaging " + tag, averaging_matrix(n), Graph::complete(n));
  }
  return {failed == 0, fmt("%d matrices, %d failing; max |rho(W^R) - rho^R| = %.2e", checked,
                           failed, worst_power) +
                           (first_failure.empty() ? "" : "; first: " + first_failure)};
}

// --------------------------------------------------------------- Chebyshev

Verdict chebyshev_suite() {
  double worst_mean = 0.0, worst_ratio = 0.0;
  for (int n : {8, 32}) {
    const MixingMatrix w = build_ring(n, 1.0 / 3.0);
    const double rho = w.rho();
    for (int s = 0; s < 10; ++s) {
      const Matrix a = random_matrix(n, 4, 100 * n + s);
      const Matrix abar = row_mean(a);
      for (int r = 1; r <= 6; ++r) {
        const Matrix out = chebyshev_mix(w, a, r);
        worst_mean = std::max(worst_mean, (out.colwise().mean() - a.colwise().mean()).cwiseAbs().maxCoeff());
        const double bound = 2.0 * std::pow(1.0 - std::sqrt(1.0 - rho), r) * (a - abar).norm();
        worst_ratio = std::max(worst_ratio, (out - abar).norm() / bound);
      }
    }
  }
  return {worst_mean <= 1e-12 && worst_ratio <= 1.0,
          fmt("max mean drift %.2e (limit 1e-12), max |A^R - Abar| / bound = %.3f (limit 1)",
              worst_mean, worst_ratio)};
}

// ----------------------------------------------------------- transcription

Verdict transcription() {
  const int n = 5, p = 3;
  const double eta = 0.35;
  const Matrix a = random_matrix(n, p, 7);
  const auto f = quadratic_consensus(a);
  const Graph g = build_erdos_renyi(n, 0.5, 7);
  const MixingMatrix w = laplacian_weights(g);
  const Matrix x_start = random_matrix(n, p, 8);

  SolverConfig cfg;
  cfg.eta = eta;
  cfg.inner.method = InnerMethod::Exact;
  Communicator comm(w);
  AgentState s = adapd_init(*f, w, x_start);

  // Dense reference.
  const Matrix& W = w.w();
  const Matrix I = Matrix::Identity(n, n);
  Matrix X = x_start, X0 = x_start, Y = Matrix::Zero(n, p), Z = Matrix::Zero(n, p);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    adapd_iterate(s, *f, comm, cfg);
    const Matrix Xn = (eta * a + X0 - eta * Y) / (1.0 + eta);
    const Matrix X0n = 0.5 * (W * X0 + Xn + eta * (Y - Z));
    Y += (Xn - X0n) / eta;
    Z += (I - W) * X0n / eta;
    X = Xn;
    X0 = X0n;
    worst = std::max({worst, (s.x - X).cwiseAbs().maxCoeff(), (s.x0 - X0).cwiseAbs().maxCoeff(),
                      (s.y - Y).cwiseAbs().maxCoeff(), (s.z - Z).cwiseAbs().maxCoeff()});
  }
  return {worst <= 1e-12, fmt("max entry difference over 20 iterations %.2e (limit 1e-12)", worst)};
}

// ----------------------------------------------------------- dual relation

Verdict dual_relation() {
  const int n = 20;
  const auto data = partition_uniform(synthetic_logistic_data(2000, 10, 3), n, 3);
  const auto f = logistic_nonconvex(data, 0.1);
  const MixingMatrix w = laplacian_weights(build_erdos_renyi(n, 0.3, 3));
  SolverConfig cfg;
  cfg.eta = 0.5;
  cfg.inner.best_effort = true;
  DiagnosticsOptions d;
  d.dual_residual = true;
  d.wall_time = false;
  Engine e(f, w, Matrix::Zero(n, 10), cfg, d);
  double worst_dual = 0.0, worst_range = 0.0;
  for (int k = 0; k < 200; ++k) {
    const TraceRecord r = e.step();
    worst_dual = std::max(worst_dual, r.dual_residual.value_or(INFINITY));
    worst_range = std::max(worst_range, range_residual(e.state()));
  }
  return {worst_dual <= 1e-6 && worst_range <= 1e-8,
          fmt("max dual residual %.2e (limit 1e-6), max |e^T Z| / max(1,|Z|) %.2e (limit 1e-8), "
              "final stationarity %.2e",
              worst_dual, worst_range, e.record().stationarity)};
}

// --------------------------------------------------------------- Lyapunov

Verdict lyapunov() {
  const int n = 10;
  const Matrix a = random_matrix(n, 3, 11);
  const auto f = quadratic_consensus(a);
  const MixingMatrix w = build_ring(n, 0.5);
  const double rho = w.rho(), l = 1.0;
  DiagnosticsOptions d;
  d.lyapunov = true;
  d.wall_time = false;

  SolverConfig ca;
  ca.eta = 0.9 * theory_eta(Algorithm::Adapd, rho, l);
  const double c = lyapunov_slack_constant(rho, ca.eta, l);
  Engine ea(f, w, a, ca, d);
  int viol_a = 0;
  double worst_a = -INFINITY;
  double prev = *ea.record().lyapunov;
  for (int k = 0; k < 500; ++k) {
    const double phi = *ea.step().lyapunov;
    const double excess = phi - (prev + c * ca.epsilon(k));
    worst_a = std::max(worst_a, excess);
    if (excess > 0.0) ++viol_a;
    prev = phi;
  }

  SolverConfig co;
  co.algorithm = Algorithm::AdapdOg;
  co.eta = 0.9 * theory_eta(Algorithm::AdapdOg, rho, l);
  Engine eo(f, w, a, co, d);
  int viol_o = 0;
  double worst_o = -INFINITY;
  prev = *eo.record().lyapunov;
  for (int k = 0; k < 500; ++k) {
    const double phi = *eo.step().lyapunov;
    const double excess = phi - prev - 1e-9 * std::abs(prev);
    worst_o = std::max(worst_o, excess);
    if (excess > 0.0) ++viol_o;
    prev = phi;
  }
  return {viol_a == 0 && viol_o == 0,
          fmt("ADAPD eta=%.3g: %d violations, max excess %.2e; OG eta=%.3g: %d violations, "
              "max increase %.2e (start at local minimizers)",
              ca.eta, viol_a, worst_a, co.eta, viol_o, worst_o)};
}

// ------------------------------------------------------------ convergence

json quadratic_doc(const std::string& alg) {
  return {{"name", "convergence_" + alg},
          {"problem", {{"kind", "quadratic"}, {"p", 3}, {"seed", 11}}},
          {"topology", {{"kind", "ring"}, {"n", 10}, {"self_weight", 0.5}}},
          {"algorithm", {{"kind", alg}, {"inner", {{"method", "exact"}}}}},
          {"budget", {{"kind", "communications"}, {"limit", 2000}}},
          {"init", {{"kind", "zero"}}},
          {"diagnostics", {{"wall_time", false}}},
          {"trials", 1},
          {"grid", {{"eta", step_grid()}}}};
}

Verdict convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridResult ga = grid_search(in_memory(quadratic_doc("adapd")));
  const double ta = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& rows = ga.run.trials[0].rows;
  const TrialInstance inst = build_trial(ga.best_config, 0);
  const auto* q = dynamic_cast<const QuadraticConsensus*>(inst.objective.get());
  // Trace rows hold metrics only; replay the winner to read the final iterate.
  Engine e(inst.objective, *inst.mixing, inst.x_start, ga.best_config.solver, no_clock());
  e.run(ga.best_config.budget);
  const double dist = (e.state().x.colwise().mean().transpose() - q->minimizer()).norm();
  const double st_a = rows.back().stationarity;

  const auto t1 = std::chrono::steady_clock::now();
  const GridResult go = grid_search(in_memory(quadratic_doc("adapd_og")));
  const double to = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  const double st_o = go.run.trials[0].rows.back().stationarity;
  const bool pass = st_a <= 1e-10 && dist <= 1e-6 && st_o <= 1e-8 && ta < 30.0 && to < 30.0 &&
                    rows.back().comms <= 2000;
  return {pass, fmt("ADAPD eta=%g: stationarity %.2e (limit 1e-10), |xbar - x*| %.2e (limit 1e-6), "
                    "%.1f s; OG eta=%g: stationarity %.2e (limit 1e-8), %.1f s",
                    ga.best_config.solver.eta, st_a, dist, ta, go.best_config.solver.eta, st_o,
                    to)};
}

// ------------------------------------------------------------------- rate

Verdict rate() {
  const int n = 10;
  const Matrix a = random_matrix(n, 3, 11);
  const auto f = quadratic_consensus(a);
  const MixingMatrix w = build_ring(n, 0.5);
  SolverConfig cfg;
  cfg.eta = 0.9 * theory_eta(Algorithm::Adapd, w.rho(), 1.0);
  cfg.inner.method = InnerMethod::Exact;
  Engine e(f, w, Matrix::Zero(n, 3), cfg, no_clock());
  double mn = e.record().stationarity;
  std::vector<double> prod;
  for (long k = 1; k <= 400; ++k) {
    mn = std::min(mn, e.step().stationarity);
    if (k == 100 || k == 200 || k == 400) prod.push_back(static_cast<double>(k) * mn);
  }
  const double ratio = *std::max_element(prod.begin(), prod.end()) /
                       *std::min_element(prod.begin(), prod.end());
  return {ratio < 3.0, fmt("eta=%.3g (theory-compliant), zero start: K*min = %.3e, %.3e, %.3e; ratio %.2f "
                           "(limit 3)",
                           cfg.eta, prod[0], prod[1], prod[2], ratio)};
}

// ----------------------------------------------------------- MC advantage

long comms_to_target(const ObjectivePtr& f, const MixingMatrix& w, const Matrix& x0,
                     SolverConfig cfg, double target, long cap) {
  try {
    Engine e(f, w, x0, cfg, no_clock());
    if (e.record().stationarity <= target) return 0;
    const Budget b{BudgetKind::Communications, cap};
    while (e.can_step(b))
      if (e.step().stationarity <= target) return e.state().comms;
  } catch (const DivergenceError&) {
  }
  return -1;
}

Verdict mc_advantage() {
  const int n = 40;
  const Matrix a = random_matrix(n, 3, 40);
  const auto f = quadratic_consensus(a);
  const MixingMatrix w = build_ring(n, 1.0 / 3.0);
  const int r = default_mc_degree(w.rho());
  const Matrix x0 = Matrix::Zero(n, 3);
  const long cap = 50000;
  long best_plain = -1, best_mc = -1;
  double eta_plain = 0.0, eta_mc = 0.0;
  for (double eta : default_step_grid()) {
    SolverConfig cfg;
    cfg.eta = eta;
    cfg.inner.method = InnerMethod::Exact;
    const long p = comms_to_target(f, w, x0, cfg, 1e-6, cap);
    cfg.mix = MixMode::Chebyshev;
    cfg.degree = r;
    const long m = comms_to_target(f, w, x0, cfg, 1e-6, cap);
    if (p >= 0 && (best_plain < 0 || p < best_plain)) best_plain = p, eta_plain = eta;
    if (m >= 0 && (best_mc < 0 || m < best_mc)) best_mc = m, eta_mc = eta;
  }
  const bool pass = best_mc >= 0 && (best_plain < 0 || best_mc < best_plain);
  return {pass, fmt("rho=%.4f, R=%d: plain ADAPD %ld comms (eta=%g), ADAPD-MC %ld comms (eta=%g) "
                    "to stationarity 1e-6",
                    w.rho(), r, best_plain, eta_plain, best_mc, eta_mc)};
}

// ------------------------------------------------------ logistic protocol

Verdict logistic_protocol() {
  const std::vector<std::string> algs = {"adapd", "adapd_og", "dgd", "prox_gpda"};
  bool pass = true;
  std::string detail;
  for (const char* topo : {"ring", "erdos_renyi"}) {
    for (double alpha : {0.01, 1.0}) {
      std::map<std::string, double> best;
      for (const auto& alg : algs) {
        json doc = {
            {"problem", {{"kind", "logistic"}, {"m", 2000}, {"p", 20}, {"alpha", alpha}, {"seed", 1}}},
            {"algorithm",
             {{"kind", alg}, {"inner", {{"method", "fista"}, {"best_effort", true}}}}},
            {"budget", {{"kind", "communications"}, {"limit", 500}}},
            {"diagnostics", {{"wall_time", false}}},
            {"trials", 1},
            {"seed_base", 1},
            {"grid", {{step_key(alg), step_grid()}}}};
        if (std::string(topo) == "ring")
          doc["topology"] = {{"kind", "ring"}, {"n", 10}, {"self_weight", 0.5}};
        else
          doc["topology"] = {{"kind", "erdos_renyi"}, {"n", 10}, {"p", 0.3}, {"seed", 1}};
        if (alg == "adapd") {
          doc["grid"]["eps_hat"] = {1e-4, 1e-10};
          doc["grid"]["decay"] = {1.5, 3.0};
        }
        const GridResult g = grid_search(in_memory(doc));
        best[alg] = *g.points[g.best].score;
      }
      const double baseline = std::min(best["dgd"], best["prox_gpda"]);
      const bool ok = best["adapd"] < baseline && best["adapd_og"] < baseline;
      pass = pass && ok;
      detail += fmt("[%s a=%g %s: adapd %.1e og %.1e dgd %.1e prox %.1e] ",
                    std::string(topo) == "ring" ? "ring" : "er", alpha, ok ? "ok" : "NO",
                    best["adapd"], best["adapd_og"], best["dgd"], best["prox_gpda"]);
    }
  }
  return {pass, detail};
}

// -------------------------------------------------- localization protocol

json localization_doc(const std::string& alg) {
  json doc = load_config_file((fs::path(ADAPD_SOURCE_DIR) / "configs" / "localization.json").string());
  doc["algorithm"]["kind"] = alg;
  doc["grid"] = {{step_key(alg), step_grid()}};
  doc["grid_trials"] = 10;
  return doc;
}

Verdict localization_protocol() {
  std::map<std::string, double> stat;
  std::map<std::string, double> step;
  json adapd_dist;
  double adapd_final_dist = 0.0;
  for (const std::string alg : {"adapd", "adapd_og", "dgd", "prox_gpda"}) {
    ExperimentConfig cfg = in_memory(localization_doc(alg));
    cfg.workers = 0;
    const GridResult g = grid_search(cfg);
    stat[alg] = g.run.final_mean("stationarity").value_or(INFINITY);
    const SolverConfig& s = g.best_config.solver;
    step[alg] = alg == "dgd" ? s.alpha0 : alg == "prox_gpda" ? s.beta : s.eta;
    if (g.run.failures > 0) stat[alg] = INFINITY;
    if (alg == "adapd") {
      adapd_dist = g.run.json["metrics"]["target_distance"];
      adapd_final_dist = g.run.final_mean("target_distance").value_or(INFINITY);
    }
  }
  // After a burn-in of 10% of the budget the mean distance may not climb more
  // than 1% above its running minimum. The iterates converge to a stationary
  // point of the noisy problem, so the distance levels off at a positive value
  // and a strict check would only test rounding on the plateau.
  const auto& comms = adapd_dist["comms"];
  const auto& mean = adapd_dist["mean"];
  int strict_increases = 0;
  double running_min = INFINITY, worst_rise = 0.0;
  for (std::size_t i = 0; i < comms.size(); ++i) {
    const double v = mean[i].get<double>();
    if (comms[i].get<double>() > 150.0) {
      if (i > 0 && v > mean[i - 1].get<double>()) ++strict_increases;
      worst_rise = std::max(worst_rise, v / running_min - 1.0);
    }
    running_min = std::min(running_min, v);
  }
  const bool order = stat["adapd"] <= stat["dgd"] && stat["adapd"] <= stat["prox_gpda"];
  const bool pass = worst_rise <= 0.01 && adapd_final_dist <= 0.3 && order;
  return {pass, fmt("ADAPD target distance: max rise above running minimum after burn-in %.3f%% "
                    "(limit 1%%; %d step-to-step increases), final mean %.4f "
                    "(limit 0.3); final stationarity adapd %.2e (eta=%g) og %.2e (eta=%g) "
                    "dgd %.2e (alpha0=%g) prox %.2e (beta=%g)",
                    100.0 * worst_rise, strict_increases, adapd_final_dist, stat["adapd"], step["adapd"],
                    stat["adapd_og"], step["adapd_og"], stat["dgd"], step["dgd"],
                    stat["prox_gpda"], step["prox_gpda"])};
}

// ------------------------------------------------------------ determinism

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "adapd_acceptance_determinism";
  fs::remove_all(root);
  std::vector<json> docs;
  {
    json d = quadratic_doc("adapd");
    d["grid"] = json::object();
    d["algorithm"]["eta"] = 1.0;
    d["trials"] = 2;
    docs.push_back(d);
  }
  {
    json d = {{"problem", {{"kind", "logistic"}, {"m", 2000}, {"p", 20}, {"alpha", 0.01}, {"seed", 1}}},
              {"topology", {{"kind", "erdos_renyi"}, {"n", 10}, {"p", 0.3}, {"seed", 1}}},
              {"algorithm", {{"kind", "adapd"}, {"eta", 1.0}, {"inner", {{"best_effort", true}}}}},
              {"budget", {{"kind", "communications"}, {"limit", 500}}},
              {"trials", 1}};
    docs.push_back(d);
  }
  {
    json d = localization_doc("adapd");
    d["grid"] = json::object();
    d["algorithm"]["eta"] = 0.1;
    docs.push_back(d);
  }
  int files = 0, mismatched = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    json d = docs[i];
    d["diagnostics"]["wall_time"] = false;
    d["workers"] = 2;
    const fs::path a = root / ("run" + std::to_string(i) + "a");
    const fs::path b = root / ("run" + std::to_string(i) + "b");
    d["output_dir"] = a.string();
    run_experiment(parse_config(d));
    d["output_dir"] = b.string();
    run_experiment(parse_config(d));
    for (const auto& entry : fs::directory_iterator(a)) {
      if (!entry.is_directory()) continue;
      const fs::path rel = entry.path().filename() / "trace.csv";
      ++files;
      const std::string x = slurp(a / rel);
      if (x.empty() || x != slurp(b / rel)) ++mismatched;
    }
  }
  fs::remove_all(root);
  return {files > 0 && mismatched == 0,
          fmt("%d trace CSVs compared across repeated runs, %d differ", files, mismatched)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"mixing_suite", 10.0, mixing_suite},
      {"chebyshev_suite", 5.0, chebyshev_suite},
      {"transcription", 0.0, transcription},
      {"dual_relation", 0.0, dual_relation},
      {"lyapunov", 0.0, lyapunov},
      {"convergence", 60.0, convergence},
      {"rate_sanity", 0.0, rate},
      {"mc_advantage", 0.0, mc_advantage},
      {"logistic_protocol", 300.0, logistic_protocol},
      {"localization_protocol", 300.0, localization_protocol},
      {"determinism", 0.0, determinism},
  };

  CLI::App app{"Acceptance criteria runner"};
  std::vector<std::string> names;
  bool list = false;
  app.add_option("names", names, "Criteria to run (default: all)");
  app.add_flag("--list", list, "Print criterion names and exit");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& c : all) std::printf("%s\n", c.name.c_str());
    return 0;
  }
  for (const auto& n : names) {
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return c.name == n; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", n.c_str());
      return 2;
    }
  }

  int failed = 0;
  for (const auto& c : all) {
    if (!names.empty() && std::find(names.begin(), names.end(), c.name) == names.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0.0 && secs >= c.time_limit_s) {
      v.pass = false;
      v.detail += fmt(" [runtime %.1f s exceeds %.0f s]", secs, c.time_limit_s);
    }
    if (!v.pass) ++failed;
    std::printf("%s %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
