#include "adapd/solvers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include "adapd/errors.hpp"

namespace adapd {

// -------------------------------------------------------------- strings

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Adapd: return "adapd";
    case Algorithm::AdapdOg: return "adapd_og";
    case Algorithm::Dgd: return "dgd";
    case Algorithm::ProxGpda: return "prox_gpda";
  }
  return "adapd";
}

std::string to_string(InnerMethod m) {
  switch (m) {
    case InnerMethod::Fista: return "fista";
    case InnerMethod::GradientDescent: return "gradient_descent";
    case InnerMethod::Exact: return "exact";
  }
  return "fista";
}

std::string to_string(BudgetKind b) {
  switch (b) {
    case BudgetKind::Communications: return "communications";
    case BudgetKind::Iterations: return "iterations";
    case BudgetKind::Gradients: return "gradients";
  }
  return "communications";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "adapd") return Algorithm::Adapd;
  if (s == "adapd_og") return Algorithm::AdapdOg;
  if (s == "dgd") return Algorithm::Dgd;
  if (s == "prox_gpda") return Algorithm::ProxGpda;
  throw ConfigError("unknown algorithm '" + s + "' (expected adapd, adapd_og, dgd, prox_gpda)");
}

InnerMethod inner_method_from_string(const std::string& s) {
  if (s == "fista") return InnerMethod::Fista;
  if (s == "gradient_descent" || s == "gd") return InnerMethod::GradientDescent;
  if (s == "exact") return InnerMethod::Exact;
  throw ConfigError("unknown inner method '" + s + "' (expected fista, gradient_descent, exact)");
}

BudgetKind budget_kind_from_string(const std::string& s) {
  if (s == "communications" || s == "comms") return BudgetKind::Communications;
  if (s == "iterations") return BudgetKind::Iterations;
  if (s == "gradients") return BudgetKind::Gradients;
  throw ConfigError("unknown budget kind '" + s + "'");
}

// --------------------------------------------------------------- config

void SolverConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidParameterError("eta must be positive");
  if (degree < 0) throw InvalidParameterError("degree must be >= 1 (or 0 for the default)");
  if (!(dual_scale > 0.0)) throw InvalidParameterError("dual scale must be positive");
  if (!(inner.eps_hat > 0.0)) throw InvalidParameterError("eps_hat must be positive");
  if (!(inner.decay >= 0.0)) throw InvalidParameterError("decay must be non-negative");
  if (inner.max_iters < 1) throw InvalidParameterError("max inner iterations must be >= 1");
  if (inner.batch_size < 0) throw InvalidParameterError("batch size must be non-negative");
  if (!(alpha0 > 0.0)) throw InvalidParameterError("alpha0 must be positive");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidParameterError("q must lie in (0, 1]");
  if (!(beta > 0.0)) throw InvalidParameterError("beta must be positive");
  if (lipschitz && !(*lipschitz >= 0.0)) throw InvalidParameterError("lipschitz must be >= 0");
  if (mix != MixMode::Plain && (algorithm == Algorithm::Dgd || algorithm == Algorithm::ProxGpda))
    throw InvalidParameterError("multiple-communication mixing applies to ADAPD variants only");
}

double SolverConfig::epsilon(long k) const {
  return inner.eps_hat / std::pow(static_cast<double>(k + 1), inner.decay);
}

// ----------------------------------------------------------------- init

AgentState adapd_init(const Objective& f, const MixingMatrix& w, const Matrix& x_start) {
  if (x_start.rows() != f.n_agents() || x_start.cols() != f.dim() || w.n() != f.n_agents())
    throw DimensionMismatchError("start point is " + std::to_string(x_start.rows()) + "x" +
                                 std::to_string(x_start.cols()) + ", problem needs " +
                                 std::to_string(f.n_agents()) + "x" + std::to_string(f.dim()) +
                                 " and W is " + std::to_string(w.n()) + "x" +
                                 std::to_string(w.n()));
  AgentState s;
  s.x = x_start;
  s.x0 = x_start;
  s.x_prev = x_start;
  s.x0_prev = x_start;
  s.y = Matrix::Zero(x_start.rows(), x_start.cols());
  s.z = s.y;
  s.z_prev = s.y;
  return s;
}

// ---------------------------------------------------------- inner solve

namespace {

class Subproblem {
 public:
  Subproblem(const Objective& f, int i, const Vector& y, const Vector& x0, double eta)
      : f_(f), i_(i), y_(y), x0_(x0), eta_(eta) {}

  double value(const Vector& x) const {
    const Vector d = x - x0_;
    return f_.value(i_, x) + y_.dot(d) + d.squaredNorm() / (2.0 * eta_);
  }
  Vector gradient(const Vector& x) {
    ++grads;
    return f_.gradient(i_, x) + y_ + (x - x0_) / eta_;
  }
  Vector batch_gradient(const Vector& x, const std::vector<std::size_t>& batch) {
    ++grads;
    return f_.batch_gradient(i_, x, batch) + y_ + (x - x0_) / eta_;
  }

  long grads = 0;

 private:
  const Objective& f_;
  int i_;
  const Vector& y_;
  const Vector& x0_;
  double eta_;
};

InnerResult finish(InnerResult r, double tol, const InnerConfig& cfg, int agent) {
  r.satisfied = r.residual_sq <= tol;
  if (!r.satisfied && !cfg.best_effort) {
    std::ostringstream os;
    os << "agent " << agent << ": inner residual " << r.residual_sq << " above tolerance "
       << tol << " after " << r.iterations << " iterations";
    throw InexactnessError(os.str(), r.residual_sq);
  }
  return r;
}

// Accelerated (or plain) gradient method with backtracking. The residual is
// checked at every point where a gradient is taken, and that point is returned.
InnerResult first_order(Subproblem& g, const Vector& x_init, double tol, const InnerConfig& cfg,
                        double lg_init, bool accelerate) {
  InnerResult best;
  Vector z = x_init;
  Vector gz = g.gradient(z);
  best.x = z;
  best.residual_sq = gz.squaredNorm();
  if (best.residual_sq <= tol || !std::isfinite(best.residual_sq)) return best;

  double lg = lg_init;
  double t = 1.0;
  Vector x_prev = z;
  double fx_prev = g.value(z);
  double fz = fx_prev;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const double gz2 = gz.squaredNorm();
    Vector x_new;
    double fx_new = 0.0;
    for (int tries = 0; tries < 60; ++tries) {
      x_new = z - gz / lg;
      fx_new = g.value(x_new);
      if (fx_new <= fz - gz2 / (2.0 * lg) + 1e-14 * (1.0 + std::abs(fz))) break;
      lg *= 2.0;
    }
    if (accelerate && fx_new <= fx_prev) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      z = x_new + ((t - 1.0) / t_next) * (x_new - x_prev);
      t = t_next;
      fz = g.value(z);
    } else {
      // restart on function increase
      z = x_new;
      t = 1.0;
      fz = fx_new;
    }
    x_prev = std::move(x_new);
    fx_prev = fx_new;

    gz = g.gradient(z);
    best.iterations = it;
    const double r2 = gz.squaredNorm();
    if (r2 < best.residual_sq) {
      best.residual_sq = r2;
      best.x = z;
    }
    if (r2 <= tol) break;
    if (!std::isfinite(r2)) break;
  }
  return best;
}

InnerResult stochastic(Subproblem& g, const Objective& f, int agent, const Vector& x_init,
                       double tol, const InnerConfig& cfg, double step, CounterRng& rng) {
  const auto m = static_cast<std::size_t>(f.local_samples(agent));
  const auto b = std::min(static_cast<std::size_t>(cfg.batch_size), m);
  InnerResult best;
  Vector x = x_init;
  best.x = x;
  best.residual_sq = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Vector gx = g.batch_gradient(x, rng.sample_without_replacement(m, b));
    const double r2 = gx.squaredNorm();
    best.iterations = it + 1;
    if (r2 < best.residual_sq) {
      best.residual_sq = r2;
      best.x = x;
    }
    if (r2 <= tol || !std::isfinite(r2)) break;
    x -= step * gx;
  }
  return best;
}

}  // namespace

InnerResult inner_solve(const Objective& f, int agent, const Vector& x_init, const Vector& y,
                        const Vector& x0, double eta, double tol, const InnerConfig& cfg,
                        std::optional<double> lipschitz, CounterRng* batch_rng) {
  Subproblem g(f, agent, y, x0, eta);
  const std::optional<double> lhat = lipschitz ? lipschitz : f.smoothness(agent);
  const double lg = lhat.value_or(0.0) + 1.0 / eta;
  InnerResult r;
  if (cfg.method == InnerMethod::Exact) {
    auto x = f.solve_subproblem(agent, y, x0, eta);
    if (!x) throw InvalidParameterError(f.kind() + " problem has no closed-form subproblem");
    r.x = std::move(*x);
    r.residual_sq = g.gradient(r.x).squaredNorm();
    r.iterations = 1;
    r.gradients = g.grads;
    r.satisfied = true;
    return r;
  }
  if (cfg.batch_size > 0) {
    if (!f.supports_batch()) throw InvalidParameterError(f.kind() + " has no mini-batch mode");
    if (!batch_rng) throw InvalidParameterError("mini-batch mode needs a random stream");
    r = stochastic(g, f, agent, x_init, tol, cfg, 1.0 / lg, *batch_rng);
  } else {
    r = first_order(g, x_init, tol, cfg, lg, cfg.method == InnerMethod::Fista);
  }
  r.gradients = g.grads;
  return finish(std::move(r), tol, cfg, agent);
}

// ----------------------------------------------------------- iterations

int next_step_comms(const AgentState& s, const SolverConfig& cfg, const Communicator& comm) {
  switch (cfg.algorithm) {
    case Algorithm::Adapd:
    case Algorithm::AdapdOg: return s.k == 0 ? 2 * comm.cost() : comm.cost();
    case Algorithm::Dgd: return 1;
    case Algorithm::ProxGpda: return s.k == 0 ? 2 : 1;
  }
  return 1;
}

namespace {

// X0, Y and Z updates shared by ADAPD and ADAPD-OG, given X^{k+1}.
void primal_dual_tail(AgentState& s, Matrix x_new, Communicator& comm, const SolverConfig& cfg) {
  const double eta = cfg.eta;
  const double sc = cfg.dual_scale;
  Matrix x0_new;
  if (s.k == 0) {
    x0_new = 0.5 * (comm.apply(s.x0) + x_new + eta * (s.y - s.z));
  } else {
    // W X0^k recovered from the last Z step: W X0^k = X0^k - (eta/s)(Z^k - Z^{k-1}).
    x0_new = 0.5 * (x_new + s.x0 + eta * (s.y - s.z) - (eta / sc) * (s.z - s.z_prev));
  }
  s.y += (sc / eta) * (x_new - x0_new);
  const Matrix mixed = comm.apply(x0_new);
  s.z_prev = s.z;
  s.z += (sc / eta) * (x0_new - mixed);
  s.x_prev = std::move(s.x);
  s.x = std::move(x_new);
  s.x0_prev = std::move(s.x0);
  s.x0 = std::move(x0_new);
}

}  // namespace

void adapd_iterate(AgentState& s, const Objective& f, Communicator& comm,
                   const SolverConfig& cfg, CounterRng* batch_rng) {
  const int n = s.n();
  const double tol = cfg.epsilon(s.k + 1) / n;
  Matrix x_new(n, s.dim());
  for (int i = 0; i < n; ++i) {
    const InnerResult r =
        inner_solve(f, i, s.x.row(i).transpose(), s.y.row(i).transpose(),
                    s.x0.row(i).transpose(), cfg.eta, tol, cfg.inner, cfg.lipschitz, batch_rng);
    x_new.row(i) = r.x.transpose();
    s.grads += r.gradients;
    if (!r.satisfied) ++s.inexact_violations;
  }
  const long before = comm.rounds();
  primal_dual_tail(s, std::move(x_new), comm, cfg);
  s.comms += comm.rounds() - before;
  ++s.k;
  check_divergence(s);
}

void adapd_og_iterate(AgentState& s, const Objective& f, Communicator& comm,
                      const SolverConfig& cfg) {
  Matrix x_new = s.x0 - cfg.eta * (f.stacked_gradient(s.x) + s.y);
  s.grads += s.n();
  const long before = comm.rounds();
  primal_dual_tail(s, std::move(x_new), comm, cfg);
  s.comms += comm.rounds() - before;
  ++s.k;
  check_divergence(s);
}

void dgd_iterate(AgentState& s, const Objective& f, Communicator& comm, const SolverConfig& cfg) {
  const double step = cfg.alpha0 / std::pow(static_cast<double>(s.k + 1), cfg.q);
  const Matrix g = f.stacked_gradient(s.x);
  s.grads += s.n();
  const long before = comm.rounds();
  Matrix x_new = comm.mix_once(s.x) - step * g;
  s.comms += comm.rounds() - before;
  s.x_prev = std::move(s.x);
  s.x = std::move(x_new);
  s.x0_prev = s.x0;
  s.x0 = s.x;
  ++s.k;
  check_divergence(s);
}

void prox_gpda_iterate(AgentState& s, const Objective& f, Communicator& comm,
                       const SolverConfig& cfg) {
  const int n = s.n();
  Vector deg(n);
  for (int i = 0; i < n; ++i) {
    deg[i] = static_cast<double>(comm.neighbors(i).size());
    if (deg[i] == 0.0)
      throw InvalidTopologyError("Prox-GPDA needs every agent to have a neighbor");
  }
  const long before = comm.rounds();
  if (s.k == 0 || s.lap_x.size() == 0) {
    s.lap_x = comm.laplacian_apply(s.x);
    s.dual = Matrix::Zero(n, s.dim());
  }
  const Matrix g = f.stacked_gradient(s.x);
  s.grads += n;
  const Matrix rhs = g + s.dual + cfg.beta * s.lap_x;
  Matrix x_new = s.x - ((2.0 * cfg.beta) * deg).cwiseInverse().asDiagonal() * rhs;
  s.lap_x = comm.laplacian_apply(x_new);
  s.dual += cfg.beta * s.lap_x;
  s.comms += comm.rounds() - before;
  s.x_prev = std::move(s.x);
  s.x = std::move(x_new);
  s.x0_prev = s.x0;
  s.x0 = s.x;
  ++s.k;
  check_divergence(s);
}

void check_divergence(const AgentState& s) {
  for (const Matrix* m : {&s.x, &s.x0, &s.y, &s.z, &s.dual}) {
    if (m->size() == 0) continue;
    if (!m->allFinite()) throw DivergenceError("non-finite iterate", s.k);
    const double nrm = m->norm();
    if (nrm > kDivergenceThreshold) {
      std::ostringstream os;
      os << "iterate norm " << nrm << " exceeds " << kDivergenceThreshold;
      throw DivergenceError(os.str(), s.k);
    }
  }
}

double theory_eta(Algorithm a, double rho, double lipschitz) {
  const double gap2 = (1.0 - rho) * (1.0 - rho);
  const double c = a == Algorithm::AdapdOg ? 16.0 / gap2 : 28.0 / gap2;
  return 1.0 / (2.0 * c * lipschitz);
}

// ----------------------------------------------------------- checkpoint

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

struct NamedBlock {
  const char* name;
  Matrix AgentState::*member;
};

constexpr NamedBlock kBlocks[] = {
    {"x", &AgentState::x},           {"x0", &AgentState::x0},
    {"y", &AgentState::y},           {"z", &AgentState::z},
    {"x_prev", &AgentState::x_prev}, {"x0_prev", &AgentState::x0_prev},
    {"z_prev", &AgentState::z_prev}, {"dual", &AgentState::dual},
    {"lap_x", &AgentState::lap_x},
};

}  // namespace

void save_checkpoint(const AgentState& s, const std::string& prefix,
                     const nlohmann::json& extra) {
  std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write checkpoint '" + prefix + ".bin'");
  nlohmann::json blocks = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : kBlocks) {
    const Matrix& m = s.*(b.member);
    const auto bytes = static_cast<std::uint64_t>(m.size()) * sizeof(double);
    bin.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(bytes));
    blocks.push_back({{"name", b.name}, {"rows", m.rows()}, {"cols", m.cols()},
                      {"offset", offset}});
    offset += bytes;
  }
  if (!bin) throw DataError("short write on checkpoint '" + prefix + ".bin'");
  nlohmann::json meta = {{"format", "adapd-checkpoint-1"},
                         {"dtype", "float64-le"},
                         {"order", "column-major"},
                         {"bytes", offset},
                         {"k", s.k},
                         {"comms", s.comms},
                         {"grads", s.grads},
                         {"inexact_violations", s.inexact_violations},
                         {"blocks", std::move(blocks)},
                         {"extra", extra}};
  std::ofstream js(prefix + ".json", std::ios::trunc);
  if (!js) throw DataError("cannot write checkpoint '" + prefix + ".json'");
  js << meta.dump(2) << '\n';
}

AgentState load_checkpoint(const std::string& prefix, nlohmann::json* extra) {
  std::ifstream js(prefix + ".json");
  if (!js) throw DataError("cannot read checkpoint '" + prefix + ".json'");
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot read checkpoint '" + prefix + ".bin'");

  AgentState s;
  try {
    if (meta.at("format") != "adapd-checkpoint-1") throw DataError("unknown checkpoint format");
    s.k = meta.at("k").get<long>();
    s.comms = meta.at("comms").get<long>();
    s.grads = meta.at("grads").get<long>();
    s.inexact_violations = meta.value("inexact_violations", 0L);
    for (const auto& b : kBlocks) {
      const auto it = std::find_if(meta.at("blocks").begin(), meta.at("blocks").end(),
                                   [&](const nlohmann::json& j) { return j.at("name") == b.name; });
      if (it == meta.at("blocks").end())
        throw DataError(std::string("checkpoint lacks block ") + b.name);
      Matrix m(it->at("rows").get<Eigen::Index>(), it->at("cols").get<Eigen::Index>());
      bin.seekg(static_cast<std::streamoff>(it->at("offset").get<std::uint64_t>()));
      bin.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!bin) throw DataError(std::string("truncated checkpoint block ") + b.name);
      s.*(b.member) = std::move(m);
    }
    if (extra) *extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  return s;
}

}  // namespace adapd
