#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "adapd/communicator.hpp"
#include "adapd/problems.hpp"
#include "adapd/rng.hpp"
#include "adapd/types.hpp"
#include "json.hpp"

namespace adapd {

enum class Algorithm { Adapd, AdapdOg, Dgd, ProxGpda };
enum class InnerMethod { Fista, GradientDescent, Exact };
enum class BudgetKind { Communications, Iterations, Gradients };

std::string to_string(Algorithm a);
std::string to_string(InnerMethod m);
std::string to_string(BudgetKind b);
Algorithm algorithm_from_string(const std::string& s);
InnerMethod inner_method_from_string(const std::string& s);
BudgetKind budget_kind_from_string(const std::string& s);

struct InnerConfig {
  InnerMethod method = InnerMethod::Fista;
  double eps_hat = 1e-4;  // epsilon_k = eps_hat / (k + 1)^decay
  double decay = 1.5;
  int max_iters = 500;
  bool best_effort = false;
  int batch_size = 0;  // > 0 selects mini-batch gradients
};

struct Budget {
  BudgetKind kind = BudgetKind::Communications;
  long limit = 500;
};

struct SolverConfig {
  Algorithm algorithm = Algorithm::Adapd;
  double eta = 0.1;
  InnerConfig inner;
  MixMode mix = MixMode::Plain;
  int degree = 1;  // 0 selects ceil(2 / sqrt(1 - rho))
  double dual_scale = 1.0;
  // DGD: alpha_k = alpha0 / (k + 1)^q
  double alpha0 = 0.1;
  double q = 0.5;
  // Prox-GPDA penalty
  double beta = 1.0;
  /// Smoothness estimate used by the inner solver; falls back to the problem's hint.
  std::optional<double> lipschitz;
  std::uint64_t seed = 0;

  void validate() const;
  /// epsilon_k.
  double epsilon(long k) const;
};

/// Iterate blocks, each N x p. Z is the communicable dual sqrt(I - W) Z.
struct AgentState {
  Matrix x, x0, y, z;
  Matrix x_prev, x0_prev, z_prev;
  // Prox-GPDA dual and cached L^- X.
  Matrix dual, lap_x;
  long k = 0;
  long comms = 0;
  long grads = 0;  // summed over agents
  long inexact_violations = 0;

  int n() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

/// X = X0 = X_prev = X0_prev = x_start, Y = Z = Z_prev = 0.
AgentState adapd_init(const Objective& f, const MixingMatrix& w, const Matrix& x_start);

struct InnerResult {
  Vector x;
  double residual_sq = 0.0;
  int iterations = 0;
  long gradients = 0;
  bool satisfied = true;
};

/// Approximately minimizes f_i(x) + <y, x - x0> + |x - x0|^2 / (2 eta) until
/// |grad f_i(x) + y + (x - x0)/eta|^2 <= tol, warm-started at x_init.
/// Throws InexactnessError on failure unless cfg.best_effort.
InnerResult inner_solve(const Objective& f, int agent, const Vector& x_init, const Vector& y,
                        const Vector& x0, double eta, double tol, const InnerConfig& cfg,
                        std::optional<double> lipschitz, CounterRng* batch_rng = nullptr);

/// Per-iteration communication cost of the next step.
int next_step_comms(const AgentState& s, const SolverConfig& cfg, const Communicator& comm);

/// One outer iteration of each method. Each updates comms/grads/k in place.
void adapd_iterate(AgentState& s, const Objective& f, Communicator& comm,
                   const SolverConfig& cfg, CounterRng* batch_rng = nullptr);
void adapd_og_iterate(AgentState& s, const Objective& f, Communicator& comm,
                      const SolverConfig& cfg);
void dgd_iterate(AgentState& s, const Objective& f, Communicator& comm, const SolverConfig& cfg);
void prox_gpda_iterate(AgentState& s, const Objective& f, Communicator& comm,
                       const SolverConfig& cfg);

inline constexpr double kDivergenceThreshold = 1e12;

/// Throws DivergenceError if any block is non-finite or has norm above the threshold.
void check_divergence(const AgentState& s);

/// Theory step bound 1 / (2 C L) with C = 28/(1-rho)^2 (ADAPD) or 16/(1-rho)^2 (OG).
double theory_eta(Algorithm a, double rho, double lipschitz);

// Checkpoints: <prefix>.bin holds the blocks as raw little-endian doubles in
// column-major order; <prefix>.json holds shapes, counters and block order.
void save_checkpoint(const AgentState& s, const std::string& prefix,
                     const nlohmann::json& extra = nlohmann::json::object());
AgentState load_checkpoint(const std::string& prefix, nlohmann::json* extra = nullptr);

}  // namespace adapd
