#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <vector>

#include "adapd/communicator.hpp"
#include "adapd/diagnostics.hpp"
#include "adapd/problems.hpp"
#include "adapd/solvers.hpp"

namespace adapd {

struct DiagnosticsOptions {
  bool lyapunov = false;
  bool dual_residual = false;
  bool wall_time = true;
  /// L used in the Lyapunov constants; defaults to the problem's max hint.
  std::optional<double> lyapunov_lipschitz;
  std::shared_ptr<const LocalizationInstance> targets;
};

/// Drives one solver over one instance and produces trace rows.
class Engine {
 public:
  Engine(ObjectivePtr f, const MixingMatrix& w, const Matrix& x_start, SolverConfig cfg,
         DiagnosticsOptions diag = {});

  const AgentState& state() const { return state_; }
  void restore(AgentState s);
  /// Config with the MC degree resolved.
  const SolverConfig& config() const { return cfg_; }
  const Communicator& communicator() const { return comm_; }
  /// Dense form of the mixing operator used in the X0/Z updates, and its rho.
  const Matrix& operator_matrix() const { return op_; }
  double operator_rho() const { return op_rho_; }
  /// True when eta is at or above the theory bound for the variant.
  bool eta_above_theory() const { return eta_above_theory_; }

  int next_step_comms() const;
  bool can_step(const Budget& b) const;
  TraceRecord step();
  /// Metrics for the current state.
  TraceRecord record() const;
  /// Initial row plus one row per iteration until the budget is exhausted.
  std::vector<TraceRecord> run(const Budget& b);

 private:
  ObjectivePtr f_;
  SolverConfig cfg_;
  DiagnosticsOptions diag_;
  Communicator comm_;
  Matrix op_;
  double op_rho_ = 0.0;
  bool eta_above_theory_ = false;
  std::optional<double> lyap_l_;
  AgentState state_;
  CounterRng batch_rng_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace adapd
