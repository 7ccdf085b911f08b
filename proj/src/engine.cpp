#include "adapd/engine.hpp"

#include "adapd/errors.hpp"

namespace adapd {

namespace {

SolverConfig resolve(SolverConfig cfg, const MixingMatrix& w) {
  cfg.validate();
  if (cfg.mix == MixMode::Plain) {
    cfg.degree = 1;
  } else if (cfg.degree == 0) {
    cfg.degree = default_mc_degree(spectral_gap(w));
  }
  return cfg;
}

}  // namespace

Engine::Engine(ObjectivePtr f, const MixingMatrix& w, const Matrix& x_start, SolverConfig cfg,
               DiagnosticsOptions diag)
    : f_(std::move(f)),
      cfg_(resolve(std::move(cfg), w)),
      diag_(std::move(diag)),
      comm_(w, cfg_.mix, cfg_.degree),
      state_(adapd_init(*f_, w, x_start)),
      batch_rng_(cfg_.seed, streams::kMinibatch),
      start_(std::chrono::steady_clock::now()) {
  if (cfg_.mix == MixMode::Plain) {
    op_ = w.w();
    op_rho_ = w.rho();
  } else {
    op_ = comm_.dense_operator();
    op_ = 0.5 * (op_ + op_.transpose()).eval();
    op_rho_ = MixingMatrix::from_dense(op_, MixingSource::Custom).rho();
  }
  lyap_l_ = diag_.lyapunov_lipschitz ? diag_.lyapunov_lipschitz : f_->max_smoothness();
  if (cfg_.lipschitz && !lyap_l_) lyap_l_ = cfg_.lipschitz;
  if ((cfg_.algorithm == Algorithm::Adapd || cfg_.algorithm == Algorithm::AdapdOg) && op_rho_ < 1.0) {
    const auto l = cfg_.lipschitz ? cfg_.lipschitz : f_->max_smoothness();
    if (l && *l > 0.0) eta_above_theory_ = cfg_.eta >= theory_eta(cfg_.algorithm, op_rho_, *l);
  }
  if (diag_.targets && f_->dim() != 2 * diag_.targets->n_targets())
    throw DimensionMismatchError("target instance does not match problem dimension");
}

void Engine::restore(AgentState s) {
  if (s.n() != f_->n_agents() || s.dim() != f_->dim())
    throw DimensionMismatchError("restored state does not match the problem");
  state_ = std::move(s);
}

int Engine::next_step_comms() const { return adapd::next_step_comms(state_, cfg_, comm_); }

bool Engine::can_step(const Budget& b) const {
  switch (b.kind) {
    case BudgetKind::Communications: return state_.comms + next_step_comms() <= b.limit;
    case BudgetKind::Iterations: return state_.k < b.limit;
    case BudgetKind::Gradients:
      return static_cast<double>(state_.grads) / state_.n() < static_cast<double>(b.limit);
  }
  return false;
}

TraceRecord Engine::step() {
  switch (cfg_.algorithm) {
    case Algorithm::Adapd: adapd_iterate(state_, *f_, comm_, cfg_, &batch_rng_); break;
    case Algorithm::AdapdOg: adapd_og_iterate(state_, *f_, comm_, cfg_); break;
    case Algorithm::Dgd: dgd_iterate(state_, *f_, comm_, cfg_); break;
    case Algorithm::ProxGpda: prox_gpda_iterate(state_, *f_, comm_, cfg_); break;
  }
  return record();
}

TraceRecord Engine::record() const {
  const AgentState& s = state_;
  TraceRecord r;
  r.k = s.k;
  r.comms = s.comms;
  r.grads = static_cast<double>(s.grads) / s.n();
  const Stationarity st = stationarity_parts(s.x, *f_);
  r.mean_grad_norm2 = st.mean_grad_norm2;
  r.consensus_err = st.consensus_err;
  r.stationarity = st.total();
  r.objective_F = f_->sum_value(s.x) / s.n();
  const Vector xbar = s.x.colwise().mean().transpose();
  double fbar = 0.0;
  for (int i = 0; i < s.n(); ++i) fbar += f_->value(i, xbar);
  r.objective_fbar = fbar / s.n();

  const bool primal_dual =
      cfg_.algorithm == Algorithm::Adapd || cfg_.algorithm == Algorithm::AdapdOg;
  if (diag_.lyapunov && primal_dual && op_rho_ < 1.0) {
    if (cfg_.algorithm == Algorithm::Adapd) {
      r.lyapunov = lyapunov_adapd(s, *f_, op_, cfg_.eta, op_rho_);
    } else if (lyap_l_) {
      r.lyapunov = lyapunov_og(s, *f_, op_, cfg_.eta, op_rho_, *lyap_l_);
    }
  }
  if (diag_.dual_residual && primal_dual && s.k >= 1 && cfg_.dual_scale == 1.0)
    r.dual_residual = dual_relation_residual(s, op_, cfg_.eta, cfg_.algorithm, f_.get());
  if (diag_.wall_time)
    r.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  if (diag_.targets) r.target_distance = target_distance(s.x, *diag_.targets);
  return r;
}

std::vector<TraceRecord> Engine::run(const Budget& b) {
  std::vector<TraceRecord> rows;
  rows.push_back(record());
  while (can_step(b)) rows.push_back(step());
  return rows;
}

}  // namespace adapd
