#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adapd/problems.hpp"
#include "adapd/solvers.hpp"
#include "adapd/topology.hpp"
#include "json.hpp"

namespace adapd {

struct TraceRecord {
  long k = 0;
  long comms = 0;
  double grads = 0.0;  // gradient evaluations per agent, cumulative
  double stationarity = 0.0;
  double consensus_err = 0.0;
  double mean_grad_norm2 = 0.0;
  double objective_F = 0.0;
  double objective_fbar = 0.0;
  std::optional<double> lyapunov;
  std::optional<double> dual_residual;
  double wall_time_s = 0.0;
  std::optional<double> target_distance;
};

struct Stationarity {
  double mean_grad_norm2 = 0.0;  // |(1/N) sum_i grad f_i(xbar)|^2
  double consensus_err = 0.0;    // |X - Xbar|_F^2
  double total() const { return mean_grad_norm2 + consensus_err; }
};

Stationarity stationarity_parts(const Matrix& x, const Objective& f);
double stationarity_violation(const Matrix& x, const Objective& f);

/// Lyapunov function of ADAPD with C = 28/(1-rho)^2 and objective sum_i f_i:
///   F(X) + <Y, X - X0> + |X - X0|^2/(2 eta) + <Z, X0> + (1 + C)/(2 eta) <X0, (I-W) X0>
///   + (C/eta) |X0 - X0_prev|^2.
double lyapunov_adapd(const AgentState& s, const Objective& f, const Matrix& w, double eta,
                      double rho);

/// Same value with the dual pairing evaluated through an explicit Z
/// recovered from Z = sqrt(I-W) Z_hidden by least squares, and the penalty via
/// |sqrt(I-W) X0|^2. Used to cross-check lyapunov_adapd.
double lyapunov_adapd_explicit(const AgentState& s, const Objective& f, const MixingMatrix& w,
                               double eta, double rho);

/// ADAPD-OG Lyapunov with C = 16/(1-rho)^2, plus
/// (4 L^2 (1-rho) eta + 8 L^2 eta + C L (1-rho)) / (2 (1-rho)) |X - X_prev|^2.
double lyapunov_og(const AgentState& s, const Objective& f, const Matrix& w, double eta,
                   double rho, double lipschitz);

/// c in Phi^{k+1} <= Phi^k + c eps_k:
/// ((1-rho) + (32 L + 16 L (1-rho)) eta + 4 C (1-rho)) / (2 L (1-rho)).
double lyapunov_slack_constant(double rho, double eta, double lipschitz);

/// |Z - Y + (1/eta) W (X0 - X0_prev)|_F / max(1, |Y|_F) for ADAPD;
/// |Y + grad F(X_prev) + (1/eta)(X0 - X0_prev)|_F / max(1, |Y|_F) for ADAPD-OG.
double dual_relation_residual(const AgentState& s, const Matrix& w, double eta,
                              Algorithm variant, const Objective* f = nullptr);

/// max over columns of |e^T Z| / max(1, |Z|_F).
double range_residual(const AgentState& s);

double target_distance(const Matrix& x, const LocalizationInstance& inst);

// ------------------------------------------------------------- writers

/// The 11 fixed columns, plus target_distance when requested.
std::vector<std::string> trace_header(bool with_target);
void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& rows, bool with_target);
void write_trace_jsonl(std::ostream& os, const std::vector<TraceRecord>& rows, bool with_target);
nlohmann::json to_json(const TraceRecord& r, bool with_target);

/// %.17g, which round-trips every finite double.
std::string format_double(double v);

/// Reads a trace CSV written by write_trace_csv. Empty cells become NaN.
struct TraceTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  int column(const std::string& name) const;  // -1 if absent
};
TraceTable read_trace_csv(std::istream& is);

}  // namespace adapd
