#include "adapd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "adapd/errors.hpp"

namespace adapd {

namespace {

Matrix consensus_rows(const Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return mean.replicate(x.rows(), 1);
}

double inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace

Stationarity stationarity_parts(const Matrix& x, const Objective& f) {
  if (x.rows() != f.n_agents() || x.cols() != f.dim())
    throw DimensionMismatchError("iterate shape does not match the problem");
  const Vector xbar = x.colwise().mean().transpose();
  Stationarity s;
  s.mean_grad_norm2 = f.mean_gradient(xbar).squaredNorm();
  s.consensus_err = (x - consensus_rows(x)).squaredNorm();
  return s;
}

double stationarity_violation(const Matrix& x, const Objective& f) {
  return stationarity_parts(x, f).total();
}

double lyapunov_adapd(const AgentState& s, const Objective& f, const Matrix& w, double eta,
                      double rho) {
  const double c = 28.0 / ((1.0 - rho) * (1.0 - rho));
  const Matrix d = s.x - s.x0;
  const double pen = inner(s.x0, s.x0 - w * s.x0);
  return f.sum_value(s.x) + inner(s.y, d) + d.squaredNorm() / (2.0 * eta) + inner(s.z, s.x0) +
         (1.0 + c) / (2.0 * eta) * pen + c / eta * (s.x0 - s.x0_prev).squaredNorm();
}

double lyapunov_adapd_explicit(const AgentState& s, const Objective& f, const MixingMatrix& w,
                               double eta, double rho) {
  const double c = 28.0 / ((1.0 - rho) * (1.0 - rho));
  const Matrix& q = w.eigenvectors();
  const Vector& lam = w.eigenvalues();
  Vector sigma(lam.size()), sigma_pinv(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    sigma[i] = std::sqrt(std::max(0.0, 1.0 - lam[i]));
    sigma_pinv[i] = sigma[i] > 1e-8 ? 1.0 / sigma[i] : 0.0;
  }
  const Matrix root = q * sigma.asDiagonal() * q.transpose();
  const Matrix z_hidden = q * sigma_pinv.asDiagonal() * q.transpose() * s.z;
  const Matrix root_x0 = root * s.x0;
  const Matrix d = s.x - s.x0;
  return f.sum_value(s.x) + inner(s.y, d) + d.squaredNorm() / (2.0 * eta) +
         inner(z_hidden, root_x0) + (1.0 + c) / (2.0 * eta) * root_x0.squaredNorm() +
         c / eta * (s.x0 - s.x0_prev).squaredNorm();
}

double lyapunov_og(const AgentState& s, const Objective& f, const Matrix& w, double eta,
                   double rho, double lipschitz) {
  const double gap = 1.0 - rho;
  const double c = 16.0 / (gap * gap);
  const double l2 = lipschitz * lipschitz;
  const double coef = (4.0 * l2 * gap * eta + 8.0 * l2 * eta + c * lipschitz * gap) / (2.0 * gap);
  const Matrix d = s.x - s.x0;
  const double pen = inner(s.x0, s.x0 - w * s.x0);
  return f.sum_value(s.x) + inner(s.y, d) + d.squaredNorm() / (2.0 * eta) + inner(s.z, s.x0) +
         (1.0 + c) / (2.0 * eta) * pen + c / eta * (s.x0 - s.x0_prev).squaredNorm() +
         coef * (s.x - s.x_prev).squaredNorm();
}

double lyapunov_slack_constant(double rho, double eta, double lipschitz) {
  const double gap = 1.0 - rho;
  const double c = 28.0 / (gap * gap);
  const double l = lipschitz;
  return (gap + (32.0 * l + 16.0 * l * gap) * eta + 4.0 * c * gap) / (2.0 * l * gap);
}

double dual_relation_residual(const AgentState& s, const Matrix& w, double eta, Algorithm variant,
                              const Objective* f) {
  const double scale = std::max(1.0, s.y.norm());
  if (variant == Algorithm::Adapd)
    return (s.z - s.y + (w * (s.x0 - s.x0_prev)) / eta).norm() / scale;
  if (variant == Algorithm::AdapdOg) {
    if (!f) throw InvalidParameterError("OG dual relation needs the objective");
    return (s.y + f->stacked_gradient(s.x_prev) + (s.x0 - s.x0_prev) / eta).norm() / scale;
  }
  throw InvalidParameterError("dual relation is defined for ADAPD variants only");
}

double range_residual(const AgentState& s) {
  const double scale = std::max(1.0, s.z.norm());
  return s.z.colwise().sum().cwiseAbs().maxCoeff() / scale;
}

double target_distance(const Matrix& x, const LocalizationInstance& inst) {
  if (x.cols() != 2 * inst.n_targets())
    throw DimensionMismatchError("iterate has " + std::to_string(x.cols()) +
                                 " columns, expected 2 N_T = " +
                                 std::to_string(2 * inst.n_targets()));
  const Vector xbar = x.colwise().mean().transpose();
  return (xbar - inst.stacked_targets()).norm();
}

// ------------------------------------------------------------- writers

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> trace_header(bool with_target) {
  std::vector<std::string> h = {"k",           "comms",          "grads",
                                "stationarity", "consensus_err", "mean_grad_norm2",
                                "objective_F", "objective_fbar", "lyapunov",
                                "dual_residual", "wall_time_s"};
  if (with_target) h.emplace_back("target_distance");
  return h;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& rows, bool with_target) {
  const auto header = trace_header(with_target);
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.k << ',' << r.comms << ',' << format_double(r.grads) << ','
       << format_double(r.stationarity) << ',' << format_double(r.consensus_err) << ','
       << format_double(r.mean_grad_norm2) << ',' << format_double(r.objective_F) << ','
       << format_double(r.objective_fbar) << ',' << opt(r.lyapunov) << ','
       << opt(r.dual_residual) << ',' << format_double(r.wall_time_s);
    if (with_target) os << ',' << opt(r.target_distance);
    os << '\n';
  }
}

nlohmann::json to_json(const TraceRecord& r, bool with_target) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j = {{"k", r.k},
                      {"comms", r.comms},
                      {"grads", r.grads},
                      {"stationarity", r.stationarity},
                      {"consensus_err", r.consensus_err},
                      {"mean_grad_norm2", r.mean_grad_norm2},
                      {"objective_F", r.objective_F},
                      {"objective_fbar", r.objective_fbar},
                      {"lyapunov", opt(r.lyapunov)},
                      {"dual_residual", opt(r.dual_residual)},
                      {"wall_time_s", r.wall_time_s}};
  if (with_target) j["target_distance"] = opt(r.target_distance);
  return j;
}

void write_trace_jsonl(std::ostream& os, const std::vector<TraceRecord>& rows, bool with_target) {
  for (const auto& r : rows) os << to_json(r, with_target).dump() << '\n';
}

int TraceTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return static_cast<int>(c);
  return -1;
}

TraceTable read_trace_csv(std::istream& is) {
  TraceTable t;
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty trace file");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const std::string cell =
          line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (cell.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end != cell.c_str() + cell.size())
          throw ParseError("bad number '" + cell + "'", lineno, start + 1);
        row.push_back(v);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) + " fields, got " +
                           std::to_string(row.size()),
                       lineno, 1);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace adapd
