#include "adapd/topology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include "adapd/errors.hpp"
#include "adapd/rng.hpp"

namespace adapd {

// ---------------------------------------------------------------- Graph

Graph::Graph(int n_agents, const std::vector<Edge>& edges) : n_(n_agents) {
  if (n_agents < 1) throw InvalidTopologyError("graph needs at least one agent");
  std::set<Edge> seen;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_ || b >= n_)
      throw InvalidTopologyError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                 ") out of range");
    if (a == b) throw InvalidTopologyError("self-loop at agent " + std::to_string(a));
    const Edge e{std::min(a, b), std::max(a, b)};
    if (!seen.insert(e).second)
      throw InvalidTopologyError("duplicate edge (" + std::to_string(e.first) + "," +
                                 std::to_string(e.second) + ")");
  }
  edges_.assign(seen.begin(), seen.end());
  neighbors_.assign(n_, {});
  for (auto [a, b] : edges_) {
    neighbors_[a].push_back(b);
    neighbors_[b].push_back(a);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
}

int Graph::max_degree() const {
  int d = 0;
  for (int i = 0; i < n_; ++i) d = std::max(d, degree(i));
  return d;
}

bool Graph::has_edge(int i, int j) const {
  const auto& nb = neighbors_[i];
  return std::binary_search(nb.begin(), nb.end(), j);
}

bool Graph::is_connected() const {
  if (n_ == 0) return false;
  std::vector<char> seen(n_, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : neighbors_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n_;
}

Matrix Graph::laplacian() const {
  Matrix l = Matrix::Zero(n_, n_);
  for (auto [a, b] : edges_) {
    l(a, b) = -1.0;
    l(b, a) = -1.0;
  }
  for (int i = 0; i < n_; ++i) l(i, i) = degree(i);
  return l;
}

Graph Graph::ring(int n) {
  if (n < 3) throw InvalidTopologyError("ring needs n >= 3, got " + std::to_string(n));
  std::vector<Edge> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return Graph(n, e);
}

Graph Graph::path(int n) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, e);
}

Graph Graph::star(int n) {
  std::vector<Edge> e;
  for (int i = 1; i < n; ++i) e.emplace_back(0, i);
  return Graph(n, e);
}

Graph Graph::complete(int n) {
  std::vector<Edge> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, e);
}

// ---------------------------------------------------------- MixingMatrix

std::string to_string(MixingSource s) {
  switch (s) {
    case MixingSource::Laplacian: return "laplacian";
    case MixingSource::Metropolis: return "metropolis";
    case MixingSource::Ring: return "ring";
    case MixingSource::Power: return "power";
    case MixingSource::Averaging: return "averaging";
    case MixingSource::Custom: return "custom";
  }
  return "custom";
}

MixingMatrix MixingMatrix::from_dense(Matrix w, MixingSource source, int power) {
  if (w.rows() != w.cols() || w.rows() == 0)
    throw DimensionMismatchError("mixing matrix must be square and non-empty");
  MixingMatrix m;
  const auto n = w.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(w);
  auto eig = std::make_shared<Eigen_>();
  eig->values = es.eigenvalues();
  eig->vectors = es.eigenvectors();
  m.eig_ = std::move(eig);

  const Matrix centered = w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::SelfAdjointEigenSolver<Matrix> ec(centered, Eigen::EigenvaluesOnly);
  m.rho_ = ec.eigenvalues().cwiseAbs().maxCoeff();

  m.w_ = std::move(w);
  m.source_ = source;
  m.power_ = power;
  return m;
}

Matrix MixingMatrix::sqrt_i_minus_w() const {
  const Vector& lam = eig_->values;
  Vector root(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    double v = 1.0 - lam[i];
    if (v < 0.0 && v >= -1e-12) v = 0.0;
    root[i] = std::sqrt(std::max(v, 0.0));
  }
  const Matrix& q = eig_->vectors;
  return q * root.asDiagonal() * q.transpose();
}

std::string MixingMatrix::tag() const {
  if (source_ == MixingSource::Power) return "power(" + std::to_string(power_) + ")";
  return to_string(source_);
}

// --------------------------------------------------------- constructors

namespace {
void require_connected(const Graph& g, const char* who) {
  if (!g.is_connected())
    throw InvalidTopologyError(std::string(who) + ": graph is not connected");
}
}  // namespace

MixingMatrix build_ring(int n, double self_weight) {
  if (n < 3) throw InvalidTopologyError("ring needs n >= 3, got " + std::to_string(n));
  if (!(self_weight > 0.0 && self_weight < 1.0))
    throw InvalidParameterError("ring self weight must lie in (0,1)");
  const double nb = (1.0 - self_weight) / 2.0;
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    w(i, i) = self_weight;
    w(i, (i + 1) % n) += nb;
    w(i, (i + n - 1) % n) += nb;
  }
  return MixingMatrix::from_dense(std::move(w), MixingSource::Ring);
}

Graph build_erdos_renyi(int n, double p, std::uint64_t rng_seed) {
  if (n < 2) throw InvalidTopologyError("Erdos-Renyi graph needs n >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw InvalidParameterError("edge probability must lie in (0,1]");
  CounterRng rng(rng_seed, streams::kTopology);
  for (int attempt = 1; attempt <= kConnectivityRetryBudget; ++attempt) {
    std::vector<Graph::Edge> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < p) edges.emplace_back(i, j);
    Graph g(n, edges);
    if (g.is_connected()) return g;
  }
  throw TopologyGenerationError("Erdos-Renyi graph never connected", kConnectivityRetryBudget);
}

GeometricGraph build_geometric(int n, double radius, std::uint64_t rng_seed) {
  if (n < 2) throw InvalidTopologyError("geometric graph needs n >= 2");
  if (!(radius > 0.0)) throw InvalidParameterError("radius must be positive");
  CounterRng rng(rng_seed, streams::kTopology);
  for (int attempt = 1; attempt <= kConnectivityRetryBudget; ++attempt) {
    Matrix pos(n, 2);
    for (int i = 0; i < n; ++i) {
      pos(i, 0) = rng.uniform(-1.0, 1.0);
      pos(i, 1) = rng.uniform(-1.0, 1.0);
    }
    std::vector<Graph::Edge> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if ((pos.row(i) - pos.row(j)).norm() <= radius) edges.emplace_back(i, j);
    Graph g(n, edges);
    if (g.is_connected()) return {std::move(g), std::move(pos)};
  }
  throw TopologyGenerationError("geometric graph never connected", kConnectivityRetryBudget);
}

MixingMatrix laplacian_weights(const Graph& g, std::optional<double> tau) {
  require_connected(g, "laplacian_weights");
  const Matrix l = g.laplacian();
  const int n = g.n_agents();
  if (tau) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(l, Eigen::EigenvaluesOnly);
    const double lam_max = es.eigenvalues().maxCoeff();
    if (!(*tau > 0.5 * lam_max + 1e-12)) {
      std::ostringstream os;
      os << "tau = " << *tau << " must exceed lambda_1(L)/2 = " << 0.5 * lam_max
         << " (lambda_1(L) = " << lam_max << ")";
      throw InvalidParameterError(os.str());
    }
  }
  const double t = tau.value_or(static_cast<double>(g.max_degree()) + 1.0);
  Matrix w = Matrix::Identity(n, n) - l / t;
  return MixingMatrix::from_dense(std::move(w), MixingSource::Laplacian);
}

MixingMatrix metropolis_weights(const Graph& g, double eps) {
  require_connected(g, "metropolis_weights");
  if (!(eps > 0.0)) throw InvalidParameterError("metropolis eps must be positive");
  const int n = g.n_agents();
  Matrix w = Matrix::Zero(n, n);
  for (auto [a, b] : g.edges()) {
    const double v = 1.0 / (std::max(g.degree(a), g.degree(b)) + eps);
    w(a, b) = v;
    w(b, a) = v;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j : g.neighbors(i)) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return MixingMatrix::from_dense(std::move(w), MixingSource::Metropolis);
}

MixingMatrix averaging_matrix(int n) {
  return MixingMatrix::from_dense(Matrix::Constant(n, n, 1.0 / n), MixingSource::Averaging);
}

double spectral_gap(const MixingMatrix& w) {
  const double rho = w.rho();
  if (rho >= 1.0 - 1e-12) {
    std::ostringstream os;
    os << "spectral gap rho = " << rho
       << " is not below 1 (disconnected graph or periodic structure)";
    throw DegenerateSpectrumError(os.str());
  }
  return rho;
}

MixingMatrix power_matrix(const MixingMatrix& w, int r) {
  if (r < 1) throw InvalidParameterError("matrix power needs R >= 1");
  if (r == 1) return w;
  Matrix acc = w.w();
  for (int i = 1; i < r; ++i) acc = acc * w.w();
  // Re-symmetrize: products of a symmetric matrix drift by rounding.
  acc = 0.5 * (acc + acc.transpose()).eval();
  return MixingMatrix::from_dense(std::move(acc), MixingSource::Power, r * w.power());
}

ValidationReport validate_mixing(const MixingMatrix& w, const Graph& g) {
  if (w.n() != g.n_agents())
    throw DimensionMismatchError("mixing matrix is " + std::to_string(w.n()) +
                                 "x" + std::to_string(w.n()) + " but graph has " +
                                 std::to_string(g.n_agents()) + " agents");
  ValidationReport r;
  const Matrix& m = w.w();
  const int n = w.n();

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool edge = g.has_edge(i, j);
      if (edge ? !(m(i, j) > 0.0) : m(i, j) != 0.0) ++r.pattern_mismatches;
    }
  r.decentralized = r.pattern_mismatches == 0;

  r.symmetry_deviation = (m - m.transpose()).cwiseAbs().maxCoeff();
  r.symmetric = r.symmetry_deviation <= kSymmetryTol;

  r.max_row_sum_deviation = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const Vector& lam = w.eigenvalues();
  r.min_eigenvalue = lam.minCoeff();
  r.max_eigenvalue = lam.maxCoeff();
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (std::abs(lam[i] - 1.0) <= kEigenTol) ++r.unit_eigenvalue_multiplicity;
  r.null_space = r.max_row_sum_deviation <= kRowSumTol && r.unit_eigenvalue_multiplicity == 1;

  r.spectral = r.min_eigenvalue > -1.0 + kEigenTol && r.max_eigenvalue <= 1.0 + kEigenTol;
  return r;
}

nlohmann::json ValidationReport::to_json() const {
  return {
      {"decentralized", decentralized},
      {"symmetric", symmetric},
      {"null_space", null_space},
      {"spectral", spectral},
      {"all_pass", all_pass()},
      {"symmetry_deviation", symmetry_deviation},
      {"max_row_sum_deviation", max_row_sum_deviation},
      {"min_eigenvalue", min_eigenvalue},
      {"max_eigenvalue", max_eigenvalue},
      {"unit_eigenvalue_multiplicity", unit_eigenvalue_multiplicity},
      {"pattern_mismatches", pattern_mismatches},
  };
}

nlohmann::json to_json(const Graph& g, const MixingMatrix& w) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [a, b] : g.edges()) edges.push_back({a, b});
  nlohmann::json weights = nlohmann::json::array();
  const Matrix& m = w.w();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) weights.push_back({i, j, m(i, j)});
  return {{"n_agents", g.n_agents()},
          {"edges", std::move(edges)},
          {"weights", std::move(weights)},
          {"source", w.tag()},
          {"rho", w.rho()}};
}

}  // namespace adapd
