#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adapd/types.hpp"
#include "json.hpp"

namespace adapd {

/// Undirected simple graph over agents 0..n-1.
class Graph {
 public:
  using Edge = std::pair<int, int>;

  Graph() = default;
  /// Throws InvalidTopologyError on self-loops, duplicates or out-of-range ends.
  Graph(int n_agents, const std::vector<Edge>& edges);

  int n_agents() const { return n_; }
  /// Edges with first < second, lexicographically sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }
  int degree(int i) const { return static_cast<int>(neighbors_[i].size()); }
  int max_degree() const;
  bool has_edge(int i, int j) const;
  bool is_connected() const;

  /// Combinatorial Laplacian D - A.
  Matrix laplacian() const;

  static Graph ring(int n);
  static Graph path(int n);
  static Graph star(int n);
  static Graph complete(int n);

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

enum class MixingSource { Laplacian, Metropolis, Ring, Power, Averaging, Custom };

std::string to_string(MixingSource s);

/// Symmetric mixing matrix with a cached eigendecomposition.
///
/// Instances are immutable; the decomposition is shared between copies.
class MixingMatrix {
 public:
  /// Wraps an arbitrary dense matrix. No mixing-matrix checks are applied here;
  /// use validate_mixing() for that.
  static MixingMatrix from_dense(Matrix w, MixingSource source, int power = 1);

  const Matrix& w() const { return w_; }
  int n() const { return static_cast<int>(w_.rows()); }
  MixingSource source() const { return source_; }
  int power() const { return power_; }
  /// max(|lambda_2|, |lambda_N|) as measured on the stored matrix.
  double rho() const { return rho_; }
  /// Eigenvalues in ascending order.
  const Vector& eigenvalues() const { return eig_->values; }
  const Matrix& eigenvectors() const { return eig_->vectors; }

  /// Symmetric PSD square root of I - W (eigenvalues of I - W below zero by at
  /// most 1e-12 are clamped).
  Matrix sqrt_i_minus_w() const;

  std::string tag() const;

 private:
  struct Eigen_ {
    Vector values;
    Matrix vectors;
  };
  MixingMatrix() = default;

  Matrix w_;
  MixingSource source_ = MixingSource::Custom;
  int power_ = 1;
  double rho_ = 0.0;
  std::shared_ptr<const Eigen_> eig_;
};

/// Cycle graph with the given self weight; each neighbor gets (1-self)/2.
MixingMatrix build_ring(int n, double self_weight);

/// G(n, p). Whole-graph resampling until connected, up to 100 attempts.
Graph build_erdos_renyi(int n, double p, std::uint64_t rng_seed);

struct GeometricGraph {
  Graph graph;
  /// n x 2, uniform on [-1, 1]^2.
  Matrix positions;
};

/// Random geometric graph: edge iff Euclidean distance <= radius.
GeometricGraph build_geometric(int n, double radius, std::uint64_t rng_seed);

inline constexpr int kConnectivityRetryBudget = 100;

/// W = I - L / tau. Default tau = max degree + 1.
MixingMatrix laplacian_weights(const Graph& g, std::optional<double> tau = std::nullopt);

/// Metropolis weights 1 / (max(|N_i|, |N_j|) + eps) on edges.
MixingMatrix metropolis_weights(const Graph& g, double eps = 1.0);

/// (1/N) e e^T.
MixingMatrix averaging_matrix(int n);

/// Validated spectral gap. Throws DegenerateSpectrumError when rho >= 1 - 1e-12.
double spectral_gap(const MixingMatrix& w);

/// Dense W^R, tagged power(R). Its rho is measured on the product and
/// matches rho(W)^R to rounding.
MixingMatrix power_matrix(const MixingMatrix& w, int r);

struct ValidationReport {
  bool decentralized = false;  // sparsity pattern agrees with the graph
  bool symmetric = false;
  bool null_space = false;  // rows sum to 1 and eigenvalue 1 is simple
  bool spectral = false;    // eigenvalues in (-1, 1]

  double symmetry_deviation = 0.0;
  double max_row_sum_deviation = 0.0;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  int unit_eigenvalue_multiplicity = 0;
  int pattern_mismatches = 0;

  bool all_pass() const { return decentralized && symmetric && null_space && spectral; }
  nlohmann::json to_json() const;
};

inline constexpr double kSymmetryTol = 1e-12;
inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kEigenTol = 1e-10;

ValidationReport validate_mixing(const MixingMatrix& w, const Graph& g);

/// Provenance descriptor: agent count, edge list, weight triples, rho.
nlohmann::json to_json(const Graph& g, const MixingMatrix& w);

}  // namespace adapd
