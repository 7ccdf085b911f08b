#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adapd/topology.hpp"
#include "adapd/types.hpp"
#include "json.hpp"

namespace adapd {

/// Per-agent objective oracle. Agent i owns f_i; the network objective is the
/// average (1/N) sum_i f_i. Implementations are immutable and reentrant.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string kind() const = 0;
  virtual int n_agents() const = 0;
  virtual int dim() const = 0;

  virtual double value(int i, const Vector& x) const = 0;
  virtual Vector gradient(int i, const Vector& x) const = 0;

  /// Lipschitz constant of grad f_i when one is known globally.
  virtual std::optional<double> smoothness(int /*i*/) const { return std::nullopt; }

  /// Mini-batch gradient over local sample indices in [0, local_samples(i)).
  virtual bool supports_batch() const { return false; }
  virtual int local_samples(int /*i*/) const { return 0; }
  virtual Vector batch_gradient(int i, const Vector& x,
                                const std::vector<std::size_t>& batch) const;

  /// Closed-form minimizer of f_i(x) + <y, x - x0> + |x - x0|^2 / (2 eta), when
  /// the problem has one.
  virtual std::optional<Vector> solve_subproblem(int /*i*/, const Vector& /*y*/,
                                                 const Vector& /*x0*/,
                                                 double /*eta*/) const {
    return std::nullopt;
  }

  /// Analytic lower bound on f, when known.
  virtual std::optional<double> lower_bound() const { return std::nullopt; }

  /// max_i L_i, or nullopt if any agent lacks a hint.
  std::optional<double> max_smoothness() const;
  /// Rows grad f_i(x_i).
  Matrix stacked_gradient(const Matrix& x) const;
  /// sum_i f_i(x_i).
  double sum_value(const Matrix& x) const;
  /// (1/N) sum_i grad f_i(x).
  Vector mean_gradient(const Vector& x) const;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// ------------------------------------------------------------ quadratic

/// f_i(x) = (c_i / 2) |x - a_i|^2, c_i = 1 unless weights are given.
class QuadraticConsensus final : public Objective {
 public:
  explicit QuadraticConsensus(Matrix targets, std::optional<Vector> weights = std::nullopt);

  std::string kind() const override { return "quadratic"; }
  int n_agents() const override { return static_cast<int>(targets_.rows()); }
  int dim() const override { return static_cast<int>(targets_.cols()); }
  double value(int i, const Vector& x) const override;
  Vector gradient(int i, const Vector& x) const override;
  std::optional<double> smoothness(int i) const override { return weights_[i]; }
  std::optional<Vector> solve_subproblem(int i, const Vector& y, const Vector& x0,
                                         double eta) const override;
  std::optional<double> lower_bound() const override { return 0.0; }

  const Matrix& targets() const { return targets_; }
  const Vector& weights() const { return weights_; }
  /// Minimizer of the average: sum c_i a_i / sum c_i.
  Vector minimizer() const;

 private:
  Matrix targets_;
  Vector weights_;
};

std::shared_ptr<QuadraticConsensus> quadratic_consensus(
    Matrix targets, std::optional<Vector> weights = std::nullopt);

// ------------------------------------------------------------- datasets

struct BinaryDataset {
  Matrix features;  // m x p
  Vector labels;    // m, entries in {-1, +1}
  /// Half-open row ranges [begin, end), one per agent. Empty if unpartitioned.
  std::vector<std::pair<int, int>> partition;

  int n_samples() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

/// LIBSVM text: `label idx:val idx:val ...` with 1-based indices. Labels
/// +1/1 map to +1 and -1/0 map to -1. Blank lines and `#` comments are
/// skipped. `dim` fixes p; otherwise p is the largest index seen.
BinaryDataset parse_libsvm(const std::string& path, std::optional<int> dim = std::nullopt);
BinaryDataset parse_libsvm(std::istream& in, std::optional<int> dim = std::nullopt);

/// Shuffles rows with the data-partition stream and cuts them into near-equal
/// contiguous blocks; the first m mod N blocks get one extra row.
BinaryDataset partition_uniform(const BinaryDataset& data, int n_agents, std::uint64_t seed);

/// Gaussian features, labels drawn from a logistic model with a Gaussian
/// weight vector. Unpartitioned.
BinaryDataset synthetic_logistic_data(int m, int p, std::uint64_t seed);

// ------------------------------------------------------------- logistic

/// f_i(x) = (1/m_i) sum_j log(1 + exp(-b_j <x, a_j>)) + alpha sum_d x_d^2 / (1 + x_d^2).
class LogisticNonconvex final : public Objective {
 public:
  LogisticNonconvex(const BinaryDataset& data, double alpha);

  std::string kind() const override { return "logistic"; }
  int n_agents() const override { return static_cast<int>(blocks_.size()); }
  int dim() const override { return p_; }
  double value(int i, const Vector& x) const override;
  Vector gradient(int i, const Vector& x) const override;
  /// (1/4) sigma_max(A_i)^2 / m_i + 2 alpha.
  std::optional<double> smoothness(int i) const override { return lipschitz_[i]; }
  bool supports_batch() const override { return true; }
  int local_samples(int i) const override {
    return static_cast<int>(blocks_[i].features.rows());
  }
  Vector batch_gradient(int i, const Vector& x,
                        const std::vector<std::size_t>& batch) const override;
  std::optional<double> lower_bound() const override { return 0.0; }

  double alpha() const { return alpha_; }

 private:
  struct Block {
    Matrix features;
    Vector labels;
  };
  Vector reg_gradient(const Vector& x) const;
  double reg_value(const Vector& x) const;

  std::vector<Block> blocks_;
  std::vector<double> lipschitz_;
  double alpha_;
  int p_;
};

std::shared_ptr<LogisticNonconvex> logistic_nonconvex(const BinaryDataset& data, double alpha);

// --------------------------------------------------------- localization

struct LocalizationInstance {
  Matrix positions;     // N x 2, omega_i
  Matrix targets;       // N_T x 2, x*[t]
  Matrix measurements;  // N x N_T, xi_{i,t}
  Matrix noise;         // N x N_T, e_{i,t}
  double sigma2 = 0.0;

  int n_agents() const { return static_cast<int>(positions.rows()); }
  int n_targets() const { return static_cast<int>(targets.rows()); }
  /// Targets stacked as (x*[1]; ...; x*[N_T]), length 2 N_T.
  Vector stacked_targets() const;
};

/// Positions from build_geometric, target coordinates N(0, 0.1), noise
/// N(0, sigma2) from the noise stream.
std::pair<Graph, LocalizationInstance> generate_localization_instance(
    int n, int n_targets, double sigma2, std::uint64_t seed, double graph_radius);

/// Targets and noise for fixed agent positions. generate_localization_instance
/// is build_geometric followed by this with the same seed.
LocalizationInstance localization_instance_on(Matrix positions, int n_targets, double sigma2,
                                              std::uint64_t seed);

nlohmann::json to_json(const LocalizationInstance& inst);
LocalizationInstance localization_from_json(const nlohmann::json& j);

/// f_i(x) = (1/4) sum_t (xi_{i,t} - |x[t] - omega_i|^2)^2. Not globally smooth.
class LocalizationObjective final : public Objective {
 public:
  explicit LocalizationObjective(LocalizationInstance inst);

  std::string kind() const override { return "localization"; }
  int n_agents() const override { return inst_.n_agents(); }
  int dim() const override { return 2 * inst_.n_targets(); }
  double value(int i, const Vector& x) const override;
  Vector gradient(int i, const Vector& x) const override;
  std::optional<double> lower_bound() const override { return 0.0; }

  const LocalizationInstance& instance() const { return inst_; }

 private:
  LocalizationInstance inst_;
};

std::shared_ptr<LocalizationObjective> localization_objective(LocalizationInstance inst);

/// Largest sampled |grad f_i(x) - grad f_i(y)| / |x - y| over `samples` random
/// pairs per agent drawn uniformly from [-box, box]^p, doubled.
double estimate_smoothness(const Objective& f, double box, int samples, std::uint64_t seed);

}  // namespace adapd
