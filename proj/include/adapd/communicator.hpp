#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adapd/topology.hpp"
#include "adapd/types.hpp"

namespace adapd {

enum class MixMode { Plain, Chebyshev, Power };

std::string to_string(MixMode m);
MixMode mix_mode_from_string(const std::string& s);

/// Degree-R scaled Chebyshev polynomial of W applied to A0.
///
/// mu_0 = 1, mu_1 = 1/rho, mu_{r+1} = (2/rho) mu_r - mu_{r-1};
/// A^1 = W A^0, A^{r+1} = (2 mu_r / (rho mu_{r+1})) W A^r - (mu_{r-1}/mu_{r+1}) A^{r-1}.
/// Output is A^R. rho = 0 returns the exact row average.
Matrix chebyshev_mix(const MixingMatrix& w, const Matrix& a0, int degree);

/// Default MC degree ceil(2 / sqrt(1 - rho)).
int default_mc_degree(double rho);

/// Bound on the contraction factor of the MC operator: 2 (1 - sqrt(1 - rho))^R for
/// Chebyshev, rho^R for the matrix power, rho for plain mixing.
double effective_rho(double rho, MixMode mode, int degree);

/// Synchronous neighbor exchange. Every product is computed row by row from
/// each agent's own weights and its neighbors' rows, i.e. what agent i can
/// form after one round. Counts rounds.
class Communicator {
 public:
  Communicator(MixingMatrix w, MixMode mode = MixMode::Plain, int degree = 1);

  const MixingMatrix& mixing() const { return w_; }
  MixMode mode() const { return mode_; }
  int degree() const { return degree_; }
  /// Rounds consumed by one call of apply().
  int cost() const { return mode_ == MixMode::Plain ? 1 : degree_; }
  long rounds() const { return rounds_; }

  /// One plain W product via neighbor sums; one round.
  Matrix mix_once(const Matrix& a);
  /// The configured operator P (W, Chebyshev polynomial, or W^R); cost() rounds.
  Matrix apply(const Matrix& a);
  /// sum_{j in N_i} (a_i - a_j) over the unweighted graph of W; one round.
  Matrix laplacian_apply(const Matrix& a);

  /// Dense matrix of the configured operator (no rounds counted).
  Matrix dense_operator() const;

  /// Agents j != i with w_ij != 0.
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }

 private:
  Matrix neighbor_sum(const Matrix& a) const;
  Matrix apply_uncounted(const Matrix& a) const;

  MixingMatrix w_;
  MixMode mode_;
  int degree_;
  long rounds_ = 0;
  std::vector<std::vector<int>> neighbors_;
};

}  // namespace adapd
