#pragma once

#include <cmath>
#include <cstdint>

#include "adapd/rng.hpp"
#include "adapd/types.hpp"

namespace testutil {

inline adapd::Matrix random_matrix(int rows, int cols, std::uint64_t seed, double sd = 1.0) {
  adapd::CounterRng rng(seed, "test-matrix");
  adapd::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sd);
  return m;
}

inline adapd::Vector random_vector(int n, std::uint64_t seed, double sd = 1.0) {
  return random_matrix(n, 1, seed, sd).col(0);
}

inline adapd::Matrix consensus(const adapd::Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return mean.replicate(x.rows(), 1);
}

/// |a - b| <= tol * max(1, |a|, |b|)
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace testutil
