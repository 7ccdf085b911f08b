#include "adapd/communicator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "adapd/errors.hpp"

namespace adapd {

std::string to_string(MixMode m) {
  switch (m) {
    case MixMode::Plain: return "plain";
    case MixMode::Chebyshev: return "chebyshev";
    case MixMode::Power: return "power";
  }
  return "plain";
}

MixMode mix_mode_from_string(const std::string& s) {
  if (s == "plain") return MixMode::Plain;
  if (s == "chebyshev") return MixMode::Chebyshev;
  if (s == "power") return MixMode::Power;
  throw ConfigError("unknown mixing mode '" + s + "' (expected plain, chebyshev or power)");
}

namespace {

Matrix row_average(const Matrix& a) {
  const Eigen::RowVectorXd mean = a.colwise().mean();
  return mean.replicate(a.rows(), 1);
}

// The recurrence is run on ratios q_r = mu_{r-1} / mu_r; mu_r itself grows
// like (1/rho)^r and overflows for small rho and large R.
Matrix chebyshev_recurrence(const std::function<Matrix(const Matrix&)>& mix, double rho,
                            const Matrix& a0, int degree) {
  if (degree < 1) throw InvalidParameterError("Chebyshev degree must be >= 1");
  if (rho >= 1.0) throw DegenerateSpectrumError("Chebyshev mixing needs rho < 1");
  if (rho == 0.0) return row_average(a0);

  Matrix prev = a0;
  Matrix cur = mix(a0);
  double q = rho;  // mu_0 / mu_1
  for (int r = 1; r < degree; ++r) {
    const double q_next = 1.0 / (2.0 / rho - q);  // mu_r / mu_{r+1}
    Matrix next = (2.0 / rho * q_next) * mix(cur) - (q * q_next) * prev;
    prev = std::move(cur);
    cur = std::move(next);
    q = q_next;
  }
  return cur;
}

}  // namespace

Matrix chebyshev_mix(const MixingMatrix& w, const Matrix& a0, int degree) {
  if (a0.rows() != w.n()) throw DimensionMismatchError("A0 rows must equal N");
  const Matrix& wm = w.w();
  return chebyshev_recurrence([&](const Matrix& a) -> Matrix { return wm * a; }, w.rho(), a0,
                              degree);
}

int default_mc_degree(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw DegenerateSpectrumError("MC degree needs rho in [0,1)");
  return std::max(1, static_cast<int>(std::ceil(2.0 / std::sqrt(1.0 - rho) - 1e-12)));
}

double effective_rho(double rho, MixMode mode, int degree) {
  switch (mode) {
    case MixMode::Plain: return rho;
    case MixMode::Power: return std::pow(rho, degree);
    case MixMode::Chebyshev: return 2.0 * std::pow(1.0 - std::sqrt(1.0 - rho), degree);
  }
  return rho;
}

Communicator::Communicator(MixingMatrix w, MixMode mode, int degree)
    : w_(std::move(w)), mode_(mode), degree_(degree) {
  if (degree_ < 1) throw InvalidParameterError("communication degree must be >= 1");
  if (mode_ == MixMode::Plain) degree_ = 1;
  if (mode_ == MixMode::Chebyshev && w_.rho() >= 1.0)
    throw DegenerateSpectrumError("Chebyshev mixing needs rho < 1");
  const Matrix& m = w_.w();
  neighbors_.resize(w_.n());
  for (int i = 0; i < w_.n(); ++i)
    for (int j = 0; j < w_.n(); ++j)
      if (j != i && m(i, j) != 0.0) neighbors_[i].push_back(j);
}

Matrix Communicator::neighbor_sum(const Matrix& a) const {
  if (a.rows() != w_.n()) throw DimensionMismatchError("operand rows must equal N");
  const Matrix& m = w_.w();
  Matrix out(a.rows(), a.cols());
  for (int i = 0; i < w_.n(); ++i) {
    Eigen::RowVectorXd acc = m(i, i) * a.row(i);
    for (int j : neighbors_[i]) acc += m(i, j) * a.row(j);
    out.row(i) = acc;
  }
  return out;
}

Matrix Communicator::apply_uncounted(const Matrix& a) const {
  switch (mode_) {
    case MixMode::Plain: return neighbor_sum(a);
    case MixMode::Power: {
      Matrix out = a;
      for (int r = 0; r < degree_; ++r) out = neighbor_sum(out);
      return out;
    }
    case MixMode::Chebyshev:
      return chebyshev_recurrence([this](const Matrix& x) { return neighbor_sum(x); }, w_.rho(),
                                  a, degree_);
  }
  return neighbor_sum(a);
}

Matrix Communicator::mix_once(const Matrix& a) {
  ++rounds_;
  return neighbor_sum(a);
}

Matrix Communicator::apply(const Matrix& a) {
  rounds_ += cost();
  return apply_uncounted(a);
}

Matrix Communicator::laplacian_apply(const Matrix& a) {
  if (a.rows() != w_.n()) throw DimensionMismatchError("operand rows must equal N");
  ++rounds_;
  Matrix out(a.rows(), a.cols());
  for (int i = 0; i < w_.n(); ++i) {
    Eigen::RowVectorXd acc = static_cast<double>(neighbors_[i].size()) * a.row(i);
    for (int j : neighbors_[i]) acc -= a.row(j);
    out.row(i) = acc;
  }
  return out;
}

Matrix Communicator::dense_operator() const {
  return apply_uncounted(Matrix::Identity(w_.n(), w_.n()));
}

}  // namespace adapd
