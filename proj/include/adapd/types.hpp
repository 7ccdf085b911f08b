#pragma once

#include <Eigen/Dense>

namespace adapd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace adapd
