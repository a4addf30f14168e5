#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mfp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// one N x d (or N x n) block per time knot
using Path = std::vector<Mat>;

} // namespace mfp
