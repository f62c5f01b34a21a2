#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mflq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A collection of matrix blocks integrated jointly as one ODE state.
using BlockVec = std::vector<Mat>;

inline double inf_norm(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline BlockVec& axpy(BlockVec& y, double a, const BlockVec& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
  return y;
}

}  // namespace mflq
