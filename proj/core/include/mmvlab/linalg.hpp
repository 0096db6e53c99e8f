#pragma once

#include <Eigen/Dense>

namespace mmvlab {

/// Largest Brownian dimension supported. Vectors and matrices are sized at
/// run time but never allocate, which keeps the per-path inner loops cheap.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec zero_vec(int n) { return Vec::Zero(n); }

}  // namespace mmvlab
