#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mmvlab/model.hpp"

namespace mmvlab {

/// Running first and second moments of up to two path features.
struct FeatureMoments {
  std::size_t n = 0;
  std::array<double, 2> sum{0.0, 0.0};
  std::array<double, 3> sq{0.0, 0.0, 0.0};  // f0 f0, f0 f1, f1 f1

  void add(const FeatureState& s);
  void merge(const FeatureMoments& o);
};

/// Centres and scales the features; constant features and features that
/// are collinear with an earlier one are dropped.
class Standardizer {
 public:
  Standardizer() = default;
  static Standardizer from_moments(const FeatureMoments& m, int n_features);

  int active() const noexcept { return active_; }
  /// Writes active() standardized values into z.
  void apply(const FeatureState& s, double* z) const;
  /// d z_j / d feature, zero for dropped features.
  double slope(int feature) const;
  int slot(int feature) const { return slot_[feature]; }

 private:
  int active_ = 0;
  std::array<int, 2> feature_{0, 0};
  std::array<int, 2> slot_{-1, -1};
  std::array<double, 2> mean_{0.0, 0.0};
  std::array<double, 2> scale_{1.0, 1.0};
};

/// All monomials of total degree <= degree in the active features.
inline constexpr int kMaxDegree = 6;
inline constexpr int kMaxBasis = 28;

class PolynomialBasis {
 public:
  PolynomialBasis(int n_features, int degree);
  int size() const noexcept { return static_cast<int>(exps_.size()); }
  void evaluate(const double* z, double* out) const;

 private:
  int n_features_;
  int degree_;
  std::vector<std::array<int, 2>> exps_;
};

/// Normal-equation sums for several targets sharing one design.
class RegressionAccumulator {
 public:
  RegressionAccumulator() = default;
  RegressionAccumulator(int p, int targets);

  void add(const double* basis, const double* y);
  void merge(const RegressionAccumulator& o);

  int p() const noexcept { return static_cast<int>(xtx_.rows()); }
  int targets() const noexcept { return static_cast<int>(xty_.cols()); }
  std::size_t n() const noexcept { return n_; }
  const Eigen::MatrixXd& xtx() const { return xtx_; }
  const Eigen::MatrixXd& xty() const { return xty_; }
  const Eigen::VectorXd& yty() const { return yty_; }
  const Eigen::VectorXd& ysum() const { return ysum_; }

 private:
  Eigen::MatrixXd xtx_;
  Eigen::MatrixXd xty_;
  Eigen::VectorXd yty_;
  Eigen::VectorXd ysum_;
  std::size_t n_ = 0;
};

/// Fitted conditional expectation at one grid point.
struct SurfaceFit {
  Standardizer standardizer;
  PolynomialBasis basis{0, 0};
  Eigen::VectorXd coef;
  Eigen::MatrixXd inv_xtx;
  double sigma2 = 0.0;
  double r2 = 1.0;
  double condition = 1.0;
  std::size_t n = 0;

  double value(const FeatureState& s) const;
  /// Standard error of the fitted mean at s.
  double se(const FeatureState& s) const;
  /// Central difference of value() in one raw feature.
  double derivative(const FeatureState& s, int feature, double step) const;
};

/// Solves the normal equations of every target. Throws
/// RegressionIllConditioned when cond(X'X) exceeds max_condition.
std::vector<SurfaceFit> fit_surfaces(const RegressionAccumulator& acc, const Standardizer& st,
                                     int degree, double max_condition);

}  // namespace mmvlab
