#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmvlab/linalg.hpp"
#include "mmvlab/time_grid.hpp"

namespace mmvlab {

enum class Tier { Deterministic, MarkovFactor, PathDependent };

std::string to_string(Tier tier);

/// (A, B, C, D) evaluated at one time and one path state.
struct Coefficients {
  double a = 0.0;
  Vec b;
  Vec c;
  Mat d;
};

/// Path state that the coefficients depend on. MarkovFactor keeps the
/// factor value in slot 0; PathDependent keeps W^1_t in slot 0 and the
/// time-averaged integral (1/T) * int_0^t W^1_s ds in slot 1.
struct FeatureState {
  std::array<double, 2> value{0.0, 0.0};
};

struct ModelLimits {
  double delta = 1e-4;      // D D' >= delta I
  double coef_cap = 10.0;   // |B|, |C|, |D| entries
  double a_max = 50.0;      // |A| clamp for the stochastic tiers
};

/// A(t) = a0 + a1 t, and likewise for B, C, D.
struct DeterministicSpec {
  double a0 = 0.0;
  double a1 = 0.0;
  Vec b0, b1, c0, c1;
  Mat d0, d1;
};

/// Ornstein-Uhlenbeck factor df = kappa (mean - f) dt + vol' dW, f(0) = f0.
struct FactorSpec {
  double kappa = 0.0;
  double mean = 0.0;
  Vec vol;
  double f0 = 0.0;
};

/// A_t = a0 + a_w W^1_t + a_s S_t,  B_t = b0 + b_w * tanh(W^1_t).
struct PathDependentSpec {
  double a0 = 0.0;
  double a_w = 0.0;
  double a_s = 0.0;
  Vec b0;
  Vec b_w;
};

class CoefficientModel {
 public:
  static CoefficientModel deterministic(DeterministicSpec spec, ModelLimits limits = {});
  /// Deterministic tier driven by an arbitrary function of time.
  static CoefficientModel deterministic(int n, std::function<Coefficients(double)> fn,
                                        ModelLimits limits = {});
  /// A is the factor; B, C, D are constant.
  static CoefficientModel markov_factor(FactorSpec factor, Vec b, Vec c, Mat d,
                                        ModelLimits limits = {});
  /// C, D are constant; A and B follow PathDependentSpec.
  static CoefficientModel path_dependent(PathDependentSpec spec, Vec c, Mat d,
                                         ModelLimits limits = {});

  Tier tier() const noexcept { return tier_; }
  int dim() const noexcept { return n_; }
  const ModelLimits& limits() const noexcept { return limits_; }
  void set_limits(const ModelLimits& limits) { limits_ = limits; }

  int feature_count() const noexcept;
  FeatureState initial_features() const;
  /// One step of the feature dynamics driven by the P-Brownian
  /// increment dw over [t, t + dt]. `horizon` normalises the running average.
  void advance(FeatureState& state, double t, double dt, double horizon, const Vec& dw) const;
  /// Coefficients at (t, state); |A| is clamped at limits().a_max in the
  /// stochastic tiers and *cap_hit reports whether the clamp was active.
  Coefficients evaluate(double t, const FeatureState& state, bool* cap_hit = nullptr) const;
  /// Loading vector l_j in dF_j = (...) dt + l_j' dW.
  Vec feature_loading(int j) const;

  const std::optional<DeterministicSpec>& deterministic_spec() const { return det_; }
  const std::optional<FactorSpec>& factor_spec() const { return factor_; }
  const std::optional<PathDependentSpec>& path_spec() const { return path_; }
  bool has_custom_function() const { return static_cast<bool>(custom_); }
  /// Constant B, C, D of the MarkovFactor tier (C, D for PathDependent).
  const Vec& const_b() const { return b_; }
  const Vec& const_c() const { return c_; }
  const Mat& const_d() const { return d_; }

 private:
  CoefficientModel() = default;

  Tier tier_ = Tier::Deterministic;
  int n_ = 1;
  ModelLimits limits_{};
  std::optional<DeterministicSpec> det_;
  std::function<Coefficients(double)> custom_;
  std::optional<FactorSpec> factor_;
  std::optional<PathDependentSpec> path_;
  Vec b_, c_;
  Mat d_;
};

enum class ClaimKind { Discrete, LognormalTruncated };

/// Claim-size law nu on (0, y_max].
struct ClaimDistribution {
  ClaimKind kind = ClaimKind::Discrete;
  std::vector<std::pair<double, double>> atoms;  // (y, probability)
  double mu = 0.0;
  double sigma = 1.0;
  double y_max = std::numeric_limits<double>::infinity();

  static ClaimDistribution discrete(std::vector<std::pair<double, double>> atoms);
  static ClaimDistribution lognormal_truncated(double mu, double sigma, double y_max);

  /// E[y^k] under nu for k = 1, 2.
  double moment(int k) const;
  double support_max() const;
  /// Inverse-cdf sample from a uniform in (0, 1).
  double sample(double uniform) const;
};

struct JumpModel {
  double intensity = 1.0;       // lambda
  ClaimDistribution claims;     // nu
  double premium_loading = 0.0; // b
  double drift_offset = 0.0;    // a

  double m1() const { return claims.moment(1); }
  double m2() const { return claims.moment(2); }
};

struct RegressionSpec {
  int degree = 3;
  double max_condition = 1e12;
};

/// Interest-rate process r of the portfolio market.
struct RateSpec {
  enum class Kind { Constant, Linear, Vasicek };
  Kind kind = Kind::Constant;
  double r0 = 0.0;
  double r1 = 0.0;
  FactorSpec vasicek{};
};

struct PortfolioMarket {
  RateSpec r;
  Vec mu;
  Mat sigma;
};

struct ScenarioConfig {
  double x = 1.0;
  double theta = 1.0;
  TimeGrid grid{1.0, 250};
  CoefficientModel model = CoefficientModel::deterministic(DeterministicSpec{
      0.0, 0.0, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Mat::Identity(1, 1),
      Mat::Zero(1, 1)});
  std::optional<JumpModel> jump;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 42;
  RegressionSpec regression{};
  bool antithetic = false;
  /// Present when the scenario was written in (r, mu, sigma) form.
  std::optional<PortfolioMarket> market;
};

struct Violation {
  std::string rule;
  std::string location;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(const std::string& rule) const;
};

/// Checks the standing assumptions. Stochastic tiers are sampled on
/// `sample_paths` seeded paths at every grid point.
ValidationReport validate_scenario(const ScenarioConfig& cfg, std::size_t sample_paths = 64);

/// Minimum eigenvalue of D D'.
double min_eig_ddt(const Mat& d);

/// (A, B, C, D) := (r, mu, 0, sigma).
CoefficientModel portfolio_to_generic(const PortfolioMarket& market, ModelLimits limits = {});
/// Inverse of portfolio_to_generic; throws DomainError when C is not zero or
/// the model was not produced from a rate specification.
PortfolioMarket generic_to_portfolio(const CoefficientModel& model);

}  // namespace mmvlab
