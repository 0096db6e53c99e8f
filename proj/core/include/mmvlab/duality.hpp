#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmvlab/bsde.hpp"
#include "mmvlab/control.hpp"
#include "mmvlab/paths.hpp"

namespace mmvlab {

/// Y0 - 1 at or below this raises DegenerateMarket (exact tiers).
inline constexpr double kDegenerateTol = 1e-10;

/// Y0^{-1} (h0 x - gamma)^2 - (K - gamma)^2.
double J_value(double k, double gamma, double h0, double y0, double x, double tol = kDegenerateTol);
/// Y0^{-1} (K - h0 x)^2 / (1 - Y0^{-1}).
double F_value(double k, double h0, double y0, double x, double tol = kDegenerateTol);
/// (Y0^{-1} h0 x - K) / (Y0^{-1} - 1), the maximiser of J(K, .).
double gamma_hat(double k, double h0, double y0, double x, double tol = kDegenerateTol);
/// h0 x + (Y0 - 1) / theta.
double K_hat(double h0, double y0, double x, double theta, double tol = kDegenerateTol);
/// K-hat - (theta / 2) F(K-hat), checked against h0 x + (Y0 - 1) / (2 theta).
double mv_value(double h0, double y0, double x, double theta, double tol = kDegenerateTol);

struct SupSearch {
  double gamma = 0.0;
  double value = 0.0;
  int iterations = 0;
};
/// Numerical sup over gamma of J(K, gamma): bracket expansion then Brent.
SupSearch sup_J(double k, double h0, double y0, double x, double tol = kDegenerateTol);

/// (h D')^{-1} [-(phi - Z / Y)(h X - gamma) - X L - h X C].
Vec mv_feedback(double gamma, const BsdePoint& p, const Coefficients& co, double x);

struct MvEmpirical {
  double mean = 0.0;
  double var = 0.0;
  double value = 0.0;
  double se_mean = 0.0;
  double se_var = 0.0;
  double se_value = 0.0;
  std::size_t n = 0;
};
/// Sample mean and variance of terminal wealth and mean - (theta / 2) var,
/// with delta-method standard errors. Non-finite entries are skipped.
MvEmpirical mv_moments(std::span<const double> x_t, double theta);
/// Simulates X under `rule` and returns mv_moments of X_T.
MvEmpirical mv_empirical(const CoefficientModel& model, const ControlRule& rule,
                         const PathBundle& bundle, double x0, double theta,
                         const SimulateOptions& options = {});

/// Feedback rule u^gamma driven by a solved BSDE pair.
ControlRule mv_feedback_rule(const BsdeSolution& sol, double gamma);

struct FCheck {
  double k = 0.0;
  double f = 0.0;
  double sup = 0.0;
  double gamma_hat = 0.0;
  double gamma_sup = 0.0;
  bool pass = false;
};

struct MeanConstraintCheck {
  double k = 0.0;
  double mean = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool pass = false;
};

struct ProbeValue {
  std::string name;
  double value = 0.0;
  double se = 0.0;
  bool pass = false;  // value <= mv_value + gate * SE
};

struct DualityOptions {
  double gate = 4.0;
  bool empirical = true;
  /// Offsets from K-hat for the mean-constraint check.
  std::vector<double> k_offsets{-0.1, 0.1};
  /// Offsets from h0 x for the F-versus-sup check.
  std::vector<double> f_offsets{-0.5, -0.1, 0.0, 0.1, 0.5, 1.0};
  bool suboptimal_probes = true;
};

struct DualityReport {
  double h0 = 1.0, y0 = 1.0, x = 1.0, theta = 1.0;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  int steps = 0;
  double k_hat = 0.0;
  double gamma_hat_k_hat = 0.0;         // gamma_hat(K-hat)
  double gamma_hat_k_hat_closed = 0.0;  // h0 x + Y0 / theta
  double f_k_hat = 0.0;
  double var_target = 0.0;              // (Y0 - 1) / theta^2, derived
  double mv_value = 0.0;
  double mmv_value = 0.0;
  double chain_gap = 0.0;
  double feedback_gap = 0.0;  // max relative |u^gamma - u-hat| on the closed-form wealth
  std::vector<FCheck> f_checks;
  bool empirical_run = false;
  MvEmpirical empirical;
  double target_se_mean = 0.0;  // regression error of the targets
  double target_se_var = 0.0;
  double target_se_value = 0.0;
  bool mean_ok = true, var_ok = true, value_ok = true;
  std::vector<MeanConstraintCheck> mean_checks;
  std::vector<ProbeValue> probes;
  bool pass = false;
};

/// The chain of closed forms for one (h0, Y0, x, theta), the sup cross-check
/// and, when requested, the empirical MV evaluation of the optimal feedback.
DualityReport duality_report(const RobustSetup& setup, const PathBundle& bundle,
                             const DualityOptions& options = {});

}  // namespace mmvlab
