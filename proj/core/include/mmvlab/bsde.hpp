#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmvlab/linalg.hpp"
#include "mmvlab/model.hpp"
#include "mmvlab/paths.hpp"
#include "mmvlab/quadrature.hpp"
#include "mmvlab/regression.hpp"
#include "mmvlab/time_grid.hpp"

namespace mmvlab {

enum class Backend { Quadrature, Affine, Regression };
std::string to_string(Backend b);

inline constexpr double kDefaultHFloor = 1e-6;

struct BsdeOptions {
  RegressionSpec regression{};
  double h_floor = kDefaultHFloor;
  QuadratureOptions quadrature{};
  /// MarkovFactor tier only: Affine uses the closed form, Regression the
  /// least-squares backend.
  Backend markov_backend = Backend::Regression;
  /// Grid points averaged by the increment-regression smoother.
  int smoothing = 3;
};

/// Solver output at one grid point and one path state.
struct BsdePoint {
  double h = 1.0;
  Vec l;
  double y = 1.0;
  Vec z;
  Vec phi;  // D^{-1}B + L / h
};

/// Closed form for an Ornstein-Uhlenbeck drift coefficient with constant
/// B, C, D: h(tau, f) = exp(-kbar tau) / exp(alpha(tau) - beta(tau) f)
/// where the bond-type expectation is taken under the shifted measure.
struct AffineFactor {
  double kappa = 0.0;
  double shifted_mean = 0.0;  // m - v' D^{-1} B / kappa
  double vol2 = 0.0;          // |v|^2
  double kbar = 0.0;          // (D^{-1}B)' C
  Vec g;                      // D^{-1} B
  Vec v;

  static AffineFactor from_model(const CoefficientModel& model);
  double beta(double tau) const;
  double alpha(double tau) const;
  double h(double tau, double f) const;
  /// h^{-1} L = beta(tau) v, deterministic.
  Vec h_inv_l(double tau) const;
  Vec phi(double tau) const { return g + h_inv_l(tau); }
};

struct ResidualStats {
  double mean = 0.0;     // residual summed over the grid, averaged over paths
  double se = 0.0;       // sampling error of `mean`
  double fit_se = 0.0;   // regression error of h_0 (or Y_0) entering `mean`
  double worst_step_z = 0.0;
  int steps_over_gate = 0;
  double max_abs = 0.0;  // quadrature tiers: max_k |residual_k|
  bool ok = true;
};

struct BsdeDiagnostics {
  double min_h = 1.0;
  double min_y = 1.0;
  double h0_se = 0.0;
  double y0_se = 0.0;
  double min_r2_h = 1.0;
  double min_r2_y = 1.0;
  double max_condition = 1.0;
  std::size_t regression_paths = 0;
  int nested_inner_count = 0;  // no nested simulation is used
  bool y_ge_one = true;        // exact tiers strict, regression within 3 SE
  std::size_t cap_hits = 0;
};

class BsdeSolution {
 public:
  BsdeSolution(Tier tier, const TimeGrid& grid, int dim, double h_floor)
      : tier_(tier), grid_(grid), dim_(dim), h_floor_(h_floor) {}

  Tier tier() const noexcept { return tier_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  double h_floor() const noexcept { return h_floor_; }
  Backend h_backend() const noexcept { return h_backend_; }
  Backend y_backend() const noexcept { return y_backend_; }
  bool has_y() const noexcept { return has_y_; }
  /// b^2 / (lambda m2) for the reinsurance variant, else 0.
  double jump_rate() const noexcept { return jump_rate_; }

  double h_at(int k, const FeatureState& s) const;
  Vec l_at(int k, const FeatureState& s) const;
  double y_at(int k, const FeatureState& s) const;
  Vec z_at(int k, const FeatureState& s) const;
  /// Everything the control formulas need. Throws FloorViolation when h
  /// drops below the floor.
  BsdePoint at(int k, const FeatureState& s, const Coefficients& co) const;

  double h0(const CoefficientModel& m) const { return h_at(0, m.initial_features()); }
  double y0(const CoefficientModel& m) const { return y_at(0, m.initial_features()); }

  const std::optional<AffineFactor>& affine() const { return affine_; }
  const std::vector<double>& h_grid() const { return h_; }
  const std::vector<double>& y_grid() const { return y_; }
  /// Regression tier: standard errors of h and Y at one point.
  double h_se(int k, const FeatureState& s) const;
  double y_se(int k, const FeatureState& s) const;

  BsdeDiagnostics diagnostics;
  ResidualStats h_residual;
  ResidualStats y_residual;

 private:
  friend BsdeSolution solve_h_deterministic(const CoefficientModel&, const TimeGrid&,
                                            const BsdeOptions&);
  friend BsdeSolution solve_h_markov(const CoefficientModel&, const TimeGrid&, const PathBundle&,
                                     const BsdeOptions&);
  friend BsdeSolution solve_h_path_dependent(const CoefficientModel&, const TimeGrid&,
                                             const PathBundle&, const BsdeOptions&);
  friend BsdeSolution solve_y_impl(const CoefficientModel&, const BsdeSolution&,
                                   const PathBundle*, double, const BsdeOptions&);

  Vec smoothed(const std::vector<std::vector<SurfaceFit>>& fits, int k, const FeatureState& s,
               double scale) const;

  Tier tier_;
  TimeGrid grid_;
  int dim_;
  double h_floor_;
  Backend h_backend_ = Backend::Quadrature;
  Backend y_backend_ = Backend::Quadrature;
  bool has_y_ = false;
  double jump_rate_ = 0.0;
  int smoothing_ = 3;

  std::vector<double> h_;  // Quadrature: h[k]
  std::vector<double> y_;  // Quadrature / Affine: Y[k]
  std::optional<AffineFactor> affine_;
  Vec loading_;            // factor loading of feature 0 (MarkovFactor)
  std::vector<SurfaceFit> hbar_fit_;  // regression of 1/h, k < N
  std::vector<SurfaceFit> y_fit_;     // regression of Y without the jump factor, k < N
  std::vector<std::vector<SurfaceFit>> l_fit_;  // increment regressions (PathDependent)
  std::vector<std::vector<SurfaceFit>> z_fit_;
};

BsdeSolution solve_h_deterministic(const CoefficientModel& model, const TimeGrid& grid,
                                   const BsdeOptions& opt = {});
BsdeSolution solve_h_markov(const CoefficientModel& model, const TimeGrid& grid,
                            const PathBundle& bundle, const BsdeOptions& opt = {});
BsdeSolution solve_h_path_dependent(const CoefficientModel& model, const TimeGrid& grid,
                                    const PathBundle& bundle, const BsdeOptions& opt = {});
/// Dispatches on the tier. The bundle is only used by the simulation backends.
BsdeSolution solve_h(const CoefficientModel& model, const TimeGrid& grid, const PathBundle& bundle,
                     const BsdeOptions& opt = {});

/// Adds (Y, Z) to an h solution.
BsdeSolution solve_y(const CoefficientModel& model, const BsdeSolution& h_solution,
                     const PathBundle& bundle, const BsdeOptions& opt = {});
/// Y driver with the extra -b^2 Y / (lambda m2) term.
BsdeSolution solve_y_reinsurance(const CoefficientModel& model, const JumpModel& jump,
                                 const BsdeSolution& h_solution, const PathBundle& bundle,
                                 const BsdeOptions& opt = {});

/// h, then Y (with the jump term when `jump` is given), then residuals.
BsdeSolution solve_bsde(const CoefficientModel& model, const PathBundle& bundle,
                        const BsdeOptions& opt = {}, const JumpModel* jump = nullptr);

/// D^{-1} B + h^{-1} L. Throws FloorViolation below the floor, SingularD
/// when D cannot be inverted.
Vec phi(double h, const Vec& l, const Coefficients& co, double h_floor = kDefaultHFloor);
/// h D' u + X L + h X C.
Vec alpha(const Vec& u, double x, const BsdePoint& p, const Coefficients& co);
/// D^{-1} v, throwing SingularD.
Vec solve_d(const Mat& d, const Vec& v);
/// (D')^{-1} v, throwing SingularD.
Vec solve_d_transpose(const Mat& d, const Vec& v);

/// Fills h_residual and y_residual: quadrature tiers use the trapezoid
/// driver on the grid, the other tiers a one-step Euler residual averaged
/// over a simulated ensemble.
void bsde_residuals(BsdeSolution& sol, const CoefficientModel& model, const PathBundle& bundle,
                    const JumpModel* jump = nullptr);

/// Largest |z| between a regression solution and the affine closed form,
/// checked along the mean factor path at every `stride`-th grid point.
struct OracleComparison {
  double h0 = 0.0, h0_oracle = 0.0, h0_se = 0.0;
  double y0 = 0.0, y0_oracle = 0.0, y0_se = 0.0;
  double worst_h_z = 0.0;
  double worst_y_z = 0.0;
  bool ok = false;             // h_0 and Y_0 within 3 SE
  bool all_points_ok = false;  // every checked grid point within 3 SE
};
OracleComparison compare_with_affine(const BsdeSolution& regression, const BsdeSolution& affine,
                                     const CoefficientModel& model, int stride = 1);

/// Feature state used for grid-valued reports: the initial state for the
/// deterministic tier, the mean factor path under P for MarkovFactor, and
/// W = S = 0 for PathDependent.
FeatureState reference_features(const CoefficientModel& model, double t);

/// CSV: k,t,h,L_1..L_n,Y,Z_1..Z_n along the initial-feature path (exact
/// tiers) or the mean factor path.
void write_bsde_dump(std::ostream& os, const BsdeSolution& sol, const CoefficientModel& model);

}  // namespace mmvlab
