#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmvlab/bsde.hpp"
#include "mmvlab/model.hpp"
#include "mmvlab/paths.hpp"

namespace mmvlab {

/// Everything the optimal pair depends on.
struct RobustSetup {
  const CoefficientModel* model = nullptr;
  const BsdeSolution* solution = nullptr;
  double x = 1.0;
  double theta = 1.0;
  const JumpModel* jump = nullptr;  // reinsurance market when set
};

/// -phi.
Vec optimal_eta(const BsdePoint& p);
/// (h D')^{-1} (lambda / theta [phi Y - Z] - X L - h X C), where lambda is
/// the density of the optimal generator.
Vec optimal_u(const BsdePoint& p, const Coefficients& co, double x, double lambda, double theta);
/// psi(y) = b y / (lambda m2).
JumpGenerator optimal_psi(const JumpModel& jump);
/// b lambda Y / (h theta lambda_int m2) with lambda the optimal density.
double optimal_q(const BsdePoint& p, const JumpModel& jump, double lambda, double theta);
/// Optimal (eta, psi) at one grid point; psi is zero without jumps.
Generator optimal_generator(const BsdePoint& p, const JumpModel* jump);

/// (theta h0 x + Y0 - lambda Y) / (theta h).
double optimal_wealth_closed_form(double h, double y, double lambda, double h0, double y0,
                                  double x, double theta);
/// h X + (lambda Y - 1) / (2 theta).
double compute_R(double h, double y, double x, double lambda, double theta);
/// x h0 + (Y0 - 1) / (2 theta). Throws DomainError when Y0 < 1 - tol.
double robust_value(double h0, double y0, double x, double theta, double tol = 1e-10);

/// Per-path materialisation of coefficients, solver output, increments,
/// claims and the optimal density, shared by every probe on the path.
struct PathContext {
  int steps = 0;
  int dim = 1;
  std::vector<FeatureState> f;
  std::vector<Coefficients> co;
  std::vector<BsdePoint> pt;
  std::vector<double> dw;
  std::vector<JumpMark> jumps;
  std::vector<std::size_t> jump_offset;  // claims of step k: [offset[k], offset[k+1])
  std::vector<double> lambda_hat;        // optimal density, k = 0..N
  std::size_t cap_hits = 0;

  Vec dw_at(int k) const;
  std::span<const JumpMark> step_jumps(int k) const;
};

void build_context(const RobustSetup& setup, const PathBundle& bundle, std::size_t path,
                   const DriftShift* shift, PathContext& ctx);

/// State visible to a probe rule at step k.
struct ProbeState {
  int k = 0;
  double t = 0.0;
  double horizon = 1.0;
  double x = 0.0;        // wealth of the simulated strategy
  double lambda = 1.0;   // optimal density
  const BsdePoint* point = nullptr;
  const Coefficients* coef = nullptr;
  const RobustSetup* setup = nullptr;
};

/// The optimal decision (u, q) at a probe state.
ControlDecision optimal_decision(const ProbeState& s);

struct ControlProbe {
  std::string name;
  std::function<ControlDecision(const ProbeState&)> rule;
};

struct DensityProbe {
  std::string name;
  std::function<Generator(const ProbeState&)> rule;
  bool optimal = false;
};

/// {optimal, zero, optimal + const, sinusoidal in t, seeded piecewise-constant}.
std::vector<ControlProbe> default_control_probes(int dim, std::uint64_t seed, double horizon);
/// {optimal, optimal +- eps e_i for eps in {0.1, 0.2}, seeded bounded rule}.
std::vector<DensityProbe> default_density_probes(int dim, std::uint64_t seed, double horizon);

struct ProbeResult {
  std::string kind;  // "control", "density" or "equality"
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double excess_z = 0.0;  // (estimate - R0) / SE
  bool pass = false;
  // density probes: martingale check of the terminal density
  double density_mean = 1.0;
  double density_se = 0.0;
  bool density_ok = true;
};

struct StatementResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CrossCheckResult {
  std::string name;
  double reweighted = 0.0;
  double reweighted_se = 0.0;
  double resimulated = 0.0;
  double resimulated_se = 0.0;
  double z = 0.0;
  bool pass = false;
};

struct SaddleOptions {
  double gate = 4.0;
  std::uint64_t probe_seed = 7;
  bool cross_check = false;
  std::vector<ControlProbe> control_probes;  // defaults when empty
  std::vector<DensityProbe> density_probes;  // defaults when empty
};

struct SaddleReport {
  double r0 = 0.0;
  double value = 0.0;
  double h0 = 1.0;
  double y0 = 1.0;
  std::size_t n_paths = 0;
  std::size_t n_flagged = 0;
  std::size_t cap_hits = 0;
  /// Added to every probe gate: x |h0 - prod(1 + (A - kbar) dt)| +
  /// |Y0 - prod(1 + (|phi|^2 + c) dt)| / (2 theta) along the reference features.
  double discretization_allowance = 0.0;
  std::vector<ProbeResult> probes;
  ProbeResult equality;
  std::vector<StatementResult> statements;
  std::vector<CrossCheckResult> cross_checks;
  bool pass = false;

  const ProbeResult* find(const std::string& kind, const std::string& name) const;
};

SaddleReport verify_saddle(const RobustSetup& setup, const PathBundle& bundle,
                           const SaddleOptions& options = {});

/// theta h X + lambda Y against its initial value along the closed-form
/// optimal wealth.
struct ClosedFormCheck {
  double max_rel_deviation = 0.0;
  StatePath state;  // X-hat and the optimal density, all grid points when retained
};
ClosedFormCheck closed_form_wealth(const RobustSetup& setup, const PathBundle& bundle,
                                   bool retain = false);

/// Mean over paths of max_k |theta h X + lambda Y - c| / c when the pair
/// (X, lambda) follows the Euler scheme under the optimal feedback, for
/// several step counts. The same study with the density stepped exactly
/// (only X discretised) is reported alongside.
struct ConservationStudy {
  std::vector<int> steps;
  std::vector<double> mean_max_deviation;
  std::vector<double> mean_max_deviation_exact_density;
  double order = 0.0;
  double order_exact_density = 0.0;
  bool pass = false;  // order >= 0.5
};

/// Euler step of the density: lambda (1 + eta' dw + sum psi(y) - dt * compensator).
double density_euler_step(double lambda, const Generator& g, const Vec& dw, double dt,
                          std::span<const JumpMark> jumps, const JumpModel* jump);
ConservationStudy conservation_study(const ScenarioConfig& cfg, const std::vector<int>& steps,
                                     std::size_t n_paths, const BsdeOptions& opt = {});

/// Simulates X under the optimal feedback with the optimal density as
/// reference. Returns terminal values (or all grid points when retained).
StatePath simulate_optimal(const RobustSetup& setup, const PathBundle& bundle,
                           bool retain_full = false);

}  // namespace mmvlab
