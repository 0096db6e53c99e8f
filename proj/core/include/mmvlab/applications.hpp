#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mmvlab/bsde.hpp"
#include "mmvlab/control.hpp"
#include "mmvlab/duality.hpp"
#include "mmvlab/model.hpp"

namespace mmvlab {

struct RunOptions {
  BsdeOptions bsde{};
  SaddleOptions saddle{};
  DualityOptions duality{};
  bool run_saddle = true;
  bool run_duality = true;
  /// Conservation refinement study; skipped when empty.
  std::vector<int> conservation_steps{};
  std::size_t conservation_paths = 2000;
  /// MarkovFactor with constant coefficients: compare against the affine closed form.
  bool affine_oracle = true;
  /// Jump scenarios: re-solve h on a jump-free ensemble and require identical output.
  bool check_h_invariance = true;
};

/// Portfolio-form formulas in (r, mu, sigma) against the generic ones.
struct SpecializationCheck {
  double max_eta_gap = 0.0;
  double max_u_gap = 0.0;
  std::size_t points = 0;
  bool pass = false;
};

struct ApplicationReport {
  std::string kind;  // "portfolio" or "reinsurance"
  Tier tier = Tier::Deterministic;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  int steps = 0;
  double h0 = 1.0;
  double y0 = 1.0;
  double h0_se = 0.0;
  double y0_se = 0.0;
  double value = 0.0;
  BsdeDiagnostics diagnostics;
  ResidualStats h_residual;
  ResidualStats y_residual;
  std::optional<SaddleReport> saddle;
  std::optional<DualityReport> duality;
  /// Y0 = 1 (no market price of risk): the MV dual is degenerate and skipped.
  bool duality_degenerate = false;
  SpecializationCheck specialization;
  std::optional<OracleComparison> oracle;
  double conservation_closed_form = 0.0;  // max relative deviation
  std::optional<ConservationStudy> conservation;
  // reinsurance only
  double psi_slope = 0.0;
  double psi_bound = 0.0;  // b y_max / (lambda m2)
  double q_min = 0.0;
  double q_max = 0.0;
  bool admissible = true;  // q-hat > 0 (b > 0) and psi-hat in [0, bound] on every path
  double feedback_q_gap = 0.0;
  bool h_invariant = true;
  bool pass = false;
};

/// Optimal value and solver output for one scenario: h, then Y (with the
/// jump term when cfg.jump is set).
BsdeSolution solve_scenario(const ScenarioConfig& cfg, const PathBundle& bundle,
                            const BsdeOptions& opt = {});

ApplicationReport run_portfolio(const ScenarioConfig& cfg, const RunOptions& opt = {});
ApplicationReport run_reinsurance(const ScenarioConfig& cfg, const RunOptions& opt = {});

/// (pi, q) of the MV feedback with target gamma in the jump market:
/// pi as in the diffusion market (C = 0) and h q = -(h X - gamma) b / (lambda m2).
ControlDecision mv_feedback_reinsurance(double gamma, const BsdePoint& p, const Coefficients& co,
                                        double x, const JumpModel& jump);

/// Reinsurance density probes: the default eta probes with psi-hat, and
/// psi = c psi-hat for c in {0, 0.5, 1.5} plus psi = 0.1 with eta-hat.
std::vector<DensityProbe> reinsurance_density_probes(int dim, std::uint64_t seed, double horizon);
/// Reinsurance control probes: the default pi probes with q-hat, plus
/// q in {0, q-hat / 2, 2 q-hat} with pi-hat and (pi-hat + 1, 0).
std::vector<ControlProbe> reinsurance_control_probes(int dim, std::uint64_t seed, double horizon);

/// Field-by-field bitwise comparison of two reports over the quantities
/// they share (values, solver output, shared probes, MV statistics).
struct LimitComparison {
  std::size_t compared = 0;
  std::vector<std::string> mismatches;
  bool identical() const { return mismatches.empty(); }
};
LimitComparison compare_reports(const ApplicationReport& a, const ApplicationReport& b);

}  // namespace mmvlab
