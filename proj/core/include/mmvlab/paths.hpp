#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mmvlab/linalg.hpp"
#include "mmvlab/model.hpp"
#include "mmvlab/rng.hpp"
#include "mmvlab/time_grid.hpp"

namespace mmvlab {

struct JumpMark {
  double time = 0.0;
  double size = 0.0;
};

/// Well-known stream ids. Each one is an independent ensemble for the same seed.
namespace streams {
inline constexpr std::uint32_t kSimulation = 0;
inline constexpr std::uint32_t kRegressionShifted = 1;  // h regression under P-bar
inline constexpr std::uint32_t kRegressionPhysical = 2; // L, Y, Z regressions under P
inline constexpr std::uint32_t kCrossCheck = 3;         // shifted-drift re-simulation
inline constexpr std::uint32_t kDiagnostics = 4;        // BSDE residual checks
}  // namespace streams

/// A seeded ensemble of Brownian paths (and claim arrivals) on a uniform grid.
///
/// Increments are not stored: every draw is a pure function of
/// (seed, stream, path, step), so a path regenerates bit-identically no
/// matter which worker asks for it or in which order.
class PathBundle {
 public:
  PathBundle(TimeGrid grid, std::size_t n_paths, int dim, std::uint64_t seed,
             std::uint32_t stream = streams::kSimulation, bool antithetic = false,
             std::optional<JumpModel> jump = std::nullopt);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t n_paths() const noexcept { return n_paths_; }
  int dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream() const noexcept { return stream_; }
  bool antithetic() const noexcept { return antithetic_; }
  const std::optional<JumpModel>& jump() const noexcept { return jump_; }

  /// Brownian increments of one path, row-major: out[k * dim + i], k < N.
  void increments(std::size_t path, std::span<double> out) const;
  /// Claim arrivals of one path in (0, T], sorted by time.
  std::vector<JumpMark> jumps(std::size_t path) const;

  PathBundle with_stream(std::uint32_t stream) const;
  PathBundle with_paths(std::size_t n_paths) const;
  PathBundle with_grid(const TimeGrid& grid) const;

 private:
  TimeGrid grid_;
  std::size_t n_paths_;
  int dim_;
  std::uint64_t seed_;
  std::uint32_t stream_;
  bool antithetic_;
  std::optional<JumpModel> jump_;
};

/// Default cap on n_paths * N * n, the size the bundle would have if stored.
inline constexpr double kDefaultPathBudget = 4.0e9;

PathBundle generate_paths(const ScenarioConfig& cfg, double budget = kDefaultPathBudget);

/// Empirical checks of the Brownian increments (reported, not enforced).
struct BrownianSanity {
  double worst_mean_ratio = 0.0;  // max_k |mean_k| / sqrt(dt / n_paths)
  double worst_cov_z = 0.0;       // max_k, i, j |cov_k(i,j) - dt 1{i=j}| / SE
  bool ok = true;
};
BrownianSanity check_increments(const PathBundle& bundle);

/// Drift shift of the simulating Brownian motion: dW = dW_sim + shift * dt.
using DriftShift = std::function<Vec(int k, const FeatureState&, const Coefficients&)>;

/// Walks one path step by step and exposes the increment, the feature
/// state, and the coefficients at the left end of each step.
class PathCursor {
 public:
  PathCursor(const PathBundle& bundle, const CoefficientModel& model, std::size_t path,
             const DriftShift* shift = nullptr);

  int k() const noexcept { return k_; }
  double t() const noexcept { return bundle_->grid().time(k_); }
  bool done() const noexcept { return k_ >= bundle_->grid().steps(); }
  std::size_t path() const noexcept { return path_; }

  const FeatureState& features() const noexcept { return features_; }
  const Coefficients& coefficients() const noexcept { return coef_; }
  bool capped() const noexcept { return capped_; }
  std::size_t cap_hits() const noexcept { return cap_hits_; }
  /// Increment of the P-Brownian motion W over [t_k, t_{k+1}].
  const Vec& dw() const noexcept { return dw_; }
  /// Increment of the simulating Brownian motion (equals dw() without shift).
  const Vec& dw_sim() const noexcept { return dw_sim_; }
  /// Claims arriving in (t_k, t_{k+1}].
  std::span<const JumpMark> step_jumps() const noexcept;

  void advance();

 private:
  void load_step();

  const PathBundle* bundle_;
  const CoefficientModel* model_;
  const DriftShift* shift_;
  std::size_t path_;
  std::vector<double> normals_;
  std::vector<JumpMark> jumps_;
  std::size_t jump_begin_ = 0;
  std::size_t jump_end_ = 0;
  int k_ = 0;
  FeatureState features_;
  Coefficients coef_;
  bool capped_ = false;
  std::size_t cap_hits_ = 0;
  Vec dw_, dw_sim_;
};

/// psi(y) = slope * y + constant. Affine jump generators cover the optimal
/// psi-hat = b y / (lambda m2), its scalings, and constant probes.
struct JumpGenerator {
  double slope = 0.0;
  double constant = 0.0;

  double operator()(double y) const { return slope * y + constant; }
  bool is_zero() const { return slope == 0.0 && constant == 0.0; }
  /// lambda * int psi d nu.
  double compensator(const JumpModel& jm) const {
    return jm.intensity * (slope * jm.m1() + constant);
  }
};

/// Throws PsiBelowMinusOne unless psi > -1 on the support of nu.
void check_jump_generator(const JumpGenerator& psi, const ClaimDistribution& claims);

struct Generator {
  Vec eta;
  JumpGenerator psi{};
};

struct StepInput {
  int k = 0;
  double t = 0.0;
  const FeatureState* features = nullptr;
  const Coefficients* coef = nullptr;
};

using GeneratorRule = std::function<Generator(const StepInput&)>;

struct ControlInput {
  StepInput step;
  double x = 0.0;
  /// Reference density (Lambda of the reference generator, 1 without one).
  double lambda = 1.0;
};

struct ControlDecision {
  Vec u;
  double q = 0.0;
};

using ControlRule = std::function<ControlDecision(const ControlInput&)>;

/// Lambda_{k+1} from Lambda_k: exact log-exponential in W, product of
/// (1 + psi(y)) over the step's claims, times exp(-dt * compensator).
double density_step(double lambda, const Generator& g, const Vec& dw, double dt,
                    std::span<const JumpMark> jumps, const JumpModel* jump);

/// Euler step of the wealth equation; with jumps, adds (b q + a) dt and
/// -q (sum of claims - lambda m1 dt). Throws NegativeRetention for q < 0.
double wealth_step(double x, const Coefficients& co, const ControlDecision& d, const Vec& dw,
                   double dt, std::span<const JumpMark> jumps, const JumpModel* jump);

/// Paths with |X| above this are flagged and excluded.
inline constexpr double kOverflowBound = 1e12;
/// A run fails when more than this fraction of paths is flagged.
inline constexpr double kMaxFlaggedFraction = 1e-3;

struct StatePath {
  TimeGrid grid{1.0, 2};
  std::size_t n_paths = 0;
  int dim = 1;
  bool full = false;                // all grid points retained, else terminal only
  std::vector<double> x;            // full: x[k * n_paths + p]; else x[p] = X_T
  std::vector<double> u;            // full only: u[(k * n_paths + p) * dim + i]
  std::vector<double> lambda;       // reference density, same layout as x
  std::vector<std::uint8_t> flagged;
  std::size_t n_flagged = 0;
  std::size_t cap_hits = 0;

  double terminal(std::size_t p) const { return full ? x[grid.steps() * n_paths + p] : x[p]; }
  double at(int k, std::size_t p) const { return x[static_cast<std::size_t>(k) * n_paths + p]; }
};

struct SimulateOptions {
  /// Generator of the reference density passed to the control rule.
  GeneratorRule reference;
  bool retain_full = false;
  double budget = 2.0e8;  // cap on retained doubles
};

StatePath simulate_state(const CoefficientModel& model, const ControlRule& rule,
                         const PathBundle& bundle, double x0,
                         const SimulateOptions& options = {});

struct DensityPath {
  TimeGrid grid{1.0, 2};
  std::size_t n_paths = 0;
  bool full = false;
  std::vector<double> lambda;  // same layout as StatePath::x
  double min_value = 0.0;
  /// Martingale gate: |mean(Lambda_T) - 1| <= 4 SE.
  double terminal_mean = 1.0;
  double terminal_se = 0.0;
  bool martingale_ok = true;

  double terminal(std::size_t p) const {
    return full ? lambda[grid.steps() * n_paths + p] : lambda[p];
  }
};

DensityPath stochastic_exponential(const GeneratorRule& generator, const CoefficientModel& model,
                                   const PathBundle& bundle, bool retain_full = false);

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard error, accumulated in index order.
Estimate sample_estimate(std::span<const double> values);

/// E^{P^eta}[payoff] = E[Lambda_T payoff] with its standard error.
Estimate girsanov_reweight(std::span<const double> payoff, std::span<const double> lambda_t);

/// Columnar dump: path,k,t,X,Lambda,u_1..u_n for the first max_paths paths.
void write_path_dump(std::ostream& os, const StatePath& state, std::size_t max_paths);

}  // namespace mmvlab
