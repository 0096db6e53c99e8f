#include "mmvlab/paths.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "mmvlab/error.hpp"
#include "mmvlab/parallel.hpp"

namespace mmvlab {

namespace {
constexpr std::uint32_t kJumpStreamOffset = 0x100;
}

PathBundle::PathBundle(TimeGrid grid, std::size_t n_paths, int dim, std::uint64_t seed,
                       std::uint32_t stream, bool antithetic, std::optional<JumpModel> jump)
    : grid_(grid),
      n_paths_(n_paths),
      dim_(dim),
      seed_(seed),
      stream_(stream),
      antithetic_(antithetic),
      jump_(std::move(jump)) {
  if (dim < 1 || dim > kMaxDim) throw Error(ErrorCode::DimensionMismatch, "bundle dimension");
  if (n_paths < 1) throw Error(ErrorCode::DomainError, "bundle needs at least one path");
}

void PathBundle::increments(std::size_t path, std::span<double> out) const {
  const int steps = grid_.steps();
  if (out.size() < static_cast<std::size_t>(steps) * dim_)
    throw Error(ErrorCode::LengthMismatch, "increment buffer too small");
  const bool mirrored = antithetic_ && (path % 2 == 1);
  const std::size_t source = mirrored ? path - 1 : path;
  const double scale = (mirrored ? -1.0 : 1.0) * std::sqrt(grid_.dt());
  const rng::StreamKey key{seed_, stream_};
  for (int k = 0; k < steps; ++k) {
    double* row = out.data() + static_cast<std::size_t>(k) * dim_;
    for (int i = 0; i < dim_; i += 2) {
      const auto z = rng::normal_pair(key, source, static_cast<std::uint32_t>(k),
                                      static_cast<std::uint32_t>(i / 2));
      row[i] = scale * z[0];
      if (i + 1 < dim_) row[i + 1] = scale * z[1];
    }
  }
}

std::vector<JumpMark> PathBundle::jumps(std::size_t path) const {
  std::vector<JumpMark> out;
  if (!jump_) return out;
  const rng::StreamKey key{seed_, stream_ + kJumpStreamOffset};
  const double rate = jump_->intensity;
  double t = 0.0;
  for (std::uint32_t i = 0;; ++i) {
    const auto u = rng::uniform_pair(key, path, i, 0);
    t += -std::log(u[0]) / rate;
    if (t > grid_.horizon()) break;
    out.push_back({t, jump_->claims.sample(u[1])});
  }
  return out;
}

PathBundle PathBundle::with_stream(std::uint32_t stream) const {
  PathBundle b = *this;
  b.stream_ = stream;
  return b;
}

PathBundle PathBundle::with_paths(std::size_t n_paths) const {
  PathBundle b = *this;
  b.n_paths_ = n_paths;
  return b;
}

PathBundle PathBundle::with_grid(const TimeGrid& grid) const {
  PathBundle b = *this;
  b.grid_ = grid;
  return b;
}

PathBundle generate_paths(const ScenarioConfig& cfg, double budget) {
  const double size = static_cast<double>(cfg.n_paths) * cfg.grid.steps() * cfg.model.dim();
  if (size > budget) {
    std::ostringstream os;
    os << "n_paths * N * n = " << size << " exceeds budget " << budget;
    throw Error(ErrorCode::ResourceLimit, os.str());
  }
  return PathBundle(cfg.grid, cfg.n_paths, cfg.model.dim(), cfg.seed, streams::kSimulation,
                    cfg.antithetic, cfg.jump);
}

BrownianSanity check_increments(const PathBundle& bundle) {
  const int steps = bundle.grid().steps();
  const int n = bundle.dim();
  const auto paths = static_cast<double>(bundle.n_paths());
  std::vector<double> sum(static_cast<std::size_t>(steps) * n, 0.0);
  std::vector<double> cross(static_cast<std::size_t>(steps) * n * n, 0.0);
  std::vector<double> buf(static_cast<std::size_t>(steps) * n);
  for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
    bundle.increments(p, buf);
    for (int k = 0; k < steps; ++k) {
      for (int i = 0; i < n; ++i) {
        const double wi = buf[k * n + i];
        sum[k * n + i] += wi;
        for (int j = 0; j < n; ++j) cross[(k * n + i) * n + j] += wi * buf[k * n + j];
      }
    }
  }
  BrownianSanity out;
  const double dt = bundle.grid().dt();
  for (int k = 0; k < steps; ++k) {
    for (int i = 0; i < n; ++i) {
      const double mean = sum[k * n + i] / paths;
      out.worst_mean_ratio = std::max(out.worst_mean_ratio, std::abs(mean) / std::sqrt(dt / paths));
      for (int j = 0; j < n; ++j) {
        const double cov = cross[(k * n + i) * n + j] / paths;
        const double target = i == j ? dt : 0.0;
        const double se = i == j ? dt * std::sqrt(2.0 / paths) : dt / std::sqrt(paths);
        out.worst_cov_z = std::max(out.worst_cov_z, std::abs(cov - target) / se);
      }
    }
  }
  out.ok = out.worst_mean_ratio <= 5.0 && out.worst_cov_z <= 5.0;
  return out;
}

// ---------------------------------------------------------------------------

PathCursor::PathCursor(const PathBundle& bundle, const CoefficientModel& model, std::size_t path,
                       const DriftShift* shift)
    : bundle_(&bundle), model_(&model), shift_(shift), path_(path) {
  if (model.dim() != bundle.dim())
    throw Error(ErrorCode::DimensionMismatch, "model and bundle dimensions differ");
  normals_.resize(static_cast<std::size_t>(bundle.grid().steps()) * bundle.dim());
  bundle.increments(path, normals_);
  jumps_ = bundle.jumps(path);
  features_ = model.initial_features();
  dw_ = Vec::Zero(bundle.dim());
  dw_sim_ = Vec::Zero(bundle.dim());
  load_step();
}

std::span<const JumpMark> PathCursor::step_jumps() const noexcept {
  return std::span<const JumpMark>(jumps_).subspan(jump_begin_, jump_end_ - jump_begin_);
}

void PathCursor::load_step() {
  const auto& grid = bundle_->grid();
  coef_ = model_->evaluate(grid.time(k_), features_, &capped_);
  if (capped_) ++cap_hits_;
  const int n = bundle_->dim();
  if (done()) {
    dw_.setZero();
    dw_sim_.setZero();
    jump_begin_ = jump_end_;
    return;
  }
  for (int i = 0; i < n; ++i) dw_sim_[i] = normals_[static_cast<std::size_t>(k_) * n + i];
  dw_ = dw_sim_;
  if (shift_) dw_ += (*shift_)(k_, features_, coef_) * grid.dt();
  jump_begin_ = jump_end_;
  const double t_next = grid.time(k_ + 1);
  while (jump_end_ < jumps_.size() && jumps_[jump_end_].time <= t_next) ++jump_end_;
}

void PathCursor::advance() {
  const auto& grid = bundle_->grid();
  model_->advance(features_, grid.time(k_), grid.dt(), grid.horizon(), dw_);
  ++k_;
  load_step();
}

// ---------------------------------------------------------------------------

void check_jump_generator(const JumpGenerator& psi, const ClaimDistribution& claims) {
  auto reject = [](double y, double v) {
    std::ostringstream os;
    os << "psi(" << y << ") = " << v << " <= -1";
    throw Error(ErrorCode::PsiBelowMinusOne, os.str());
  };
  if (claims.kind == ClaimKind::Discrete) {
    for (const auto& [y, p] : claims.atoms)
      if (!(psi(y) > -1.0)) reject(y, psi(y));
    return;
  }
  // Affine in y: the extremes sit at the ends of (0, y_max].
  if (!(psi(0.0) > -1.0)) reject(0.0, psi(0.0));
  const double top = claims.support_max();
  if (std::isfinite(top) && !(psi(top) > -1.0)) reject(top, psi(top));
  if (!std::isfinite(top) && psi.slope < 0.0) reject(top, -INFINITY);
}

double density_step(double lambda, const Generator& g, const Vec& dw, double dt,
                    std::span<const JumpMark> jumps, const JumpModel* jump) {
  double next = lambda * std::exp(g.eta.dot(dw) - 0.5 * g.eta.squaredNorm() * dt);
  if (jump && !g.psi.is_zero()) {
    for (const auto& mark : jumps) {
      const double factor = 1.0 + g.psi(mark.size);
      if (!(factor > 0.0)) {
        std::ostringstream os;
        os << "psi(" << mark.size << ") = " << g.psi(mark.size) << " <= -1";
        throw Error(ErrorCode::PsiBelowMinusOne, os.str());
      }
      next *= factor;
    }
    next *= std::exp(-dt * g.psi.compensator(*jump));
  }
  return next;
}

double wealth_step(double x, const Coefficients& co, const ControlDecision& d, const Vec& dw,
                   double dt, std::span<const JumpMark> jumps, const JumpModel* jump) {
  const double drift = co.a * x + d.u.dot(co.b);
  const double diffusion = (x * co.c + co.d.transpose() * d.u).dot(dw);
  double next = x + drift * dt + diffusion;
  if (jump) {
    if (d.q < 0.0) {
      std::ostringstream os;
      os << "retention q = " << d.q << " < 0";
      throw Error(ErrorCode::NegativeRetention, os.str());
    }
    double claims = 0.0;
    for (const auto& mark : jumps) claims += mark.size;
    next += (jump->premium_loading * d.q + jump->drift_offset) * dt -
            d.q * (claims - jump->intensity * jump->m1() * dt);
  }
  return next;
}

StatePath simulate_state(const CoefficientModel& model, const ControlRule& rule,
                         const PathBundle& bundle, double x0, const SimulateOptions& options) {
  const auto& grid = bundle.grid();
  const int steps = grid.steps();
  const int n = bundle.dim();
  const std::size_t paths = bundle.n_paths();
  StatePath out;
  out.grid = grid;
  out.n_paths = paths;
  out.dim = n;
  out.full = options.retain_full;
  if (out.full) {
    const double doubles = static_cast<double>(paths) * (steps + 1) * (2 + n);
    if (doubles > options.budget)
      throw Error(ErrorCode::ResourceLimit, "retained state paths exceed the memory budget");
    out.x.assign(static_cast<std::size_t>(steps + 1) * paths, 0.0);
    out.lambda.assign(out.x.size(), 1.0);
    out.u.assign(static_cast<std::size_t>(steps) * paths * n, 0.0);
  } else {
    out.x.assign(paths, 0.0);
    out.lambda.assign(paths, 1.0);
  }
  out.flagged.assign(paths, 0);
  std::vector<std::size_t> cap_hits(block_count(paths), 0);
  const JumpModel* jm = bundle.jump() ? &*bundle.jump() : nullptr;

  for_each_block(paths, [&](std::size_t begin, std::size_t end, std::size_t block) {
    for (std::size_t p = begin; p < end; ++p) {
      PathCursor cur(bundle, model, p);
      double x = x0;
      double lambda = 1.0;
      if (out.full) out.x[p] = x;
      bool bad = false;
      while (!cur.done()) {
        const int k = cur.k();
        const StepInput step{k, cur.t(), &cur.features(), &cur.coefficients()};
        const ControlDecision d = rule(ControlInput{step, x, lambda});
        if (out.full)
          for (int i = 0; i < n; ++i) out.u[(static_cast<std::size_t>(k) * paths + p) * n + i] = d.u[i];
        x = wealth_step(x, cur.coefficients(), d, cur.dw(), grid.dt(), cur.step_jumps(), jm);
        if (options.reference)
          lambda = density_step(lambda, options.reference(step), cur.dw(), grid.dt(),
                                cur.step_jumps(), jm);
        cur.advance();
        if (!std::isfinite(x) || std::abs(x) > kOverflowBound) {
          bad = true;
          break;
        }
        if (out.full) {
          out.x[static_cast<std::size_t>(cur.k()) * paths + p] = x;
          out.lambda[static_cast<std::size_t>(cur.k()) * paths + p] = lambda;
        }
      }
      if (bad) {
        out.flagged[p] = 1;
        x = std::numeric_limits<double>::quiet_NaN();
      }
      if (!out.full) {
        out.x[p] = x;
        out.lambda[p] = lambda;
      }
      cap_hits[block] += cur.cap_hits();
    }
  });
  for (auto c : cap_hits) out.cap_hits += c;
  out.n_flagged = static_cast<std::size_t>(std::count(out.flagged.begin(), out.flagged.end(), 1));
  if (static_cast<double>(out.n_flagged) > kMaxFlaggedFraction * static_cast<double>(paths)) {
    std::ostringstream os;
    os << out.n_flagged << " of " << paths << " paths overflowed |X| > " << kOverflowBound;
    throw Error(ErrorCode::NonFiniteState, os.str());
  }
  return out;
}

DensityPath stochastic_exponential(const GeneratorRule& generator, const CoefficientModel& model,
                                   const PathBundle& bundle, bool retain_full) {
  const auto& grid = bundle.grid();
  const int steps = grid.steps();
  const std::size_t paths = bundle.n_paths();
  DensityPath out;
  out.grid = grid;
  out.n_paths = paths;
  out.full = retain_full;
  out.lambda.assign(retain_full ? static_cast<std::size_t>(steps + 1) * paths : paths, 1.0);
  std::vector<double> block_min(block_count(paths), INFINITY);
  const JumpModel* jm = bundle.jump() ? &*bundle.jump() : nullptr;

  for_each_block(paths, [&](std::size_t begin, std::size_t end, std::size_t block) {
    for (std::size_t p = begin; p < end; ++p) {
      PathCursor cur(bundle, model, p);
      double lambda = 1.0;
      double lo = 1.0;
      while (!cur.done()) {
        const StepInput step{cur.k(), cur.t(), &cur.features(), &cur.coefficients()};
        const Generator g = generator(step);
        if (jm && !g.psi.is_zero()) check_jump_generator(g.psi, jm->claims);
        lambda = density_step(lambda, g, cur.dw(), grid.dt(), cur.step_jumps(), jm);
        cur.advance();
        lo = std::min(lo, lambda);
        if (retain_full) out.lambda[static_cast<std::size_t>(cur.k()) * paths + p] = lambda;
      }
      if (!retain_full) out.lambda[p] = lambda;
      block_min[block] = std::min(block_min[block], lo);
    }
  });
  out.min_value = *std::min_element(block_min.begin(), block_min.end());
  std::vector<double> terminal(paths);
  for (std::size_t p = 0; p < paths; ++p) terminal[p] = out.terminal(p);
  const Estimate e = sample_estimate(terminal);
  out.terminal_mean = e.mean;
  out.terminal_se = e.se;
  out.martingale_ok = std::abs(e.mean - 1.0) <= std::max(4.0 * e.se, 1e-12);
  return out;
}

Estimate sample_estimate(std::span<const double> values) {
  Estimate e;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++e.n;
  }
  if (e.n == 0) return e;
  e.mean = sum / static_cast<double>(e.n);
  if (e.n < 2) return e;
  double ss = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    ss += (v - e.mean) * (v - e.mean);
  }
  e.se = std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
  return e;
}

Estimate girsanov_reweight(std::span<const double> payoff, std::span<const double> lambda_t) {
  if (payoff.size() != lambda_t.size()) {
    std::ostringstream os;
    os << "payoff has " << payoff.size() << " samples, density has " << lambda_t.size();
    throw Error(ErrorCode::LengthMismatch, os.str());
  }
  std::vector<double> weighted(payoff.size());
  for (std::size_t i = 0; i < payoff.size(); ++i) weighted[i] = lambda_t[i] * payoff[i];
  return sample_estimate(weighted);
}

void write_path_dump(std::ostream& os, const StatePath& state, std::size_t max_paths) {
  if (!state.full) throw Error(ErrorCode::DomainError, "path dump needs fully retained paths");
  os << "path,k,t,X,Lambda";
  for (int i = 0; i < state.dim; ++i) os << ",u_" << (i + 1);
  os << '\n';
  os.precision(17);
  const std::size_t paths = std::min(max_paths, state.n_paths);
  const int steps = state.grid.steps();
  for (std::size_t p = 0; p < paths; ++p) {
    for (int k = 0; k <= steps; ++k) {
      const std::size_t idx = static_cast<std::size_t>(k) * state.n_paths + p;
      os << p << ',' << k << ',' << state.grid.time(k) << ',' << state.x[idx] << ','
         << state.lambda[idx];
      for (int i = 0; i < state.dim; ++i) {
        os << ',';
        if (k < steps) os << state.u[idx * state.dim + i];
      }
      os << '\n';
    }
  }
}

}  // namespace mmvlab
