#include "mmvlab/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mmvlab/error.hpp"
#include "mmvlab/parallel.hpp"
#include "mmvlab/rng.hpp"

namespace mmvlab {

Vec optimal_eta(const BsdePoint& p) { return -p.phi; }

Vec optimal_u(const BsdePoint& p, const Coefficients& co, double x, double lambda, double theta) {
  const Vec rhs = (lambda / theta) * (p.phi * p.y - p.z) - x * p.l - p.h * x * co.c;
  return solve_d_transpose(co.d, rhs) / p.h;
}

JumpGenerator optimal_psi(const JumpModel& jump) {
  return JumpGenerator{jump.premium_loading / (jump.intensity * jump.m2()), 0.0};
}

double optimal_q(const BsdePoint& p, const JumpModel& jump, double lambda, double theta) {
  return jump.premium_loading * lambda * p.y / (p.h * theta * jump.intensity * jump.m2());
}

Generator optimal_generator(const BsdePoint& p, const JumpModel* jump) {
  Generator g{optimal_eta(p), {}};
  if (jump) g.psi = optimal_psi(*jump);
  return g;
}

double optimal_wealth_closed_form(double h, double y, double lambda, double h0, double y0, double x,
                                  double theta) {
  return (theta * h0 * x + y0 - lambda * y) / (theta * h);
}

double compute_R(double h, double y, double x, double lambda, double theta) {
  return h * x + (lambda * y - 1.0) / (2.0 * theta);
}

double robust_value(double h0, double y0, double x, double theta, double tol) {
  if (!(h0 > 0.0)) throw Error(ErrorCode::DomainError, "h0 must be positive");
  if (!(theta > 0.0)) throw Error(ErrorCode::DomainError, "theta must be positive");
  if (y0 < 1.0 - tol) {
    std::ostringstream os;
    os << "Y0 = " << y0 << " < 1";
    throw Error(ErrorCode::DomainError, os.str());
  }
  return x * h0 + (y0 - 1.0) / (2.0 * theta);
}

// ---------------------------------------------------------------------------

Vec PathContext::dw_at(int k) const {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = dw[static_cast<std::size_t>(k) * dim + i];
  return v;
}

std::span<const JumpMark> PathContext::step_jumps(int k) const {
  return std::span<const JumpMark>(jumps).subspan(jump_offset[k], jump_offset[k + 1] - jump_offset[k]);
}

void build_context(const RobustSetup& setup, const PathBundle& bundle, std::size_t path,
                   const DriftShift* shift, PathContext& ctx) {
  const int steps = bundle.grid().steps();
  const int n = bundle.dim();
  const double dt = bundle.grid().dt();
  ctx.steps = steps;
  ctx.dim = n;
  ctx.f.resize(steps + 1);
  ctx.co.resize(steps + 1);
  ctx.pt.resize(steps + 1);
  ctx.dw.resize(static_cast<std::size_t>(steps) * n);
  ctx.jumps.clear();
  ctx.jump_offset.assign(steps + 1, 0);
  ctx.lambda_hat.resize(steps + 1);
  const JumpModel* jm = setup.jump && bundle.jump() ? setup.jump : nullptr;
  PathCursor cur(bundle, *setup.model, path, shift);
  ctx.lambda_hat[0] = 1.0;
  for (;;) {
    const int k = cur.k();
    ctx.f[k] = cur.features();
    ctx.co[k] = cur.coefficients();
    ctx.pt[k] = setup.solution->at(k, ctx.f[k], ctx.co[k]);
    if (cur.done()) break;
    for (int i = 0; i < n; ++i) ctx.dw[static_cast<std::size_t>(k) * n + i] = cur.dw()[i];
    const auto js = cur.step_jumps();
    ctx.jumps.insert(ctx.jumps.end(), js.begin(), js.end());
    ctx.jump_offset[k + 1] = ctx.jumps.size();
    ctx.lambda_hat[k + 1] = density_step(ctx.lambda_hat[k], optimal_generator(ctx.pt[k], jm),
                                         cur.dw(), dt, js, jm);
    cur.advance();
  }
  ctx.cap_hits = cur.cap_hits();
}

ControlDecision optimal_decision(const ProbeState& s) {
  ControlDecision d;
  d.u = optimal_u(*s.point, *s.coef, s.x, s.lambda, s.setup->theta);
  d.q = s.setup->jump ? optimal_q(*s.point, *s.setup->jump, s.lambda, s.setup->theta) : 0.0;
  return d;
}

namespace {

constexpr std::uint32_t kProbeStream = 0x9B0Bu;
constexpr int kPieces = 8;

/// Piecewise-constant values in [lo, hi]^dim on kPieces equal time slices.
std::vector<Vec> random_pieces(int dim, std::uint64_t seed, std::uint64_t probe, double lo, double hi) {
  std::vector<Vec> out;
  const rng::StreamKey key{seed, kProbeStream};
  for (int j = 0; j < kPieces; ++j) {
    Vec v(dim);
    for (int i = 0; i < dim; i += 2) {
      const auto u = rng::uniform_pair(key, probe, static_cast<std::uint32_t>(j),
                                       static_cast<std::uint32_t>(i / 2));
      v[i] = lo + (hi - lo) * u[0];
      if (i + 1 < dim) v[i + 1] = lo + (hi - lo) * u[1];
    }
    out.push_back(v);
  }
  return out;
}

int piece_of(double t, double horizon) {
  return std::clamp(static_cast<int>(t / horizon * kPieces), 0, kPieces - 1);
}

std::string signed_name(const char* base, double eps, int i) {
  std::ostringstream os;
  os << base << (eps > 0 ? "+" : "-") << std::abs(eps) << "e" << (i + 1);
  return os.str();
}

}  // namespace

std::vector<ControlProbe> default_control_probes(int dim, std::uint64_t seed, double horizon) {
  std::vector<ControlProbe> out;
  out.push_back({"optimal", optimal_decision});
  out.push_back({"zero", [](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.u.setZero();
                   return d;
                 }});
  out.push_back({"optimal_plus_const", [](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.u.array() += 1.0;
                   return d;
                 }});
  out.push_back({"sinusoidal", [horizon](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.u.setConstant(1.0 + std::sin(2.0 * std::numbers::pi * s.t / horizon));
                   return d;
                 }});
  const auto pieces = random_pieces(dim, seed, 1, -2.0, 2.0);
  out.push_back({"random_piecewise", [pieces, horizon](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.u = pieces[piece_of(s.t, horizon)];
                   return d;
                 }});
  return out;
}

std::vector<DensityProbe> default_density_probes(int dim, std::uint64_t seed, double horizon) {
  std::vector<DensityProbe> out;
  out.push_back({"optimal",
                 [](const ProbeState& s) { return optimal_generator(*s.point, s.setup->jump); },
                 true});
  for (double eps : {0.1, 0.2}) {
    for (int i = 0; i < dim; ++i) {
      for (double sign : {1.0, -1.0}) {
        const double e = sign * eps;
        out.push_back({signed_name("optimal", e, i),
                       [e, i](const ProbeState& s) {
                         Generator g = optimal_generator(*s.point, s.setup->jump);
                         g.eta[i] += e;
                         return g;
                       },
                       false});
      }
    }
  }
  const auto pieces = random_pieces(dim, seed, 2, -1.0, 1.0);
  out.push_back({"random_bounded",
                 [pieces, horizon](const ProbeState& s) {
                   Generator g = optimal_generator(*s.point, s.setup->jump);
                   g.eta = pieces[piece_of(s.t, horizon)];
                   return g;
                 },
                 false});
  return out;
}

const ProbeResult* SaddleReport::find(const std::string& kind, const std::string& name) const {
  for (const auto& p : probes)
    if (p.kind == kind && p.name == name) return &p;
  return nullptr;
}

// ---------------------------------------------------------------------------

namespace {

bool overflowed(double x) { return !std::isfinite(x) || std::abs(x) > kOverflowBound; }

/// Wealth under the optimal feedback along a context; xs[k] for k = 0..N.
/// Returns false when the path overflows.
bool optimal_wealth_path(const RobustSetup& setup, const PathContext& ctx, double dt,
                         const JumpModel* jm, std::vector<double>& xs) {
  xs.resize(ctx.steps + 1);
  xs[0] = setup.x;
  ProbeState s;
  s.setup = &setup;
  for (int k = 0; k < ctx.steps; ++k) {
    s.k = k;
    s.x = xs[k];
    s.lambda = ctx.lambda_hat[k];
    s.point = &ctx.pt[k];
    s.coef = &ctx.co[k];
    const ControlDecision d = optimal_decision(s);
    xs[k + 1] = wealth_step(xs[k], ctx.co[k], d, ctx.dw_at(k), dt, ctx.step_jumps(k), jm);
    if (overflowed(xs[k + 1])) return false;
  }
  return true;
}

}  // namespace

SaddleReport verify_saddle(const RobustSetup& setup, const PathBundle& bundle,
                           const SaddleOptions& options) {
  const TimeGrid& grid = bundle.grid();
  const int steps = grid.steps();
  const double dt = grid.dt();
  const double theta = setup.theta;
  const JumpModel* jm = setup.jump && bundle.jump() ? setup.jump : nullptr;
  const std::size_t paths = bundle.n_paths();

  const auto cprobes = options.control_probes.empty()
                           ? default_control_probes(bundle.dim(), options.probe_seed, grid.horizon())
                           : options.control_probes;
  const auto dprobes = options.density_probes.empty()
                           ? default_density_probes(bundle.dim(), options.probe_seed, grid.horizon())
                           : options.density_probes;
  const std::size_t nc = cprobes.size();
  const std::size_t nd = dprobes.size();

  SaddleReport rep;
  const FeatureState s0 = setup.model->initial_features();
  rep.h0 = setup.solution->h_at(0, s0);
  rep.y0 = setup.solution->y_at(0, s0);
  rep.value = robust_value(rep.h0, rep.y0, setup.x, theta);
  rep.r0 = compute_R(rep.h0, rep.y0, setup.x, 1.0, theta);
  rep.n_paths = paths;

  // payoff[j * paths + p]
  std::vector<double> c_payoff(nc * paths, 0.0);
  std::vector<double> d_payoff(nd * paths, 0.0);
  std::vector<double> d_lambda(nd * paths, 0.0);
  std::vector<std::uint8_t> flagged(paths, 0);
  std::vector<double> block_terminal_gap(block_count(paths), 0.0);
  std::vector<double> block_initial_gap(block_count(paths), 0.0);
  std::vector<std::size_t> block_caps(block_count(paths), 0);

  for_each_block(paths, [&](std::size_t begin, std::size_t end, std::size_t block) {
    PathContext ctx;
    std::vector<double> xhat;
    ProbeState s;
    s.setup = &setup;
    s.horizon = grid.horizon();
    for (std::size_t p = begin; p < end; ++p) {
      build_context(setup, bundle, p, nullptr, ctx);
      block_caps[block] += ctx.cap_hits;
      const double lam_t = ctx.lambda_hat[steps];
      const BsdePoint& pt_t = ctx.pt[steps];
      // R at time 0 is the same number for every pair.
      block_initial_gap[block] = std::max(
          block_initial_gap[block],
          std::abs(compute_R(ctx.pt[0].h, ctx.pt[0].y, setup.x, ctx.lambda_hat[0], theta) - rep.r0));
      auto terminal = [&](double x, double lam) {
        const double r = compute_R(pt_t.h, pt_t.y, x, lam, theta);
        const double payoff = x + (lam - 1.0) / (2.0 * theta);
        block_terminal_gap[block] = std::max(block_terminal_gap[block], std::abs(r - payoff));
        return r;
      };

      bool bad = !optimal_wealth_path(setup, ctx, dt, jm, xhat);

      for (std::size_t j = 0; j < nd && !bad; ++j) {
        double lam = 1.0;
        for (int k = 0; k < steps; ++k) {
          s.k = k;
          s.t = grid.time(k);
          s.x = xhat[k];
          s.lambda = ctx.lambda_hat[k];
          s.point = &ctx.pt[k];
          s.coef = &ctx.co[k];
          const Generator g = dprobes[j].rule(s);
          lam = density_step(lam, g, ctx.dw_at(k), dt, ctx.step_jumps(k), jm);
        }
        d_lambda[j * paths + p] = lam;
        d_payoff[j * paths + p] = lam * terminal(xhat[steps], lam);
      }
      for (std::size_t i = 0; i < nc && !bad; ++i) {
        double x = setup.x;
        for (int k = 0; k < steps; ++k) {
          s.k = k;
          s.t = grid.time(k);
          s.x = x;
          s.lambda = ctx.lambda_hat[k];
          s.point = &ctx.pt[k];
          s.coef = &ctx.co[k];
          const ControlDecision d = cprobes[i].rule(s);
          x = wealth_step(x, ctx.co[k], d, ctx.dw_at(k), dt, ctx.step_jumps(k), jm);
          if (overflowed(x)) {
            bad = true;
            break;
          }
        }
        c_payoff[i * paths + p] = lam_t * terminal(x, lam_t);
      }
      if (bad) {
        flagged[p] = 1;
        for (std::size_t j = 0; j < nd; ++j) d_payoff[j * paths + p] = d_lambda[j * paths + p] = NAN;
        for (std::size_t i = 0; i < nc; ++i) c_payoff[i * paths + p] = NAN;
      }
    }
  });

  rep.n_flagged = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
  for (auto c : block_caps) rep.cap_hits += c;
  if (static_cast<double>(rep.n_flagged) > kMaxFlaggedFraction * static_cast<double>(paths)) {
    std::ostringstream os;
    os << rep.n_flagged << " of " << paths << " paths overflowed";
    throw Error(ErrorCode::NonFiniteState, os.str());
  }

  // First-order Euler bias of the two exponential factors along the
  // reference features; dominates the gate only when the payoff is
  // (nearly) deterministic.
  {
    double h_euler = 1.0;
    double y_euler = 1.0;
    for (int k = 0; k < steps; ++k) {
      const FeatureState f = reference_features(*setup.model, grid.time(k));
      const Coefficients co = setup.model->evaluate(grid.time(k), f);
      const BsdePoint pt = setup.solution->at(k, f, co);
      const Vec g = solve_d(co.d, co.b);
      h_euler *= 1.0 + (co.a - g.dot(co.c)) * dt;
      y_euler *= 1.0 + (pt.phi.squaredNorm() + setup.solution->jump_rate()) * dt;
    }
    rep.discretization_allowance =
        std::abs(setup.x) * std::abs(rep.h0 - h_euler) + std::abs(rep.y0 - y_euler) / (2.0 * theta);
  }
  const double slack = rep.discretization_allowance + 1e-12 * std::max(1.0, std::abs(rep.r0));
  const double gate = options.gate;
  bool controls_ok = true;
  bool densities_ok = true;
  for (std::size_t i = 0; i < nc; ++i) {
    const Estimate e = sample_estimate(std::span<const double>(c_payoff).subspan(i * paths, paths));
    ProbeResult r;
    r.kind = "control";
    r.name = cprobes[i].name;
    r.estimate = e.mean;
    r.se = e.se;
    r.excess_z = e.se > 0.0 ? (e.mean - rep.r0) / e.se : 0.0;
    r.pass = std::abs(e.mean - rep.r0) <= gate * e.se + slack;
    controls_ok = controls_ok && r.pass;
    rep.probes.push_back(r);
  }
  bool martingale_ok = true;
  for (std::size_t j = 0; j < nd; ++j) {
    const Estimate e = sample_estimate(std::span<const double>(d_payoff).subspan(j * paths, paths));
    const Estimate l = sample_estimate(std::span<const double>(d_lambda).subspan(j * paths, paths));
    ProbeResult r;
    r.kind = "density";
    r.name = dprobes[j].name;
    r.estimate = e.mean;
    r.se = e.se;
    r.excess_z = e.se > 0.0 ? (e.mean - rep.r0) / e.se : 0.0;
    r.density_mean = l.mean;
    r.density_se = l.se;
    r.density_ok = std::abs(l.mean - 1.0) <= gate * l.se + 1e-12;
    martingale_ok = martingale_ok && r.density_ok;
    if (dprobes[j].optimal) {
      r.pass = std::abs(e.mean - rep.r0) <= gate * e.se + slack;
      rep.equality = r;
      rep.equality.kind = "equality";
    } else {
      r.pass = e.mean >= rep.r0 - gate * e.se - slack;
    }
    densities_ok = densities_ok && r.pass;
    rep.probes.push_back(r);
  }

  double terminal_gap = 0.0;
  double initial_gap = 0.0;
  for (double g : block_terminal_gap) terminal_gap = std::max(terminal_gap, g);
  for (double g : block_initial_gap) initial_gap = std::max(initial_gap, g);
  auto detail = [](const char* what, double v) {
    std::ostringstream os;
    os << what << " " << v;
    return os.str();
  };
  rep.statements.push_back({"terminal_identity", terminal_gap == 0.0,
                            detail("max |R_T - payoff| =", terminal_gap)});
  rep.statements.push_back({"initial_value", initial_gap <= 1e-14 * std::max(1.0, std::abs(rep.r0)),
                            detail("max |R_0 - value| =", initial_gap)});
  rep.statements.push_back({"martingale_under_optimal_density", controls_ok,
                            "every control probe within the gate of R_0"});
  rep.statements.push_back({"submartingale_under_optimal_control", densities_ok,
                            "every density probe at least R_0 minus the gate"});
  rep.statements.push_back({"equality_case", rep.equality.pass, "optimal pair within the gate of R_0"});
  rep.statements.push_back({"density_martingale", martingale_ok,
                            "terminal density mean within the gate of 1 for every probe"});

  if (options.cross_check && !jm) {
    // Re-simulate under the shifted drift and average R_T without weights.
    const PathBundle cb = bundle.with_stream(streams::kCrossCheck);
    for (std::size_t j = 0; j < nd && j < 2; ++j) {
      const auto& probe = dprobes[j];
      std::vector<double> r_t(paths, 0.0);
      for_each_block(paths, [&](std::size_t begin, std::size_t end, std::size_t) {
        ProbeState s;
        s.setup = &setup;
        s.horizon = grid.horizon();
        for (std::size_t p = begin; p < end; ++p) {
          double x = setup.x;
          double lam_hat = 1.0;
          double lam = 1.0;
          const DriftShift shift = [&](int k, const FeatureState& f, const Coefficients& co) {
            const BsdePoint pt = setup.solution->at(k, f, co);
            ProbeState q = s;
            q.k = k;
            q.t = grid.time(k);
            q.x = x;
            q.lambda = lam_hat;
            q.point = &pt;
            q.coef = &co;
            return Vec(probe.rule(q).eta);
          };
          PathCursor cur(cb, *setup.model, p, &shift);
          while (!cur.done()) {
            const int k = cur.k();
            const BsdePoint pt = setup.solution->at(k, cur.features(), cur.coefficients());
            s.k = k;
            s.t = cur.t();
            s.x = x;
            s.lambda = lam_hat;
            s.point = &pt;
            s.coef = &cur.coefficients();
            const ControlDecision d = optimal_decision(s);
            const Generator g = probe.rule(s);
            x = wealth_step(x, cur.coefficients(), d, cur.dw(), dt, {}, nullptr);
            lam_hat = density_step(lam_hat, optimal_generator(pt, nullptr), cur.dw(), dt, {}, nullptr);
            lam = density_step(lam, g, cur.dw(), dt, {}, nullptr);
            cur.advance();
          }
          r_t[p] = overflowed(x) ? NAN : x + (lam - 1.0) / (2.0 * theta);
        }
      });
      const Estimate e = sample_estimate(r_t);
      const ProbeResult* rw = rep.find("density", probe.name);
      CrossCheckResult cc;
      cc.name = probe.name;
      cc.reweighted = rw->estimate;
      cc.reweighted_se = rw->se;
      cc.resimulated = e.mean;
      cc.resimulated_se = e.se;
      const double se = std::hypot(rw->se, e.se);
      cc.z = se > 0.0 ? std::abs(rw->estimate - e.mean) / se : 0.0;
      cc.pass = cc.z <= gate;
      rep.cross_checks.push_back(cc);
    }
  }

  rep.pass = true;
  for (const auto& st : rep.statements) rep.pass = rep.pass && st.pass;
  for (const auto& cc : rep.cross_checks) rep.pass = rep.pass && cc.pass;
  return rep;
}

// ---------------------------------------------------------------------------

ClosedFormCheck closed_form_wealth(const RobustSetup& setup, const PathBundle& bundle, bool retain) {
  const int steps = bundle.grid().steps();
  const std::size_t paths = bundle.n_paths();
  const double theta = setup.theta;
  const FeatureState s0 = setup.model->initial_features();
  const double h0 = setup.solution->h_at(0, s0);
  const double y0 = setup.solution->y_at(0, s0);
  const double c = theta * h0 * setup.x + y0;

  ClosedFormCheck out;
  StatePath& st = out.state;
  st.grid = bundle.grid();
  st.n_paths = paths;
  st.dim = bundle.dim();
  st.full = retain;
  const std::size_t size = retain ? static_cast<std::size_t>(steps + 1) * paths : paths;
  st.x.assign(size, 0.0);
  st.lambda.assign(size, 1.0);
  st.flagged.assign(paths, 0);
  std::vector<double> block_dev(block_count(paths), 0.0);

  for_each_block(paths, [&](std::size_t begin, std::size_t end, std::size_t block) {
    PathContext ctx;
    for (std::size_t p = begin; p < end; ++p) {
      build_context(setup, bundle, p, nullptr, ctx);
      for (int k = 0; k <= steps; ++k) {
        const BsdePoint& pt = ctx.pt[k];
        const double lam = ctx.lambda_hat[k];
        const double x = optimal_wealth_closed_form(pt.h, pt.y, lam, h0, y0, setup.x, theta);
        const double dev = std::abs(theta * pt.h * x + lam * pt.y - c) / std::abs(c);
        block_dev[block] = std::max(block_dev[block], dev);
        if (retain) {
          st.x[static_cast<std::size_t>(k) * paths + p] = x;
          st.lambda[static_cast<std::size_t>(k) * paths + p] = lam;
        } else if (k == steps) {
          st.x[p] = x;
          st.lambda[p] = lam;
        }
      }
    }
  });
  for (double d : block_dev) out.max_rel_deviation = std::max(out.max_rel_deviation, d);
  return out;
}

StatePath simulate_optimal(const RobustSetup& setup, const PathBundle& bundle, bool retain_full) {
  const JumpModel* jm = setup.jump && bundle.jump() ? setup.jump : nullptr;
  const BsdeSolution& sol = *setup.solution;
  const ControlRule rule = [&](const ControlInput& in) {
    const BsdePoint pt = sol.at(in.step.k, *in.step.features, *in.step.coef);
    ProbeState s;
    s.setup = &setup;
    s.k = in.step.k;
    s.t = in.step.t;
    s.x = in.x;
    s.lambda = in.lambda;
    s.point = &pt;
    s.coef = in.step.coef;
    return optimal_decision(s);
  };
  SimulateOptions opt;
  opt.retain_full = retain_full;
  opt.reference = [&sol, jm](const StepInput& in) {
    return optimal_generator(sol.at(in.k, *in.features, *in.coef), jm);
  };
  return simulate_state(*setup.model, rule, bundle, setup.x, opt);
}

double density_euler_step(double lambda, const Generator& g, const Vec& dw, double dt,
                          std::span<const JumpMark> jumps, const JumpModel* jump) {
  double factor = 1.0 + g.eta.dot(dw);
  if (jump) {
    for (const auto& m : jumps) factor += g.psi(m.size);
    factor -= dt * g.psi.compensator(*jump);
  }
  return lambda * factor;
}

namespace {

double log_log_slope(const std::vector<int>& steps, const std::vector<double>& dev, double horizon) {
  const std::size_t m = steps.size();
  if (m < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lx = std::log(horizon / steps[i]);
    const double ly = std::log(dev[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double mm = static_cast<double>(m);
  return (mm * sxy - sx * sy) / (mm * sxx - sx * sx);
}

}  // namespace

ConservationStudy conservation_study(const ScenarioConfig& cfg, const std::vector<int>& steps_list,
                                     std::size_t n_paths, const BsdeOptions& opt) {
  ConservationStudy out;
  const JumpModel* jm = cfg.jump ? &*cfg.jump : nullptr;
  for (int steps : steps_list) {
    const TimeGrid grid(cfg.grid.horizon(), steps);
    const double dt = grid.dt();
    const PathBundle bundle(grid, n_paths, cfg.model.dim(), cfg.seed, streams::kSimulation,
                            cfg.antithetic, cfg.jump);
    BsdeOptions o = opt;
    o.regression = cfg.regression;
    const BsdeSolution h = solve_h(cfg.model, grid, bundle, o);
    const BsdeSolution sol =
        jm ? solve_y_reinsurance(cfg.model, *jm, h, bundle, o) : solve_y(cfg.model, h, bundle, o);
    const RobustSetup setup{&cfg.model, &sol, cfg.x, cfg.theta, jm};
    const FeatureState s0 = cfg.model.initial_features();
    const double c = cfg.theta * sol.h_at(0, s0) * cfg.x + sol.y_at(0, s0);
    std::vector<double> dev(n_paths, 0.0);
    std::vector<double> dev_exact(n_paths, 0.0);
    for_each_block(n_paths, [&](std::size_t begin, std::size_t end, std::size_t) {
      PathContext ctx;
      std::vector<double> xs;
      ProbeState s;
      s.setup = &setup;
      s.horizon = grid.horizon();
      for (std::size_t p = begin; p < end; ++p) {
        build_context(setup, bundle, p, nullptr, ctx);
        // Only X discretised.
        if (optimal_wealth_path(setup, ctx, dt, jm, xs)) {
          double worst = 0.0;
          for (int k = 0; k <= steps; ++k) {
            const double v = cfg.theta * ctx.pt[k].h * xs[k] + ctx.lambda_hat[k] * ctx.pt[k].y;
            worst = std::max(worst, std::abs(v - c) / std::abs(c));
          }
          dev_exact[p] = worst;
        } else {
          dev_exact[p] = NAN;
        }
        // X and the density both discretised.
        double x = cfg.x;
        double lam = 1.0;
        double worst = 0.0;
        for (int k = 0; k <= steps; ++k) {
          const double v = cfg.theta * ctx.pt[k].h * x + lam * ctx.pt[k].y;
          worst = std::max(worst, std::abs(v - c) / std::abs(c));
          if (k == steps) break;
          s.k = k;
          s.t = grid.time(k);
          s.x = x;
          s.lambda = lam;
          s.point = &ctx.pt[k];
          s.coef = &ctx.co[k];
          const ControlDecision d = optimal_decision(s);
          const Vec dw = ctx.dw_at(k);
          const auto js = ctx.step_jumps(k);
          x = wealth_step(x, ctx.co[k], d, dw, dt, js, jm);
          lam = density_euler_step(lam, optimal_generator(ctx.pt[k], jm), dw, dt, js, jm);
          if (overflowed(x) || !std::isfinite(lam)) {
            worst = NAN;
            break;
          }
        }
        dev[p] = worst;
      }
    });
    out.steps.push_back(steps);
    out.mean_max_deviation.push_back(sample_estimate(dev).mean);
    out.mean_max_deviation_exact_density.push_back(sample_estimate(dev_exact).mean);
  }
  out.order = log_log_slope(out.steps, out.mean_max_deviation, cfg.grid.horizon());
  out.order_exact_density =
      log_log_slope(out.steps, out.mean_max_deviation_exact_density, cfg.grid.horizon());
  out.pass = out.order >= 0.5;
  return out;
}

}  // namespace mmvlab
