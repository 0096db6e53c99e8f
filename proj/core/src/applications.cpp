#include "mmvlab/applications.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "mmvlab/error.hpp"
#include "mmvlab/parallel.hpp"

namespace mmvlab {

BsdeSolution solve_scenario(const ScenarioConfig& cfg, const PathBundle& bundle,
                            const BsdeOptions& opt) {
  BsdeOptions o = opt;
  o.regression = cfg.regression;
  return solve_bsde(cfg.model, bundle, o, cfg.jump ? &*cfg.jump : nullptr);
}

ControlDecision mv_feedback_reinsurance(double gamma, const BsdePoint& p, const Coefficients& co,
                                        double x, const JumpModel& jump) {
  ControlDecision d;
  d.u = mv_feedback(gamma, p, co, x);
  d.q = -(p.h * x - gamma) * jump.premium_loading / (jump.intensity * jump.m2()) / p.h;
  return d;
}

std::vector<DensityProbe> reinsurance_density_probes(int dim, std::uint64_t seed, double horizon) {
  auto out = default_density_probes(dim, seed, horizon);
  for (double c : {0.0, 0.5, 1.5}) {
    std::ostringstream name;
    name << "psi_scaled_" << c;
    out.push_back({name.str(),
                   [c](const ProbeState& s) {
                     Generator g = optimal_generator(*s.point, s.setup->jump);
                     g.psi.slope *= c;
                     return g;
                   },
                   false});
  }
  out.push_back({"psi_const_0.1",
                 [](const ProbeState& s) {
                   Generator g = optimal_generator(*s.point, s.setup->jump);
                   g.psi = JumpGenerator{0.0, 0.1};
                   return g;
                 },
                 false});
  out.push_back({"joint_eta+0.1e1_psi_scaled_0.5",
                 [](const ProbeState& s) {
                   Generator g = optimal_generator(*s.point, s.setup->jump);
                   g.eta[0] += 0.1;
                   g.psi.slope *= 0.5;
                   return g;
                 },
                 false});
  return out;
}

std::vector<ControlProbe> reinsurance_control_probes(int dim, std::uint64_t seed, double horizon) {
  auto out = default_control_probes(dim, seed, horizon);
  out.push_back({"q_zero", [](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.q = 0.0;
                   return d;
                 }});
  out.push_back({"q_half", [](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.q *= 0.5;
                   return d;
                 }});
  out.push_back({"q_double", [](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.q *= 2.0;
                   return d;
                 }});
  out.push_back({"pi_plus_const_q_zero", [](const ProbeState& s) {
                   ControlDecision d = optimal_decision(s);
                   d.u.array() += 1.0;
                   d.q = 0.0;
                   return d;
                 }});
  return out;
}

namespace {

PortfolioMarket market_of(const ScenarioConfig& cfg) {
  return cfg.market ? *cfg.market : generic_to_portfolio(cfg.model);
}

/// eta-hat = -sigma^{-1} mu - L / h and
/// pi-hat = (h sigma')^{-1} (lambda / theta [(sigma^{-1} mu + L / h) Y - Z] - X L).
SpecializationCheck check_specialization(const RobustSetup& setup, const PortfolioMarket& market,
                                         const PathBundle& bundle) {
  SpecializationCheck out;
  const std::size_t n = std::min<std::size_t>(bundle.n_paths(), 32);
  const Mat& sigma = market.sigma;
  const Vec& mu = market.mu;
  const Vec sinv_mu = sigma.partialPivLu().solve(mu);
  const double h0 = setup.solution->h0(*setup.model);
  const double y0 = setup.solution->y0(*setup.model);
  PathContext ctx;
  for (std::size_t p = 0; p < n; ++p) {
    build_context(setup, bundle, p, nullptr, ctx);
    for (int k = 0; k < ctx.steps; ++k) {
      const BsdePoint& pt = ctx.pt[k];
      const double lam = ctx.lambda_hat[k];
      const double x = optimal_wealth_closed_form(pt.h, pt.y, lam, h0, y0, setup.x, setup.theta);
      const Vec eta = -sinv_mu - pt.l / pt.h;
      const Vec rhs = lam / setup.theta * ((sinv_mu + pt.l / pt.h) * pt.y - pt.z) - x * pt.l;
      const Vec pi = (pt.h * sigma.transpose()).partialPivLu().solve(rhs);
      const Vec eta_g = optimal_eta(pt);
      const Vec u_g = optimal_u(pt, ctx.co[k], x, lam, setup.theta);
      out.max_eta_gap = std::max(out.max_eta_gap, (eta - eta_g).lpNorm<Eigen::Infinity>() /
                                                      std::max(1.0, eta_g.lpNorm<Eigen::Infinity>()));
      out.max_u_gap = std::max(out.max_u_gap, (pi - u_g).lpNorm<Eigen::Infinity>() /
                                                  std::max(1.0, u_g.lpNorm<Eigen::Infinity>()));
      ++out.points;
    }
  }
  out.pass = out.max_eta_gap <= 1e-12 && out.max_u_gap <= 1e-12;
  return out;
}

bool bsde_ok(const BsdeSolution& sol) {
  return sol.h_residual.ok && sol.y_residual.ok && sol.diagnostics.y_ge_one &&
         sol.diagnostics.min_h >= sol.h_floor();
}

ApplicationReport run_common(const ScenarioConfig& cfg, const RunOptions& opt, bool reinsurance) {
  const ValidationReport v = validate_scenario(cfg);
  if (!v.ok()) {
    const Violation& first = v.violations.front();
    throw ConfigError(first.location, first.rule + ": " + first.detail);
  }
  ApplicationReport rep;
  rep.kind = reinsurance ? "reinsurance" : "portfolio";
  rep.tier = cfg.model.tier();
  rep.seed = cfg.seed;
  rep.n_paths = cfg.n_paths;
  rep.steps = cfg.grid.steps();

  const JumpModel* jm = reinsurance ? &*cfg.jump : nullptr;
  const PathBundle bundle = generate_paths(cfg);
  BsdeOptions bo = opt.bsde;
  bo.regression = cfg.regression;
  const BsdeSolution sol = solve_bsde(cfg.model, bundle, bo, jm);
  const FeatureState s0 = cfg.model.initial_features();
  rep.h0 = sol.h_at(0, s0);
  rep.y0 = sol.y_at(0, s0);
  if (sol.y_backend() == Backend::Regression) {
    rep.h0_se = sol.h_se(0, s0);
    rep.y0_se = sol.y_se(0, s0);
  }
  rep.value = robust_value(rep.h0, rep.y0, cfg.x, cfg.theta,
                           std::max(1e-10, 3.0 * rep.y0_se));
  rep.diagnostics = sol.diagnostics;
  rep.h_residual = sol.h_residual;
  rep.y_residual = sol.y_residual;
  bool ok = bsde_ok(sol);

  const RobustSetup setup{&cfg.model, &sol, cfg.x, cfg.theta, jm};

  if (cfg.model.tier() == Tier::MarkovFactor && opt.affine_oracle &&
      sol.h_backend() == Backend::Regression && !jm) {
    BsdeOptions ao = bo;
    ao.markov_backend = Backend::Affine;
    const BsdeSolution aff = solve_bsde(cfg.model, bundle, ao, nullptr);
    rep.oracle = compare_with_affine(sol, aff, cfg.model, std::max(1, cfg.grid.steps() / 10));
    ok = ok && rep.oracle->ok;
  }

  {
    const ClosedFormCheck cf = closed_form_wealth(setup, bundle, false);
    rep.conservation_closed_form = cf.max_rel_deviation;
    ok = ok && cf.max_rel_deviation <= 1e-12;
  }
  if (!opt.conservation_steps.empty()) {
    rep.conservation =
        conservation_study(cfg, opt.conservation_steps, opt.conservation_paths, bo);
    ok = ok && rep.conservation->pass;
  }

  // The corollary formulas only exist for (r, mu, sigma) markets.
  bool has_market = cfg.market.has_value();
  if (!has_market) {
    try {
      (void)generic_to_portfolio(cfg.model);
      has_market = true;
    } catch (const Error&) {
    }
  }
  if (has_market) {
    rep.specialization = check_specialization(setup, market_of(cfg), bundle);
    ok = ok && rep.specialization.pass;
  } else {
    rep.specialization.pass = true;
  }

  if (jm) {
    const JumpGenerator psi = optimal_psi(*jm);
    rep.psi_slope = psi.slope;
    rep.psi_bound = jm->premium_loading * jm->claims.support_max() / (jm->intensity * jm->m2());
    check_jump_generator(psi, jm->claims);
    const double psi_max = psi(jm->claims.support_max());
    bool admissible = psi(0.0) >= 0.0 && psi_max <= rep.psi_bound * (1.0 + 1e-15);
    const double hat_gamma =
        gamma_hat(K_hat(rep.h0, rep.y0, cfg.x, cfg.theta, std::max(1e-10, 3.0 * rep.y0_se)), rep.h0,
                  rep.y0, cfg.x, std::max(1e-10, 3.0 * rep.y0_se));
    const std::size_t blocks = block_count(cfg.n_paths);
    std::vector<double> qmin(blocks, std::numeric_limits<double>::infinity());
    std::vector<double> qmax(blocks, -std::numeric_limits<double>::infinity());
    std::vector<double> gap(blocks, 0.0);
    for_each_block(cfg.n_paths, [&](std::size_t begin, std::size_t end, std::size_t b) {
      PathContext ctx;
      for (std::size_t p = begin; p < end; ++p) {
        build_context(setup, bundle, p, nullptr, ctx);
        for (int k = 0; k < ctx.steps; ++k) {
          const BsdePoint& pt = ctx.pt[k];
          const double q = optimal_q(pt, *jm, ctx.lambda_hat[k], cfg.theta);
          qmin[b] = std::min(qmin[b], q);
          qmax[b] = std::max(qmax[b], q);
          if (p < begin + 4) {
            const double x = optimal_wealth_closed_form(pt.h, pt.y, ctx.lambda_hat[k], rep.h0,
                                                        rep.y0, cfg.x, cfg.theta);
            const ControlDecision d = mv_feedback_reinsurance(hat_gamma, pt, ctx.co[k], x, *jm);
            gap[b] = std::max(gap[b], std::abs(d.q - q) / std::max(1.0, std::abs(q)));
          }
        }
      }
    });
    rep.q_min = *std::min_element(qmin.begin(), qmin.end());
    rep.q_max = *std::max_element(qmax.begin(), qmax.end());
    for (double g : gap) rep.feedback_q_gap = std::max(rep.feedback_q_gap, g);
    admissible = admissible && (jm->premium_loading > 0.0 ? rep.q_min > 0.0 : rep.q_min >= 0.0);
    rep.admissible = admissible;
    ok = ok && admissible && rep.feedback_q_gap <= 1e-10;

    if (opt.check_h_invariance) {
      const PathBundle plain(bundle.grid(), bundle.n_paths(), bundle.dim(), bundle.seed(),
                             bundle.stream(), bundle.antithetic(), std::nullopt);
      const BsdeSolution a = solve_h(cfg.model, cfg.grid, plain, bo);
      const BsdeSolution b = solve_h(cfg.model, cfg.grid, bundle, bo);
      bool same = a.h_at(0, s0) == b.h_at(0, s0) && a.h_grid() == b.h_grid();
      for (int k = 0; k <= cfg.grid.steps() && same; k += std::max(1, cfg.grid.steps() / 10)) {
        const FeatureState f = reference_features(cfg.model, cfg.grid.time(k));
        same = a.h_at(k, f) == b.h_at(k, f);
      }
      rep.h_invariant = same;
      ok = ok && same;
    }
  }

  if (opt.run_saddle) {
    SaddleOptions so = opt.saddle;
    if (jm) {
      if (so.density_probes.empty())
        so.density_probes = reinsurance_density_probes(bundle.dim(), so.probe_seed, cfg.grid.horizon());
      if (so.control_probes.empty())
        so.control_probes = reinsurance_control_probes(bundle.dim(), so.probe_seed, cfg.grid.horizon());
    }
    rep.saddle = verify_saddle(setup, bundle, so);
    ok = ok && rep.saddle->pass;
  }
  if (opt.run_duality && !(rep.y0 - 1.0 > std::max(kDegenerateTol, 3.0 * rep.y0_se))) {
    rep.duality_degenerate = true;
  } else if (opt.run_duality) {
    rep.duality = duality_report(setup, bundle, opt.duality);
    ok = ok && rep.duality->pass;
  }
  rep.pass = ok;
  return rep;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

ApplicationReport run_portfolio(const ScenarioConfig& cfg, const RunOptions& opt) {
  if (cfg.jump) throw ConfigError("/jump", "portfolio scenarios have no claims");
  if (cfg.model.tier() == Tier::PathDependent && !cfg.market)
    throw ConfigError("/model", "portfolio scenarios need an (r, mu, sigma) market");
  return run_common(cfg, opt, false);
}

ApplicationReport run_reinsurance(const ScenarioConfig& cfg, const RunOptions& opt) {
  if (!cfg.jump) throw ConfigError("/jump", "reinsurance scenarios need a claim model");
  return run_common(cfg, opt, true);
}

LimitComparison compare_reports(const ApplicationReport& a, const ApplicationReport& b) {
  LimitComparison out;
  const auto cmp = [&](const std::string& what, double x, double y) {
    ++out.compared;
    if (!same_bits(x, y)) {
      std::ostringstream os;
      os.precision(17);
      os << what << ": " << x << " vs " << y;
      out.mismatches.push_back(os.str());
    }
  };
  cmp("h0", a.h0, b.h0);
  cmp("y0", a.y0, b.y0);
  cmp("value", a.value, b.value);
  cmp("conservation_closed_form", a.conservation_closed_form, b.conservation_closed_form);
  if (a.saddle && b.saddle) {
    cmp("saddle.r0", a.saddle->r0, b.saddle->r0);
    for (const auto& p : a.saddle->probes) {
      const ProbeResult* q = b.saddle->find(p.kind, p.name);
      if (!q) continue;
      cmp("saddle." + p.kind + "." + p.name + ".estimate", p.estimate, q->estimate);
      cmp("saddle." + p.kind + "." + p.name + ".se", p.se, q->se);
      cmp("saddle." + p.kind + "." + p.name + ".density_mean", p.density_mean, q->density_mean);
    }
  }
  if (a.duality && b.duality) {
    cmp("duality.k_hat", a.duality->k_hat, b.duality->k_hat);
    cmp("duality.mv_value", a.duality->mv_value, b.duality->mv_value);
    cmp("duality.empirical.mean", a.duality->empirical.mean, b.duality->empirical.mean);
    cmp("duality.empirical.var", a.duality->empirical.var, b.duality->empirical.var);
    cmp("duality.empirical.value", a.duality->empirical.value, b.duality->empirical.value);
  }
  return out;
}

}  // namespace mmvlab
