#include "mmvlab/duality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "mmvlab/error.hpp"
#include "mmvlab/parallel.hpp"

namespace mmvlab {

namespace {

void require_nondegenerate(double y0, double tol) {
  if (!(y0 - 1.0 > tol)) {
    std::ostringstream os;
    os << "Y0 - 1 = " << (y0 - 1.0) << " is not above " << tol;
    throw Error(ErrorCode::DegenerateMarket, os.str());
  }
}

bool close(double a, double b, double ulps = 64.0) {
  return std::abs(a - b) <= ulps * std::numeric_limits<double>::epsilon() *
                                std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double J_value(double k, double gamma, double h0, double y0, double x, double tol) {
  require_nondegenerate(y0, tol);
  const double a = h0 * x - gamma;
  const double b = k - gamma;
  return a * a / y0 - b * b;
}

double F_value(double k, double h0, double y0, double x, double tol) {
  require_nondegenerate(y0, tol);
  const double inv = 1.0 / y0;
  const double d = k - h0 * x;
  return inv * d * d / (1.0 - inv);
}

double gamma_hat(double k, double h0, double y0, double x, double tol) {
  require_nondegenerate(y0, tol);
  const double inv = 1.0 / y0;
  return (inv * h0 * x - k) / (inv - 1.0);
}

double K_hat(double h0, double y0, double x, double theta, double tol) {
  require_nondegenerate(y0, tol);
  if (!(theta > 0.0)) throw Error(ErrorCode::DomainError, "theta must be positive");
  return h0 * x + (y0 - 1.0) / theta;
}

double mv_value(double h0, double y0, double x, double theta, double tol) {
  const double k = K_hat(h0, y0, x, theta, tol);
  const double chain = k - 0.5 * theta * F_value(k, h0, y0, x, tol);
  const double closed = h0 * x + (y0 - 1.0) / (2.0 * theta);
  if (!close(chain, closed)) {
    std::ostringstream os;
    os << "chain value " << chain << " differs from " << closed;
    throw Error(ErrorCode::DomainError, os.str());
  }
  return closed;
}

SupSearch sup_J(double k, double h0, double y0, double x, double tol) {
  require_nondegenerate(y0, tol);
  const auto neg = [&](double g) { return -J_value(k, g, h0, y0, x, tol); };
  // Grow a bracket around K until both ends fall below the centre.
  const double centre = 0.5 * (k + h0 * x);
  double width = 1.0 + std::abs(k - h0 * x);
  for (int i = 0; i < 200; ++i) {
    if (neg(centre - width) > neg(centre) && neg(centre + width) > neg(centre)) break;
    width *= 2.0;
  }
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::brent_find_minima(neg, centre - width, centre + width,
                                                       std::numeric_limits<double>::digits, iters);
  return SupSearch{r.first, -r.second, static_cast<int>(iters)};
}

Vec mv_feedback(double gamma, const BsdePoint& p, const Coefficients& co, double x) {
  const Vec rhs = -(p.phi - p.z / p.y) * (p.h * x - gamma) - x * p.l - p.h * x * co.c;
  return solve_d_transpose(co.d, rhs) / p.h;
}

MvEmpirical mv_moments(std::span<const double> x_t, double theta) {
  MvEmpirical out;
  double sum = 0.0;
  for (double v : x_t) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++out.n;
  }
  if (out.n < 2) throw Error(ErrorCode::NonFiniteState, "fewer than two finite terminal values");
  const double n = static_cast<double>(out.n);
  out.mean = sum / n;
  double m2 = 0.0;
  for (double v : x_t)
    if (std::isfinite(v)) m2 += (v - out.mean) * (v - out.mean);
  m2 /= n;
  out.var = m2 * n / (n - 1.0);
  out.value = out.mean - 0.5 * theta * out.var;
  // Influence functions of the mean, the variance and the MV value.
  double s_var = 0.0, s_val = 0.0;
  for (double v : x_t) {
    if (!std::isfinite(v)) continue;
    const double d = v - out.mean;
    const double iv = d * d - m2;
    const double ival = d - 0.5 * theta * iv;
    s_var += iv * iv;
    s_val += ival * ival;
  }
  out.se_mean = std::sqrt(m2 / n);
  out.se_var = std::sqrt(s_var / (n - 1.0) / n);
  out.se_value = std::sqrt(s_val / (n - 1.0) / n);
  return out;
}

MvEmpirical mv_empirical(const CoefficientModel& model, const ControlRule& rule,
                         const PathBundle& bundle, double x0, double theta,
                         const SimulateOptions& options) {
  SimulateOptions opt = options;
  opt.retain_full = false;
  const StatePath st = simulate_state(model, rule, bundle, x0, opt);
  return mv_moments(st.x, theta);
}

ControlRule mv_feedback_rule(const BsdeSolution& sol, double gamma) {
  return [&sol, gamma](const ControlInput& in) {
    const BsdePoint pt = sol.at(in.step.k, *in.step.features, *in.step.coef);
    return ControlDecision{mv_feedback(gamma, pt, *in.step.coef, in.x), 0.0};
  };
}

// ---------------------------------------------------------------------------

DualityReport duality_report(const RobustSetup& setup, const PathBundle& bundle,
                             const DualityOptions& options) {
  const BsdeSolution& sol = *setup.solution;
  const FeatureState s0 = setup.model->initial_features();
  DualityReport rep;
  rep.h0 = sol.h_at(0, s0);
  rep.y0 = sol.y_at(0, s0);
  rep.x = setup.x;
  rep.theta = setup.theta;
  rep.seed = bundle.seed();
  rep.n_paths = bundle.n_paths();
  rep.steps = bundle.grid().steps();
  const bool regression = sol.y_backend() == Backend::Regression;
  const double h0_se = regression ? sol.h_se(0, s0) : 0.0;
  const double y0_se = regression ? sol.y_se(0, s0) : 0.0;
  const double tol = std::max(kDegenerateTol, 3.0 * y0_se);
  const double hx = rep.h0 * rep.x;
  const double theta = rep.theta;

  rep.k_hat = K_hat(rep.h0, rep.y0, rep.x, theta, tol);
  rep.gamma_hat_k_hat = gamma_hat(rep.k_hat, rep.h0, rep.y0, rep.x, tol);
  rep.gamma_hat_k_hat_closed = hx + rep.y0 / theta;
  rep.f_k_hat = F_value(rep.k_hat, rep.h0, rep.y0, rep.x, tol);
  rep.var_target = (rep.y0 - 1.0) / (theta * theta);
  rep.mv_value = mv_value(rep.h0, rep.y0, rep.x, theta, tol);
  rep.mmv_value = robust_value(rep.h0, rep.y0, rep.x, theta);
  rep.chain_gap = std::abs(rep.k_hat - 0.5 * theta * rep.f_k_hat - rep.mmv_value);
  bool ok = close(rep.gamma_hat_k_hat, rep.gamma_hat_k_hat_closed) &&
            close(rep.f_k_hat, rep.var_target) && rep.mv_value == rep.mmv_value &&
            close(rep.k_hat - 0.5 * theta * rep.f_k_hat, rep.mmv_value);

  for (double off : options.f_offsets) {
    FCheck c;
    c.k = hx + off;
    c.f = F_value(c.k, rep.h0, rep.y0, rep.x, tol);
    c.gamma_hat = gamma_hat(c.k, rep.h0, rep.y0, rep.x, tol);
    const SupSearch s = sup_J(c.k, rep.h0, rep.y0, rep.x, tol);
    c.sup = s.value;
    c.gamma_sup = s.gamma;
    c.pass = std::abs(c.f - c.sup) <= 1e-9;
    ok = ok && c.pass;
    rep.f_checks.push_back(c);
  }

  // Feedback equivalence on the closed-form optimal wealth.
  {
    const std::size_t n = std::min<std::size_t>(bundle.n_paths(), 64);
    PathContext ctx;
    for (std::size_t p = 0; p < n; ++p) {
      build_context(setup, bundle, p, nullptr, ctx);
      for (int k = 0; k < ctx.steps; ++k) {
        const BsdePoint& pt = ctx.pt[k];
        const double lam = ctx.lambda_hat[k];
        const double x =
            optimal_wealth_closed_form(pt.h, pt.y, lam, rep.h0, rep.y0, rep.x, theta);
        const Vec a = mv_feedback(rep.gamma_hat_k_hat, pt, ctx.co[k], x);
        const Vec b = optimal_u(pt, ctx.co[k], x, lam, theta);
        rep.feedback_gap =
            std::max(rep.feedback_gap, (a - b).lpNorm<Eigen::Infinity>() /
                                           std::max(1.0, b.lpNorm<Eigen::Infinity>()));
      }
    }
    ok = ok && rep.feedback_gap <= 1e-10;
  }

  if (options.empirical) {
    rep.empirical_run = true;
    const JumpModel* jm = setup.jump && bundle.jump() ? setup.jump : nullptr;
    const StatePath st = simulate_optimal(setup, bundle, false);
    rep.empirical = mv_moments(st.x, theta);
    rep.target_se_mean = std::hypot(rep.x * h0_se, y0_se / theta);
    rep.target_se_var = y0_se / (theta * theta);
    rep.target_se_value = std::hypot(rep.x * h0_se, y0_se / (2.0 * theta));
    const double g = options.gate;
    const MvEmpirical& e = rep.empirical;
    rep.mean_ok = std::abs(e.mean - rep.k_hat) <= g * std::hypot(e.se_mean, rep.target_se_mean);
    rep.var_ok = std::abs(e.var - rep.var_target) <= g * std::hypot(e.se_var, rep.target_se_var);
    rep.value_ok =
        std::abs(e.value - rep.mv_value) <= g * std::hypot(e.se_value, rep.target_se_value);
    ok = ok && rep.mean_ok && rep.var_ok && rep.value_ok;

    if (!jm) {
      for (double off : options.k_offsets) {
        MeanConstraintCheck c;
        c.k = rep.k_hat + off;
        const double gm = gamma_hat(c.k, rep.h0, rep.y0, rep.x, tol);
        const MvEmpirical m =
            mv_empirical(*setup.model, mv_feedback_rule(sol, gm), bundle, rep.x, theta);
        c.mean = m.mean;
        c.se = std::hypot(m.se_mean, rep.target_se_mean);
        c.z = c.se > 0.0 ? (m.mean - c.k) / c.se : 0.0;
        c.pass = std::abs(m.mean - c.k) <= g * c.se;
        ok = ok && c.pass;
        rep.mean_checks.push_back(c);
      }
    }
    if (options.suboptimal_probes) {
      const auto add = [&](const std::string& name, const ControlRule& rule) {
        const MvEmpirical m = mv_empirical(*setup.model, rule, bundle, rep.x, theta);
        ProbeValue pv{name, m.value, m.se_value, false};
        pv.pass = m.value <= rep.mv_value + g * std::hypot(m.se_value, rep.target_se_value);
        ok = ok && pv.pass;
        rep.probes.push_back(pv);
      };
      const int n = bundle.dim();
      add("zero", [n](const ControlInput&) { return ControlDecision{Vec::Zero(n), 0.0}; });
      add("constant_one", [n](const ControlInput&) { return ControlDecision{Vec::Ones(n), 0.0}; });
      if (!jm) {
        const double gm = gamma_hat(rep.k_hat + 0.5, rep.h0, rep.y0, rep.x, tol);
        add("feedback_shifted_target", mv_feedback_rule(sol, gm));
      }
    }
  }
  rep.pass = ok;
  return rep;
}

}  // namespace mmvlab
