#include "mmvlab/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "mmvlab/error.hpp"
#include "mmvlab/parallel.hpp"

namespace mmvlab {

std::string to_string(Backend b) {
  switch (b) {
    case Backend::Quadrature: return "quadrature";
    case Backend::Affine: return "affine";
    case Backend::Regression: return "regression";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Small algebra helpers

namespace {

template <class Lu>
void require_invertible(const Lu& lu) {
  if (!(lu.rcond() > 1e-14)) throw Error(ErrorCode::SingularD, "D is numerically singular");
}

void floor_error(double h, double floor, int k) {
  std::ostringstream os;
  os << "h = " << h << " below floor " << floor << " at k=" << k;
  throw Error(ErrorCode::FloorViolation, os.str());
}

}  // namespace

Vec solve_d(const Mat& d, const Vec& v) {
  if (d.rows() == 1) {
    if (!(std::abs(d(0, 0)) > 0.0)) throw Error(ErrorCode::SingularD, "D is zero");
    return v / d(0, 0);
  }
  const Eigen::PartialPivLU<Mat> lu(d);
  require_invertible(lu);
  return lu.solve(v);
}

Vec solve_d_transpose(const Mat& d, const Vec& v) {
  if (d.rows() == 1) return solve_d(d, v);
  const Mat dt = d.transpose();
  const Eigen::PartialPivLU<Mat> lu(dt);
  require_invertible(lu);
  return lu.solve(v);
}

Vec phi(double h, const Vec& l, const Coefficients& co, double h_floor) {
  if (!(h >= h_floor)) floor_error(h, h_floor, -1);
  return solve_d(co.d, co.b) + l / h;
}

Vec alpha(const Vec& u, double x, const BsdePoint& p, const Coefficients& co) {
  return p.h * (co.d.transpose() * u) + x * p.l + p.h * x * co.c;
}

// ---------------------------------------------------------------------------
// Affine closed form

AffineFactor AffineFactor::from_model(const CoefficientModel& model) {
  if (model.tier() != Tier::MarkovFactor || !model.factor_spec())
    throw Error(ErrorCode::DomainError, "affine closed form needs the MarkovFactor tier");
  const auto& f = *model.factor_spec();
  if (!(f.kappa > 0.0)) throw Error(ErrorCode::DomainError, "affine closed form needs kappa > 0");
  AffineFactor a;
  a.kappa = f.kappa;
  a.g = solve_d(model.const_d(), model.const_b());
  a.v = f.vol;
  a.kbar = a.g.dot(model.const_c());
  a.vol2 = f.vol.squaredNorm();
  a.shifted_mean = f.mean - f.vol.dot(a.g) / f.kappa;
  return a;
}

double AffineFactor::beta(double tau) const { return -std::expm1(-kappa * tau) / kappa; }

double AffineFactor::alpha(double tau) const {
  const double b = beta(tau);
  return (shifted_mean - vol2 / (2.0 * kappa * kappa)) * (b - tau) - vol2 * b * b / (4.0 * kappa);
}

double AffineFactor::h(double tau, double f) const {
  return std::exp(-kbar * tau - alpha(tau) + beta(tau) * f);
}

Vec AffineFactor::h_inv_l(double tau) const { return beta(tau) * v; }

// ---------------------------------------------------------------------------
// BsdeSolution accessors

double BsdeSolution::h_at(int k, const FeatureState& s) const {
  switch (h_backend_) {
    case Backend::Quadrature: return h_[k];
    case Backend::Affine: return affine_->h(grid_.horizon() - grid_.time(k), s.value[0]);
    case Backend::Regression: return k == grid_.steps() ? 1.0 : 1.0 / hbar_fit_[k].value(s);
  }
  return 1.0;
}

Vec BsdeSolution::smoothed(const std::vector<std::vector<SurfaceFit>>& fits, int k,
                           const FeatureState& s, double scale) const {
  Vec out = Vec::Zero(dim_);
  const int last = static_cast<int>(fits.size()) - 1;
  const int half = smoothing_ / 2;
  const int centre = std::min(k, last);
  int used = 0;
  for (int j = std::max(0, centre - half); j <= std::min(last, centre + half); ++j) {
    for (int i = 0; i < dim_; ++i) out[i] += fits[j][i].value(s);
    ++used;
  }
  return out * (scale / used);
}

Vec BsdeSolution::l_at(int k, const FeatureState& s) const {
  switch (h_backend_) {
    case Backend::Quadrature: return Vec::Zero(dim_);
    case Backend::Affine: {
      const double tau = grid_.horizon() - grid_.time(k);
      return affine_->h(tau, s.value[0]) * affine_->h_inv_l(tau);
    }
    case Backend::Regression: {
      if (k == grid_.steps()) return Vec::Zero(dim_);
      if (tier_ == Tier::PathDependent) return smoothed(l_fit_, k, s, 1.0);
      const auto& fit = hbar_fit_[k];
      const double slope = fit.standardizer.slope(0);
      if (slope == 0.0) return Vec::Zero(dim_);
      const double hbar = fit.value(s);
      const double dhbar = fit.derivative(s, 0, 1e-3 / slope);
      return (-dhbar / (hbar * hbar)) * loading_;
    }
  }
  return Vec::Zero(dim_);
}

double BsdeSolution::y_at(int k, const FeatureState& s) const {
  if (!has_y_) return 1.0;
  if (y_backend_ != Backend::Regression) return y_[k];
  if (k == grid_.steps()) return 1.0;
  const double scale = jump_rate_ == 0.0 ? 1.0 : std::exp(jump_rate_ * (grid_.horizon() - grid_.time(k)));
  return y_fit_[k].value(s) * scale;
}

Vec BsdeSolution::z_at(int k, const FeatureState& s) const {
  if (!has_y_ || y_backend_ != Backend::Regression || k == grid_.steps()) return Vec::Zero(dim_);
  const double scale = jump_rate_ == 0.0 ? 1.0 : std::exp(jump_rate_ * (grid_.horizon() - grid_.time(k)));
  if (tier_ == Tier::PathDependent) return smoothed(z_fit_, k, s, scale);
  const auto& fit = y_fit_[k];
  const double slope = fit.standardizer.slope(0);
  if (slope == 0.0) return Vec::Zero(dim_);
  return (fit.derivative(s, 0, 1e-3 / slope) * scale) * loading_;
}

BsdePoint BsdeSolution::at(int k, const FeatureState& s, const Coefficients& co) const {
  BsdePoint p;
  p.h = h_at(k, s);
  if (!(p.h >= h_floor_)) floor_error(p.h, h_floor_, k);
  p.l = l_at(k, s);
  p.phi = solve_d(co.d, co.b) + p.l / p.h;
  p.y = y_at(k, s);
  p.z = z_at(k, s);
  return p;
}

double BsdeSolution::h_se(int k, const FeatureState& s) const {
  if (h_backend_ != Backend::Regression || k == grid_.steps()) return 0.0;
  const double hbar = hbar_fit_[k].value(s);
  return hbar_fit_[k].se(s) / (hbar * hbar);
}

double BsdeSolution::y_se(int k, const FeatureState& s) const {
  if (!has_y_ || y_backend_ != Backend::Regression || k == grid_.steps()) return 0.0;
  const double scale = jump_rate_ == 0.0 ? 1.0 : std::exp(jump_rate_ * (grid_.horizon() - grid_.time(k)));
  return y_fit_[k].se(s) * scale;
}

// ---------------------------------------------------------------------------
// Regression plumbing shared by the simulation backends

namespace {

struct PathTrace {
  std::vector<FeatureState> f;  // k = 0..N
  std::vector<double> dw;       // k * n + i
  std::vector<Coefficients> co; // k = 0..N
  std::size_t cap_hits = 0;
};

void trace_path(const PathBundle& bundle, const CoefficientModel& model, std::size_t p,
                const DriftShift* shift, PathTrace& tr) {
  const int steps = bundle.grid().steps();
  const int n = bundle.dim();
  tr.f.resize(steps + 1);
  tr.co.resize(steps + 1);
  tr.dw.resize(static_cast<std::size_t>(steps) * n);
  PathCursor cur(bundle, model, p, shift);
  for (;;) {
    const int k = cur.k();
    tr.f[k] = cur.features();
    tr.co[k] = cur.coefficients();
    if (cur.done()) break;
    for (int i = 0; i < n; ++i) tr.dw[k * n + i] = cur.dw()[i];
    cur.advance();
  }
  tr.cap_hits = cur.cap_hits();
}

struct Standardization {
  std::vector<Standardizer> st;
  std::vector<PolynomialBasis> basis;
};

Standardization standardize(const PathBundle& bundle, const CoefficientModel& model,
                            const DriftShift* shift, int degree) {
  const int steps = bundle.grid().steps();
  std::vector<FeatureMoments> total(steps + 1);
  block_reduce(
      bundle.n_paths(), total, [&] { return std::vector<FeatureMoments>(steps + 1); },
      [&](std::size_t begin, std::size_t end, std::vector<FeatureMoments>& part) {
        for (std::size_t p = begin; p < end; ++p) {
          PathCursor cur(bundle, model, p, shift);
          for (;;) {
            part[cur.k()].add(cur.features());
            if (cur.done()) break;
            cur.advance();
          }
        }
      },
      [](std::vector<FeatureMoments>& acc, const std::vector<FeatureMoments>& part) {
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k].merge(part[k]);
      });
  Standardization out;
  for (int k = 0; k <= steps; ++k) {
    out.st.push_back(Standardizer::from_moments(total[k], model.feature_count()));
    out.basis.emplace_back(out.st.back().active(), degree);
  }
  return out;
}

using AccVec = std::vector<RegressionAccumulator>;

/// Accumulates one regression per grid point k < N; `targets(tr, out)`
/// writes targets[k * m + j] for the traced path.
template <class Targets>
std::vector<std::vector<SurfaceFit>> regress(const PathBundle& bundle,
                                             const CoefficientModel& model,
                                             const DriftShift* shift, const Standardization& sd,
                                             int m, const RegressionSpec& spec, Targets targets,
                                             std::size_t* cap_hits) {
  const int steps = bundle.grid().steps();
  auto make = [&] {
    AccVec a;
    a.reserve(steps);
    for (int k = 0; k < steps; ++k) a.emplace_back(sd.basis[k].size(), m);
    return a;
  };
  struct Part {
    AccVec acc;
    std::size_t caps = 0;
  };
  Part total{make(), 0};
  block_reduce(
      bundle.n_paths(), total, [&] { return Part{make(), 0}; },
      [&](std::size_t begin, std::size_t end, Part& part) {
        PathTrace tr;
        std::vector<double> y(static_cast<std::size_t>(steps) * m);
        std::array<double, 2> z{};
        std::array<double, kMaxBasis> b{};
        for (std::size_t p = begin; p < end; ++p) {
          trace_path(bundle, model, p, shift, tr);
          part.caps += tr.cap_hits;
          targets(tr, y);
          for (int k = 0; k < steps; ++k) {
            sd.st[k].apply(tr.f[k], z.data());
            sd.basis[k].evaluate(z.data(), b.data());
            part.acc[k].add(b.data(), y.data() + static_cast<std::size_t>(k) * m);
          }
        }
      },
      [](Part& acc, const Part& part) {
        for (std::size_t k = 0; k < acc.acc.size(); ++k) acc.acc[k].merge(part.acc[k]);
        acc.caps += part.caps;
      });
  if (cap_hits) *cap_hits += total.caps;
  std::vector<std::vector<SurfaceFit>> fits;
  fits.reserve(steps);
  for (int k = 0; k < steps; ++k)
    fits.push_back(fit_surfaces(total.acc[k], sd.st[k], spec.degree, spec.max_condition));
  return fits;
}

double kbar_of(const Coefficients& co) { return solve_d(co.d, co.b).dot(co.c); }

void require_grid(const PathBundle& bundle, const TimeGrid& grid, const CoefficientModel& model) {
  if (!(bundle.grid() == grid)) throw Error(ErrorCode::DomainError, "bundle grid differs from solver grid");
  if (bundle.dim() != model.dim()) throw Error(ErrorCode::DimensionMismatch, "bundle dimension");
}

void fit_hbar(BsdeSolution& sol, std::vector<SurfaceFit>& out, const CoefficientModel& model,
              const PathBundle& bundle, const BsdeOptions& opt, BsdeDiagnostics& diag) {
  const PathBundle rb = bundle.with_stream(streams::kRegressionShifted);
  const DriftShift shift = [](int, const FeatureState&, const Coefficients& co) {
    return Vec(-solve_d(co.d, co.b));
  };
  const Standardization sd = standardize(rb, model, &shift, opt.regression.degree);
  const int steps = rb.grid().steps();
  const double dt = rb.grid().dt();
  auto fits = regress(
      rb, model, &shift, sd, 1, opt.regression,
      [&](const PathTrace& tr, std::vector<double>& y) {
        std::vector<double> prefix(steps + 1, 0.0);
        double g_prev = -tr.co[0].a + kbar_of(tr.co[0]);
        for (int k = 0; k < steps; ++k) {
          const double g_next = -tr.co[k + 1].a + kbar_of(tr.co[k + 1]);
          prefix[k + 1] = prefix[k] + 0.5 * (g_prev + g_next) * dt;
          g_prev = g_next;
        }
        for (int k = 0; k < steps; ++k) y[k] = std::exp(prefix[steps] - prefix[k]);
      },
      &diag.cap_hits);
  out.clear();
  for (auto& f : fits) {
    diag.min_r2_h = std::min(diag.min_r2_h, f[0].r2);
    diag.max_condition = std::max(diag.max_condition, f[0].condition);
    out.push_back(std::move(f[0]));
  }
  diag.regression_paths = rb.n_paths();
  (void)sol;
}

}  // namespace

// ---------------------------------------------------------------------------
// h solvers

BsdeSolution solve_h_deterministic(const CoefficientModel& model, const TimeGrid& grid,
                                   const BsdeOptions& opt) {
  if (model.tier() != Tier::Deterministic)
    throw Error(ErrorCode::DomainError, "solve_h_deterministic needs the Deterministic tier");
  BsdeSolution sol(Tier::Deterministic, grid, model.dim(), opt.h_floor);
  sol.h_backend_ = Backend::Quadrature;
  const FeatureState s0 = model.initial_features();
  const auto exponent = suffix_integrals(
      [&](double t) {
        const Coefficients co = model.evaluate(t, s0);
        return co.a - kbar_of(co);
      },
      grid, opt.quadrature);
  sol.h_.resize(exponent.size());
  for (std::size_t k = 0; k < exponent.size(); ++k) {
    sol.h_[k] = std::exp(exponent[k]);
    if (!(sol.h_[k] >= opt.h_floor)) floor_error(sol.h_[k], opt.h_floor, static_cast<int>(k));
  }
  sol.diagnostics.min_h = *std::min_element(sol.h_.begin(), sol.h_.end());
  return sol;
}

BsdeSolution solve_h_markov(const CoefficientModel& model, const TimeGrid& grid,
                            const PathBundle& bundle, const BsdeOptions& opt) {
  if (model.tier() != Tier::MarkovFactor)
    throw Error(ErrorCode::DomainError, "solve_h_markov needs the MarkovFactor tier");
  BsdeSolution sol(Tier::MarkovFactor, grid, model.dim(), opt.h_floor);
  sol.loading_ = model.feature_loading(0);
  sol.smoothing_ = opt.smoothing;
  if (model.factor_spec()->kappa > 0.0) sol.affine_ = AffineFactor::from_model(model);
  if (opt.markov_backend == Backend::Affine) {
    if (!sol.affine_) throw Error(ErrorCode::DomainError, "affine backend needs kappa > 0");
    sol.h_backend_ = Backend::Affine;
  } else {
    require_grid(bundle, grid, model);
    sol.h_backend_ = Backend::Regression;
    fit_hbar(sol, sol.hbar_fit_, model, bundle, opt, sol.diagnostics);
    const double hbar0 = sol.hbar_fit_[0].value(model.initial_features());
    sol.diagnostics.h0_se = sol.hbar_fit_[0].se(model.initial_features()) / (hbar0 * hbar0);
  }
  double min_h = INFINITY;
  for (int k = 0; k <= grid.steps(); ++k)
    min_h = std::min(min_h, sol.h_at(k, reference_features(model, grid.time(k))));
  sol.diagnostics.min_h = min_h;
  if (!(min_h >= opt.h_floor)) floor_error(min_h, opt.h_floor, -1);
  return sol;
}

BsdeSolution solve_h_path_dependent(const CoefficientModel& model, const TimeGrid& grid,
                                    const PathBundle& bundle, const BsdeOptions& opt) {
  if (model.tier() != Tier::PathDependent)
    throw Error(ErrorCode::DomainError, "solve_h_path_dependent needs the PathDependent tier");
  require_grid(bundle, grid, model);
  BsdeSolution sol(Tier::PathDependent, grid, model.dim(), opt.h_floor);
  sol.h_backend_ = Backend::Regression;
  sol.smoothing_ = opt.smoothing;
  sol.loading_ = model.feature_loading(0);
  fit_hbar(sol, sol.hbar_fit_, model, bundle, opt, sol.diagnostics);
  const FeatureState s0 = model.initial_features();
  const double hbar0 = sol.hbar_fit_[0].value(s0);
  sol.diagnostics.h0_se = sol.hbar_fit_[0].se(s0) / (hbar0 * hbar0);

  // L from the martingale increments of h along P-paths.
  const PathBundle pb = bundle.with_stream(streams::kRegressionPhysical);
  const Standardization sd = standardize(pb, model, nullptr, opt.regression.degree);
  const int steps = grid.steps();
  const int n = model.dim();
  const double dt = grid.dt();
  double min_h = INFINITY;
  sol.l_fit_ = regress(
      pb, model, nullptr, sd, n, opt.regression,
      [&](const PathTrace& tr, std::vector<double>& y) {
        double h_prev = sol.h_at(0, tr.f[0]);
        for (int k = 0; k < steps; ++k) {
          const double h_next = sol.h_at(k + 1, tr.f[k + 1]);
          if (!(h_next >= opt.h_floor)) floor_error(h_next, opt.h_floor, k + 1);
          for (int i = 0; i < n; ++i) y[k * n + i] = (h_next - h_prev) * tr.dw[k * n + i] / dt;
          h_prev = h_next;
        }
      },
      nullptr);
  for (int k = 0; k <= steps; ++k)
    min_h = std::min(min_h, sol.h_at(k, reference_features(model, grid.time(k))));
  sol.diagnostics.min_h = min_h;
  if (!(min_h >= opt.h_floor)) floor_error(min_h, opt.h_floor, -1);
  return sol;
}

BsdeSolution solve_h(const CoefficientModel& model, const TimeGrid& grid, const PathBundle& bundle,
                     const BsdeOptions& opt) {
  switch (model.tier()) {
    case Tier::Deterministic: return solve_h_deterministic(model, grid, opt);
    case Tier::MarkovFactor: return solve_h_markov(model, grid, bundle, opt);
    case Tier::PathDependent: return solve_h_path_dependent(model, grid, bundle, opt);
  }
  throw Error(ErrorCode::DomainError, "unknown tier");
}

// ---------------------------------------------------------------------------
// Y solvers

BsdeSolution solve_y_impl(const CoefficientModel& model, const BsdeSolution& h_solution,
                          const PathBundle* bundle, double jump_rate, const BsdeOptions& opt) {
  BsdeSolution sol = h_solution;
  sol.has_y_ = false;
  sol.jump_rate_ = jump_rate;
  sol.y_fit_.clear();
  sol.z_fit_.clear();
  const TimeGrid& grid = sol.grid_;
  const int steps = grid.steps();
  const double horizon = grid.horizon();

  if (sol.h_backend_ == Backend::Quadrature || sol.h_backend_ == Backend::Affine) {
    sol.y_backend_ = sol.h_backend_;
    const FeatureState s0 = model.initial_features();
    std::function<double(double)> integrand;
    if (sol.h_backend_ == Backend::Quadrature) {
      integrand = [&](double t) {
        const Coefficients co = model.evaluate(t, s0);
        return solve_d(co.d, co.b).squaredNorm() + jump_rate;
      };
    } else {
      integrand = [&](double t) { return sol.affine_->phi(horizon - t).squaredNorm() + jump_rate; };
    }
    const auto q = suffix_integrals(integrand, grid, opt.quadrature);
    sol.y_.resize(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) sol.y_[k] = std::exp(q[k]);
    sol.has_y_ = true;
    sol.diagnostics.min_y = *std::min_element(sol.y_.begin(), sol.y_.end());
    sol.diagnostics.y_ge_one = sol.diagnostics.min_y >= 1.0;
    return sol;
  }

  if (!bundle) throw Error(ErrorCode::DomainError, "regression Y needs a path bundle");
  sol.y_backend_ = Backend::Regression;
  const PathBundle pb = bundle->with_stream(streams::kRegressionPhysical);
  const Standardization sd = standardize(pb, model, nullptr, opt.regression.degree);
  const int n = model.dim();
  const double dt = grid.dt();
  auto fits = regress(
      pb, model, nullptr, sd, 1, opt.regression,
      [&](const PathTrace& tr, std::vector<double>& y) {
        // log of exp(-2 int phi' dW - int |phi|^2 ds), left-point sums.
        std::vector<double> logj(steps + 1, 0.0);
        for (int k = 0; k < steps; ++k) {
          const BsdePoint p = sol.at(k, tr.f[k], tr.co[k]);
          double dot = 0.0;
          for (int i = 0; i < n; ++i) dot += p.phi[i] * tr.dw[k * n + i];
          logj[k + 1] = logj[k] - 2.0 * dot - p.phi.squaredNorm() * dt;
        }
        for (int k = 0; k < steps; ++k) y[k] = std::exp(logj[steps] - logj[k]);
      },
      nullptr);
  for (auto& f : fits) {
    sol.diagnostics.min_r2_y = std::min(sol.diagnostics.min_r2_y, f[0].r2);
    sol.diagnostics.max_condition = std::max(sol.diagnostics.max_condition, f[0].condition);
    sol.y_fit_.push_back(std::move(f[0]));
  }
  sol.has_y_ = true;
  sol.diagnostics.y0_se = sol.y_se(0, model.initial_features());

  if (sol.tier_ == Tier::PathDependent) {
    sol.z_fit_ = regress(
        pb, model, nullptr, sd, n, opt.regression,
        [&](const PathTrace& tr, std::vector<double>& y) {
          double y_prev = sol.y_fit_[0].value(tr.f[0]);
          for (int k = 0; k < steps; ++k) {
            const double y_next = k + 1 == steps ? 1.0 : sol.y_fit_[k + 1].value(tr.f[k + 1]);
            for (int i = 0; i < n; ++i) y[k * n + i] = (y_next - y_prev) * tr.dw[k * n + i] / dt;
            y_prev = y_next;
          }
        },
        nullptr);
  }

  // Y >= 1 up to three regression standard errors along the reference path.
  double min_y = INFINITY;
  bool ok = true;
  for (int k = 0; k <= steps; ++k) {
    const FeatureState s = reference_features(model, grid.time(k));
    const double v = sol.y_at(k, s);
    min_y = std::min(min_y, v);
    if (v < 1.0 - 3.0 * sol.y_se(k, s)) ok = false;
  }
  sol.diagnostics.min_y = min_y;
  sol.diagnostics.y_ge_one = ok;
  return sol;
}

BsdeSolution solve_y(const CoefficientModel& model, const BsdeSolution& h_solution,
                     const PathBundle& bundle, const BsdeOptions& opt) {
  return solve_y_impl(model, h_solution, &bundle, 0.0, opt);
}

BsdeSolution solve_y_reinsurance(const CoefficientModel& model, const JumpModel& jump,
                                 const BsdeSolution& h_solution, const PathBundle& bundle,
                                 const BsdeOptions& opt) {
  const double rate = jump.premium_loading * jump.premium_loading / (jump.intensity * jump.m2());
  return solve_y_impl(model, h_solution, &bundle, rate, opt);
}

BsdeSolution solve_bsde(const CoefficientModel& model, const PathBundle& bundle,
                        const BsdeOptions& opt, const JumpModel* jump) {
  BsdeSolution h = solve_h(model, bundle.grid(), bundle, opt);
  BsdeSolution sol =
      jump ? solve_y_reinsurance(model, *jump, h, bundle, opt) : solve_y(model, h, bundle, opt);
  bsde_residuals(sol, model, bundle, jump);
  return sol;
}

// ---------------------------------------------------------------------------
// Residual diagnostics

void bsde_residuals(BsdeSolution& sol, const CoefficientModel& model, const PathBundle& bundle,
                    const JumpModel* jump) {
  const TimeGrid& grid = sol.grid();
  const int steps = grid.steps();
  const double dt = grid.dt();
  const double c = sol.jump_rate();
  (void)jump;

  if (sol.h_backend() == Backend::Quadrature) {
    // Simpson driver over each step; L = Z = 0. The midpoint solution comes
    // from the exponential representation on the half step.
    const FeatureState s0 = model.initial_features();
    auto h_rate = [&](double t) {
      const Coefficients co = model.evaluate(t, s0);
      return -co.a + kbar_of(co);
    };
    auto y_rate = [&](double t) {
      const Coefficients co = model.evaluate(t, s0);
      return -(solve_d(co.d, co.b).squaredNorm() + c);
    };
    double max_h = 0.0;
    double max_y = 0.0;
    for (int k = 0; k < steps; ++k) {
      const double t0 = grid.time(k);
      const double t1 = grid.time(k + 1);
      const double tm = 0.5 * (t0 + t1);
      const double h0 = sol.h_at(k, s0);
      const double h1 = sol.h_at(k + 1, s0);
      const double hm = h1 * std::exp(-simpson(h_rate, tm, t1));
      const double fh = h_rate(t0) * h0 + 4.0 * h_rate(tm) * hm + h_rate(t1) * h1;
      max_h = std::max(max_h, std::abs(h1 - h0 - fh * dt / 6.0));
      if (sol.has_y()) {
        const double y0 = sol.y_at(k, s0);
        const double y1 = sol.y_at(k + 1, s0);
        const double ym = y1 * std::exp(-simpson(y_rate, tm, t1));
        const double fy = y_rate(t0) * y0 + 4.0 * y_rate(tm) * ym + y_rate(t1) * y1;
        max_y = std::max(max_y, std::abs(y1 - y0 - fy * dt / 6.0));
      }
    }
    sol.h_residual = ResidualStats{};
    sol.h_residual.max_abs = max_h;
    sol.h_residual.ok = max_h <= 1e-8;
    sol.y_residual = ResidualStats{};
    sol.y_residual.max_abs = max_y;
    sol.y_residual.ok = max_y <= 1e-8;
    return;
  }

  // One-step residuals along an independent ensemble under P.
  const PathBundle db = bundle.with_stream(streams::kDiagnostics);
  const int n = model.dim();
  struct Part {
    std::vector<double> h_sum, h_sq, y_sum, y_sq;  // per step
    double h_tot = 0.0, h_tot_sq = 0.0, y_tot = 0.0, y_tot_sq = 0.0;
    std::size_t n = 0;
  };
  auto make = [&] {
    Part p;
    p.h_sum.assign(steps, 0.0);
    p.h_sq.assign(steps, 0.0);
    p.y_sum.assign(steps, 0.0);
    p.y_sq.assign(steps, 0.0);
    return p;
  };
  Part total = make();
  block_reduce(
      db.n_paths(), total, make,
      [&](std::size_t begin, std::size_t end, Part& part) {
        PathTrace tr;
        for (std::size_t p = begin; p < end; ++p) {
          trace_path(db, model, p, nullptr, tr);
          BsdePoint cur = sol.at(0, tr.f[0], tr.co[0]);
          double h_acc = 0.0;
          double y_acc = 0.0;
          for (int k = 0; k < steps; ++k) {
            const BsdePoint next = sol.at(k + 1, tr.f[k + 1], tr.co[k + 1]);
            const Coefficients& co = tr.co[k];
            const Vec g = solve_d(co.d, co.b);
            const Coefficients& cn = tr.co[k + 1];
            const Vec gn = solve_d(cn.d, cn.b);
            auto h_driver = [&](const BsdePoint& q, const Coefficients& cc, const Vec& gg) {
              return (-cc.a + gg.dot(cc.c)) * q.h + gg.dot(q.l) + q.l.squaredNorm() / q.h;
            };
            auto y_driver = [&](const BsdePoint& q) {
              return -(q.phi.squaredNorm() + c) * q.y + 2.0 * q.phi.dot(q.z);
            };
            double l_dw = 0.0;
            double z_dw = 0.0;
            for (int i = 0; i < n; ++i) {
              l_dw += cur.l[i] * tr.dw[k * n + i];
              z_dw += cur.z[i] * tr.dw[k * n + i];
            }
            const double rh = next.h - cur.h -
                              0.5 * (h_driver(cur, co, g) + h_driver(next, cn, gn)) * dt - l_dw;
            const double ry = next.y - cur.y - 0.5 * (y_driver(cur) + y_driver(next)) * dt - z_dw;
            part.h_sum[k] += rh;
            part.h_sq[k] += rh * rh;
            part.y_sum[k] += ry;
            part.y_sq[k] += ry * ry;
            h_acc += rh;
            y_acc += ry;
            cur = next;
          }
          part.h_tot += h_acc;
          part.h_tot_sq += h_acc * h_acc;
          part.y_tot += y_acc;
          part.y_tot_sq += y_acc * y_acc;
          ++part.n;
        }
      },
      [](Part& acc, const Part& p) {
        for (std::size_t k = 0; k < acc.h_sum.size(); ++k) {
          acc.h_sum[k] += p.h_sum[k];
          acc.h_sq[k] += p.h_sq[k];
          acc.y_sum[k] += p.y_sum[k];
          acc.y_sq[k] += p.y_sq[k];
        }
        acc.h_tot += p.h_tot;
        acc.h_tot_sq += p.h_tot_sq;
        acc.y_tot += p.y_tot;
        acc.y_tot_sq += p.y_tot_sq;
        acc.n += p.n;
      });

  const double np = static_cast<double>(total.n);
  auto mean_se = [np](double s, double sq) {
    const double m = s / np;
    const double var = np > 1 ? std::max(0.0, (sq - np * m * m) / (np - 1.0)) : 0.0;
    return std::pair{m, std::sqrt(var / np)};
  };
  const FeatureState s0 = model.initial_features();
  auto finish = [&](ResidualStats& out, const std::vector<double>& sum,
                    const std::vector<double>& sq, double tot, double tot_sq, bool is_h) {
    out = ResidualStats{};
    const auto [m, se] = mean_se(tot, tot_sq);
    out.mean = m;
    out.se = se;
    out.fit_se = is_h ? sol.h_se(0, s0) : sol.y_se(0, s0);
    for (int k = 0; k < steps; ++k) {
      const auto [mk, sek] = mean_se(sum[k], sq[k]);
      const FeatureState a = reference_features(model, grid.time(k));
      const FeatureState b = reference_features(model, grid.time(k + 1));
      const double fit = is_h ? std::hypot(sol.h_se(k, a), sol.h_se(k + 1, b))
                              : std::hypot(sol.y_se(k, a), sol.y_se(k + 1, b));
      const double denom = std::hypot(sek, fit);
      const double z = denom > 0.0 ? std::abs(mk) / denom : (mk == 0.0 ? 0.0 : INFINITY);
      out.worst_step_z = std::max(out.worst_step_z, z);
      if (z > 4.0) ++out.steps_over_gate;
    }
    const double denom = std::hypot(out.se, out.fit_se);
    const bool total_ok = std::abs(out.mean) <= 4.0 * denom;
    out.ok = total_ok && out.steps_over_gate <= std::max(1, steps / 100);
  };
  finish(sol.h_residual, total.h_sum, total.h_sq, total.h_tot, total.h_tot_sq, true);
  if (sol.has_y()) finish(sol.y_residual, total.y_sum, total.y_sq, total.y_tot, total.y_tot_sq, false);
}

// ---------------------------------------------------------------------------

FeatureState reference_features(const CoefficientModel& model, double t) {
  FeatureState s = model.initial_features();
  if (model.tier() == Tier::MarkovFactor) {
    const auto& f = *model.factor_spec();
    s.value[0] = f.mean + (f.f0 - f.mean) * std::exp(-f.kappa * t);
  }
  return s;
}

OracleComparison compare_with_affine(const BsdeSolution& regression, const BsdeSolution& affine,
                                     const CoefficientModel& model, int stride) {
  OracleComparison out;
  const FeatureState s0 = model.initial_features();
  out.h0 = regression.h_at(0, s0);
  out.h0_oracle = affine.h_at(0, s0);
  out.h0_se = regression.h_se(0, s0);
  out.y0 = regression.y_at(0, s0);
  out.y0_oracle = affine.y_at(0, s0);
  out.y0_se = regression.y_se(0, s0);
  auto z = [](double a, double b, double se) {
    return se > 0.0 ? std::abs(a - b) / se : (a == b ? 0.0 : INFINITY);
  };
  const double zh0 = z(out.h0, out.h0_oracle, out.h0_se);
  const double zy0 = z(out.y0, out.y0_oracle, out.y0_se);
  out.ok = zh0 <= 3.0 && zy0 <= 3.0;
  const TimeGrid& grid = regression.grid();
  stride = std::max(1, stride);
  for (int k = 0; k < grid.steps(); k += stride) {
    const FeatureState s = reference_features(model, grid.time(k));
    out.worst_h_z = std::max(out.worst_h_z, z(regression.h_at(k, s), affine.h_at(k, s), regression.h_se(k, s)));
    out.worst_y_z = std::max(out.worst_y_z, z(regression.y_at(k, s), affine.y_at(k, s), regression.y_se(k, s)));
  }
  out.all_points_ok = out.worst_h_z <= 3.0 && out.worst_y_z <= 3.0;
  return out;
}

void write_bsde_dump(std::ostream& os, const BsdeSolution& sol, const CoefficientModel& model) {
  const int n = sol.dim();
  os << "k,t,h";
  for (int i = 0; i < n; ++i) os << ",L_" << (i + 1);
  os << ",Y";
  for (int i = 0; i < n; ++i) os << ",Z_" << (i + 1);
  os << '\n';
  os.precision(17);
  const TimeGrid& grid = sol.grid();
  for (int k = 0; k <= grid.steps(); ++k) {
    const FeatureState s = reference_features(model, grid.time(k));
    const Vec l = sol.l_at(k, s);
    const Vec z = sol.z_at(k, s);
    os << k << ',' << grid.time(k) << ',' << sol.h_at(k, s);
    for (int i = 0; i < n; ++i) os << ',' << l[i];
    os << ',' << sol.y_at(k, s);
    for (int i = 0; i < n; ++i) os << ',' << z[i];
    os << '\n';
  }
}

}  // namespace mmvlab
