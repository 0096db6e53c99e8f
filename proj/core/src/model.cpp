#include "mmvlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "mmvlab/error.hpp"
#include "mmvlab/rng.hpp"

namespace mmvlab {

std::string to_string(Tier tier) {
  switch (tier) {
    case Tier::Deterministic: return "deterministic";
    case Tier::MarkovFactor: return "markov_factor";
    case Tier::PathDependent: return "path_dependent";
  }
  return "unknown";
}

namespace {

void require_dim(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

void check_vec(const Vec& v, int n, const char* name) {
  require_dim(v.size() == n, std::string(name) + " must have dimension " + std::to_string(n));
}

void check_mat(const Mat& m, int n, const char* name) {
  require_dim(m.rows() == n && m.cols() == n,
              std::string(name) + " must be " + std::to_string(n) + "x" + std::to_string(n));
}

void check_n(int n) {
  require_dim(n >= 1 && n <= kMaxDim,
              "Brownian dimension must be in [1, " + std::to_string(kMaxDim) + "]");
}

}  // namespace

CoefficientModel CoefficientModel::deterministic(DeterministicSpec spec, ModelLimits limits) {
  const int n = static_cast<int>(spec.b0.size());
  check_n(n);
  if (spec.b1.size() == 0) spec.b1 = Vec::Zero(n);
  if (spec.c0.size() == 0) spec.c0 = Vec::Zero(n);
  if (spec.c1.size() == 0) spec.c1 = Vec::Zero(n);
  if (spec.d1.size() == 0) spec.d1 = Mat::Zero(n, n);
  check_vec(spec.b1, n, "b1");
  check_vec(spec.c0, n, "c0");
  check_vec(spec.c1, n, "c1");
  check_mat(spec.d0, n, "d0");
  check_mat(spec.d1, n, "d1");
  CoefficientModel m;
  m.tier_ = Tier::Deterministic;
  m.n_ = n;
  m.limits_ = limits;
  m.det_ = std::move(spec);
  return m;
}

CoefficientModel CoefficientModel::deterministic(int n, std::function<Coefficients(double)> fn,
                                                 ModelLimits limits) {
  check_n(n);
  CoefficientModel m;
  m.tier_ = Tier::Deterministic;
  m.n_ = n;
  m.limits_ = limits;
  m.custom_ = std::move(fn);
  return m;
}

CoefficientModel CoefficientModel::markov_factor(FactorSpec factor, Vec b, Vec c, Mat d,
                                                 ModelLimits limits) {
  const int n = static_cast<int>(b.size());
  check_n(n);
  check_vec(c, n, "c");
  check_mat(d, n, "d");
  check_vec(factor.vol, n, "v_f");
  CoefficientModel m;
  m.tier_ = Tier::MarkovFactor;
  m.n_ = n;
  m.limits_ = limits;
  m.factor_ = std::move(factor);
  m.b_ = std::move(b);
  m.c_ = std::move(c);
  m.d_ = std::move(d);
  return m;
}

CoefficientModel CoefficientModel::path_dependent(PathDependentSpec spec, Vec c, Mat d,
                                                  ModelLimits limits) {
  const int n = static_cast<int>(c.size());
  check_n(n);
  check_mat(d, n, "d");
  check_vec(spec.b0, n, "b0");
  if (spec.b_w.size() == 0) spec.b_w = Vec::Zero(n);
  check_vec(spec.b_w, n, "b_w");
  CoefficientModel m;
  m.tier_ = Tier::PathDependent;
  m.n_ = n;
  m.limits_ = limits;
  m.path_ = std::move(spec);
  m.c_ = std::move(c);
  m.d_ = std::move(d);
  return m;
}

int CoefficientModel::feature_count() const noexcept {
  switch (tier_) {
    case Tier::Deterministic: return 0;
    case Tier::MarkovFactor: return 1;
    case Tier::PathDependent: return 2;
  }
  return 0;
}

FeatureState CoefficientModel::initial_features() const {
  FeatureState s;
  if (tier_ == Tier::MarkovFactor) s.value[0] = factor_->f0;
  return s;
}

void CoefficientModel::advance(FeatureState& state, double /*t*/, double dt, double horizon,
                               const Vec& dw) const {
  switch (tier_) {
    case Tier::Deterministic:
      return;
    case Tier::MarkovFactor: {
      const auto& f = *factor_;
      // Mean reversion is stepped exactly; only the noise is Euler.
      state.value[0] = f.mean + (state.value[0] - f.mean) * std::exp(-f.kappa * dt) + f.vol.dot(dw);
      return;
    }
    case Tier::PathDependent: {
      const double w_old = state.value[0];
      const double w_new = w_old + dw[0];
      state.value[0] = w_new;
      state.value[1] += 0.5 * (w_old + w_new) * dt / horizon;
      return;
    }
  }
}

Coefficients CoefficientModel::evaluate(double t, const FeatureState& state, bool* cap_hit) const {
  Coefficients out;
  bool capped = false;
  switch (tier_) {
    case Tier::Deterministic: {
      if (custom_) {
        out = custom_(t);
      } else {
        const auto& s = *det_;
        out.a = s.a0 + s.a1 * t;
        out.b = s.b0 + t * s.b1;
        out.c = s.c0 + t * s.c1;
        out.d = s.d0 + t * s.d1;
      }
      break;
    }
    case Tier::MarkovFactor: {
      out.a = state.value[0];
      out.b = b_;
      out.c = c_;
      out.d = d_;
      break;
    }
    case Tier::PathDependent: {
      const auto& s = *path_;
      out.a = s.a0 + s.a_w * state.value[0] + s.a_s * state.value[1];
      const double squash = std::tanh(state.value[0]);
      out.b = s.b0 + squash * s.b_w;
      out.c = c_;
      out.d = d_;
      break;
    }
  }
  if (tier_ != Tier::Deterministic && std::abs(out.a) > limits_.a_max) {
    out.a = std::copysign(limits_.a_max, out.a);
    capped = true;
  }
  if (cap_hit) *cap_hit = capped;
  return out;
}

Vec CoefficientModel::feature_loading(int j) const {
  Vec l = Vec::Zero(n_);
  if (tier_ == Tier::MarkovFactor && j == 0) l = factor_->vol;
  if (tier_ == Tier::PathDependent && j == 0) l[0] = 1.0;
  return l;
}

// ---------------------------------------------------------------------------

ClaimDistribution ClaimDistribution::discrete(std::vector<std::pair<double, double>> atoms) {
  if (atoms.empty()) throw Error(ErrorCode::DomainError, "discrete claim law needs atoms");
  double total = 0.0;
  for (const auto& [y, p] : atoms) {
    if (!(y > 0.0)) throw Error(ErrorCode::DomainError, "claim atoms must be positive");
    if (!(p >= 0.0)) throw Error(ErrorCode::DomainError, "atom probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorCode::DomainError, "atom probabilities must sum to 1");
  ClaimDistribution d;
  d.kind = ClaimKind::Discrete;
  d.atoms = std::move(atoms);
  d.y_max = 0.0;
  for (const auto& a : d.atoms) d.y_max = std::max(d.y_max, a.first);
  return d;
}

ClaimDistribution ClaimDistribution::lognormal_truncated(double mu, double sigma, double y_max) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::DomainError, "lognormal sigma must be positive");
  if (!(y_max > 0.0)) throw Error(ErrorCode::DomainError, "truncation bound must be positive");
  ClaimDistribution d;
  d.kind = ClaimKind::LognormalTruncated;
  d.mu = mu;
  d.sigma = sigma;
  d.y_max = y_max;
  return d;
}

double ClaimDistribution::moment(int k) const {
  if (kind == ClaimKind::Discrete) {
    double m = 0.0;
    for (const auto& [y, p] : atoms) m += p * std::pow(y, k);
    return m;
  }
  // E[Y^k | Y <= y_max] for Y lognormal(mu, sigma).
  const double raw = std::exp(k * mu + 0.5 * k * k * sigma * sigma);
  if (!std::isfinite(y_max)) return raw;
  const boost::math::normal_distribution<double> std_normal;
  const double z = (std::log(y_max) - mu) / sigma;
  return raw * boost::math::cdf(std_normal, z - k * sigma) / boost::math::cdf(std_normal, z);
}

double ClaimDistribution::support_max() const { return y_max; }

double ClaimDistribution::sample(double uniform) const {
  if (kind == ClaimKind::Discrete) {
    double acc = 0.0;
    for (const auto& [y, p] : atoms) {
      acc += p;
      if (uniform <= acc) return y;
    }
    return atoms.back().first;
  }
  const boost::math::normal_distribution<double> std_normal;
  double mass = 1.0;
  if (std::isfinite(y_max)) mass = boost::math::cdf(std_normal, (std::log(y_max) - mu) / sigma);
  const double z = boost::math::quantile(std_normal, std::clamp(uniform * mass, 1e-300, 1.0 - 1e-16));
  return std::min(std::exp(mu + sigma * z), y_max);
}

// ---------------------------------------------------------------------------

bool ValidationReport::has(const std::string& rule) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.rule == rule; });
}

double min_eig_ddt(const Mat& d) {
  const Mat ddt = d * d.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(ddt, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

std::string where(int k, std::size_t path) {
  std::ostringstream os;
  os << "k=" << k << ",path=" << path;
  return os.str();
}

void check_coefficients(const Coefficients& co, const ModelLimits& lim, int k, std::size_t path,
                        ValidationReport& rep, bool& degenerate_seen, bool& cap_seen) {
  const double eig = min_eig_ddt(co.d);
  if (eig < lim.delta && !degenerate_seen) {
    degenerate_seen = true;
    std::ostringstream os;
    os << "min eig(DD')=" << eig << " < delta=" << lim.delta;
    rep.violations.push_back({"nondegeneracy", where(k, path), os.str()});
  }
  const double worst = std::max({co.b.cwiseAbs().maxCoeff(), co.c.cwiseAbs().maxCoeff(),
                                 co.d.cwiseAbs().maxCoeff()});
  if (!(worst <= lim.coef_cap) && !cap_seen) {
    cap_seen = true;
    std::ostringstream os;
    os << "max |B,C,D| entry " << worst << " exceeds cap " << lim.coef_cap;
    rep.violations.push_back({"coefficient cap", where(k, path), os.str()});
  }
}

}  // namespace

ValidationReport validate_scenario(const ScenarioConfig& cfg, std::size_t sample_paths) {
  ValidationReport rep;
  if (!(cfg.theta > 0.0))
    rep.violations.push_back({"theta", "/theta", "risk parameter must be positive"});
  if (cfg.n_paths < 1) rep.violations.push_back({"n_paths", "/n_paths", "need at least one path"});

  const auto& model = cfg.model;
  const auto& grid = cfg.grid;
  const ModelLimits& lim = model.limits();
  bool degenerate_seen = false;
  bool cap_seen = false;

  if (model.tier() == Tier::Deterministic) {
    for (int k = 0; k <= grid.steps(); ++k) {
      const auto co = model.evaluate(grid.time(k), FeatureState{});
      check_coefficients(co, lim, k, 0, rep, degenerate_seen, cap_seen);
    }
  } else {
    if (model.tier() == Tier::MarkovFactor) {
      const auto& f = *model.factor_spec();
      if (!(f.kappa > 0.0))
        rep.violations.push_back({"mean reversion", "/model/kappa_f", "kappa_f must be positive"});
    }
    const int n = model.dim();
    const rng::StreamKey key{cfg.seed, 0x7A11u};
    for (std::size_t p = 0; p < sample_paths; ++p) {
      FeatureState s = model.initial_features();
      Vec dw(n);
      for (int k = 0; k <= grid.steps(); ++k) {
        const auto co = model.evaluate(grid.time(k), s);
        check_coefficients(co, lim, k, p, rep, degenerate_seen, cap_seen);
        if (k == grid.steps()) break;
        for (int i = 0; i < n; i += 2) {
          const auto z = rng::normal_pair(key, p, static_cast<std::uint32_t>(k),
                                          static_cast<std::uint32_t>(i / 2));
          dw[i] = z[0] * std::sqrt(grid.dt());
          if (i + 1 < n) dw[i + 1] = z[1] * std::sqrt(grid.dt());
        }
        model.advance(s, grid.time(k), grid.dt(), grid.horizon(), dw);
      }
    }
  }

  if (cfg.jump) {
    const auto& j = *cfg.jump;
    if (!(j.intensity > 0.0))
      rep.violations.push_back({"intensity", "/jump/lambda", "lambda must be positive"});
    if (!(j.premium_loading > 0.0))
      rep.violations.push_back({"premium loading", "/jump/b", "b must be positive"});
    if (j.drift_offset != 0.0)
      rep.violations.push_back({"drift offset", "/jump/a", "a is normalised to 0"});
    if (!std::isfinite(j.claims.support_max()))
      rep.violations.push_back(
          {"claim support unbounded", "/jump/nu", "claim law needs a finite truncation bound"});
    const double m2 = j.m2();
    if (!(m2 > 0.0) || !std::isfinite(m2))
      rep.violations.push_back({"claim moments", "/jump/nu", "m2 must be positive and finite"});
  }
  return rep;
}

// ---------------------------------------------------------------------------

CoefficientModel portfolio_to_generic(const PortfolioMarket& market, ModelLimits limits) {
  const int n = static_cast<int>(market.mu.size());
  check_n(n);
  check_mat(market.sigma, n, "sigma");
  const double eig = min_eig_ddt(market.sigma);
  if (eig < limits.delta) {
    std::ostringstream os;
    os << "sigma sigma' has min eigenvalue " << eig << " < delta " << limits.delta;
    throw Error(ErrorCode::Degenerate, os.str());
  }
  switch (market.r.kind) {
    case RateSpec::Kind::Constant:
    case RateSpec::Kind::Linear: {
      DeterministicSpec s;
      s.a0 = market.r.r0;
      s.a1 = market.r.kind == RateSpec::Kind::Linear ? market.r.r1 : 0.0;
      s.b0 = market.mu;
      s.b1 = Vec::Zero(n);
      s.c0 = Vec::Zero(n);
      s.c1 = Vec::Zero(n);
      s.d0 = market.sigma;
      s.d1 = Mat::Zero(n, n);
      return CoefficientModel::deterministic(std::move(s), limits);
    }
    case RateSpec::Kind::Vasicek:
      return CoefficientModel::markov_factor(market.r.vasicek, market.mu, Vec::Zero(n),
                                             market.sigma, limits);
  }
  throw Error(ErrorCode::DomainError, "unknown rate kind");
}

PortfolioMarket generic_to_portfolio(const CoefficientModel& model) {
  PortfolioMarket out;
  if (model.tier() == Tier::Deterministic && model.deterministic_spec()) {
    const auto& s = *model.deterministic_spec();
    if (!s.c0.isZero(0.0) || !s.c1.isZero(0.0) || !s.b1.isZero(0.0) || !s.d1.isZero(0.0))
      throw Error(ErrorCode::DomainError, "model is not a constant-(mu, sigma) portfolio market");
    out.r.kind = s.a1 == 0.0 ? RateSpec::Kind::Constant : RateSpec::Kind::Linear;
    out.r.r0 = s.a0;
    out.r.r1 = s.a1;
    out.mu = s.b0;
    out.sigma = s.d0;
    return out;
  }
  if (model.tier() == Tier::MarkovFactor) {
    if (!model.const_c().isZero(0.0))
      throw Error(ErrorCode::DomainError, "portfolio markets have C = 0");
    out.r.kind = RateSpec::Kind::Vasicek;
    out.r.vasicek = *model.factor_spec();
    out.mu = model.const_b();
    out.sigma = model.const_d();
    return out;
  }
  throw Error(ErrorCode::DomainError, "model has no portfolio representation");
}

}  // namespace mmvlab
