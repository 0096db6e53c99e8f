#include "mmvlab/regression.hpp"

#include <cmath>
#include <sstream>

#include "mmvlab/error.hpp"

namespace mmvlab {

void FeatureMoments::add(const FeatureState& s) {
  ++n;
  sum[0] += s.value[0];
  sum[1] += s.value[1];
  sq[0] += s.value[0] * s.value[0];
  sq[1] += s.value[0] * s.value[1];
  sq[2] += s.value[1] * s.value[1];
}

void FeatureMoments::merge(const FeatureMoments& o) {
  n += o.n;
  for (int i = 0; i < 2; ++i) sum[i] += o.sum[i];
  for (int i = 0; i < 3; ++i) sq[i] += o.sq[i];
}

Standardizer Standardizer::from_moments(const FeatureMoments& m, int n_features) {
  Standardizer st;
  if (m.n < 2) return st;
  const double n = static_cast<double>(m.n);
  std::array<double, 2> mean{m.sum[0] / n, m.sum[1] / n};
  std::array<double, 2> var{m.sq[0] / n - mean[0] * mean[0], m.sq[2] / n - mean[1] * mean[1]};
  const double cov = m.sq[1] / n - mean[0] * mean[1];
  for (int j = 0; j < n_features; ++j) {
    // Round-off in sq / n - mean^2 is relative to mean^2.
    const double tiny = 1e-24 + 1e-10 * mean[j] * mean[j];
    if (!(var[j] > tiny)) continue;
    if (j == 1 && st.active_ == 1) {
      const double corr = cov / std::sqrt(var[0] * var[1]);
      if (std::abs(corr) > 1.0 - 1e-10) continue;
    }
    st.feature_[st.active_] = j;
    st.slot_[j] = st.active_;
    st.mean_[st.active_] = mean[j];
    st.scale_[st.active_] = std::sqrt(var[j]);
    ++st.active_;
  }
  return st;
}

void Standardizer::apply(const FeatureState& s, double* z) const {
  for (int i = 0; i < active_; ++i) z[i] = (s.value[feature_[i]] - mean_[i]) / scale_[i];
}

double Standardizer::slope(int feature) const {
  const int i = slot_[feature];
  return i < 0 ? 0.0 : 1.0 / scale_[i];
}

PolynomialBasis::PolynomialBasis(int n_features, int degree)
    : n_features_(n_features), degree_(degree) {
  if (degree < 0 || degree > kMaxDegree)
    throw Error(ErrorCode::DomainError, "basis degree must lie in [0, 6]");
  for (int total = 0; total <= degree; ++total) {
    if (n_features == 0) {
      if (total == 0) exps_.push_back({0, 0});
      continue;
    }
    if (n_features == 1) {
      exps_.push_back({total, 0});
      continue;
    }
    for (int i = total; i >= 0; --i) exps_.push_back({i, total - i});
  }
}

void PolynomialBasis::evaluate(const double* z, double* out) const {
  std::array<std::array<double, 8>, 2> pw{};
  for (int j = 0; j < 2; ++j) {
    pw[j][0] = 1.0;
    const double v = j < n_features_ ? z[j] : 0.0;
    for (int d = 1; d <= degree_ && d < 8; ++d) pw[j][d] = pw[j][d - 1] * v;
  }
  for (std::size_t i = 0; i < exps_.size(); ++i) out[i] = pw[0][exps_[i][0]] * pw[1][exps_[i][1]];
}

RegressionAccumulator::RegressionAccumulator(int p, int targets)
    : xtx_(Eigen::MatrixXd::Zero(p, p)),
      xty_(Eigen::MatrixXd::Zero(p, targets)),
      yty_(Eigen::VectorXd::Zero(targets)),
      ysum_(Eigen::VectorXd::Zero(targets)) {}

void RegressionAccumulator::add(const double* basis, const double* y) {
  const int p = this->p();
  const int m = targets();
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j <= i; ++j) xtx_(i, j) += basis[i] * basis[j];
    for (int t = 0; t < m; ++t) xty_(i, t) += basis[i] * y[t];
  }
  for (int t = 0; t < m; ++t) {
    yty_[t] += y[t] * y[t];
    ysum_[t] += y[t];
  }
  ++n_;
}

void RegressionAccumulator::merge(const RegressionAccumulator& o) {
  xtx_ += o.xtx_;
  xty_ += o.xty_;
  yty_ += o.yty_;
  ysum_ += o.ysum_;
  n_ += o.n_;
}

double SurfaceFit::value(const FeatureState& s) const {
  std::array<double, 2> z{};
  standardizer.apply(s, z.data());
  std::array<double, kMaxBasis> b{};
  basis.evaluate(z.data(), b.data());
  double v = 0.0;
  for (int i = 0; i < coef.size(); ++i) v += coef[i] * b[i];
  return v;
}

double SurfaceFit::se(const FeatureState& s) const {
  std::array<double, 2> z{};
  standardizer.apply(s, z.data());
  Eigen::VectorXd b(coef.size());
  basis.evaluate(z.data(), b.data());
  const double q = b.dot(inv_xtx * b);
  return std::sqrt(std::max(0.0, sigma2 * q));
}

double SurfaceFit::derivative(const FeatureState& s, int feature, double step) const {
  if (standardizer.slot(feature) < 0) return 0.0;
  FeatureState up = s;
  FeatureState dn = s;
  up.value[feature] += step;
  dn.value[feature] -= step;
  return (value(up) - value(dn)) / (2.0 * step);
}

std::vector<SurfaceFit> fit_surfaces(const RegressionAccumulator& acc, const Standardizer& st,
                                     int degree, double max_condition) {
  const int p = acc.p();
  if (acc.n() <= static_cast<std::size_t>(p))
    throw Error(ErrorCode::RegressionIllConditioned, "fewer samples than basis functions");
  Eigen::MatrixXd xtx = acc.xtx().selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xtx);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double cond = ev[0] > 0.0 ? ev[p - 1] / ev[0] : INFINITY;
  if (!(cond <= max_condition)) {
    std::ostringstream os;
    os << "cond(X'X) = " << cond << " exceeds " << max_condition;
    throw Error(ErrorCode::RegressionIllConditioned, os.str());
  }
  const Eigen::MatrixXd inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                              eig.eigenvectors().transpose();
  const double n = static_cast<double>(acc.n());
  std::vector<SurfaceFit> out;
  for (int t = 0; t < acc.targets(); ++t) {
    SurfaceFit fit;
    fit.standardizer = st;
    fit.basis = PolynomialBasis(st.active(), degree);
    fit.coef = inv * acc.xty().col(t);
    fit.inv_xtx = inv;
    fit.condition = cond;
    fit.n = acc.n();
    const double rss = std::max(0.0, acc.yty()[t] - fit.coef.dot(acc.xty().col(t)));
    const double mean = acc.ysum()[t] / n;
    const double tss = acc.yty()[t] - n * mean * mean;
    fit.sigma2 = rss / (n - p);
    fit.r2 = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 1.0;
    out.push_back(std::move(fit));
  }
  return out;
}

}  // namespace mmvlab
