#include <doctest.h>

#include <cmath>

#include "mmvlab/bsde.hpp"
#include "support.hpp"

using namespace mmvlab;
using test::m1;
using test::v1;

namespace {

BsdeSolution solve_det(const CoefficientModel& model, int steps = 50, const JumpModel* jump = nullptr) {
  const PathBundle b(TimeGrid(1.0, steps), 16, model.dim(), 1);
  return solve_bsde(model, b, {}, jump);
}

CoefficientModel vasicek(double vol, double b, double c) {
  FactorSpec f;
  f.kappa = 0.8;
  f.mean = 0.04;
  f.vol = v1(vol);
  f.f0 = 0.03;
  return CoefficientModel::markov_factor(f, v1(b), v1(c), m1(0.2));
}

// Zero-coupon bond price of a Vasicek short rate, independent of the solver.
double vasicek_bond(double kappa, double m, double s, double r0, double tau) {
  const double bt = (1.0 - std::exp(-kappa * tau)) / kappa;
  const double lna = (m - s * s / (2.0 * kappa * kappa)) * (bt - tau) - s * s * bt * bt / (4.0 * kappa);
  return std::exp(lna - bt * r0);
}

}  // namespace

TEST_CASE("h with zero coefficients") {
  const BsdeSolution s = solve_det(test::constant_model(0.0, 0.0, 0.0, 1.0));
  for (double h : s.h_grid()) CHECK(h == 1.0);
  for (double y : s.y_grid()) CHECK(y == 1.0);
}

TEST_CASE("h with a constant rate") {
  const auto m = test::constant_model(0.03, 0.0, 0.0, 0.2);
  CHECK(test::rel_close(solve_det(m).h0(m), std::exp(0.03), 1e-12));
}

TEST_CASE("h with a correlated drift term") {
  const auto m = test::constant_model(0.03, 0.1, 0.05, 0.2);
  const BsdeSolution s = solve_det(m);
  CHECK(test::rel_close(s.h0(m), std::exp(0.005), 1e-12));
  CHECK(s.h_grid().back() == 1.0);
  CHECK(s.y_grid().back() == 1.0);
}

TEST_CASE("Y with a constant market price of risk") {
  const auto m = test::constant_model(0.0, 0.1, 0.0, 0.2);
  const BsdeSolution s = solve_det(m);
  CHECK(test::rel_close(s.y0(m), std::exp(0.25), 1e-12));
  for (double y : s.y_grid()) CHECK(y >= 1.0);
  CHECK(s.z_at(0, m.initial_features()).isZero());
}

TEST_CASE("time-dependent coefficients by quadrature") {
  DeterministicSpec spec{0.02, 0.04, v1(0.1), v1(0.05), v1(0.0), v1(0.0), m1(0.2), m1(0.0)};
  const auto m = CoefficientModel::deterministic(spec);
  const BsdeSolution s = solve_det(m, 40);
  // int (0.02 + 0.04 t) dt and int (0.5 + 0.25 t)^2 dt over [0, 1]
  CHECK(test::rel_close(s.h0(m), std::exp(0.04), 1e-10));
  CHECK(test::rel_close(s.y0(m), std::exp(0.25 + 0.125 + 0.0625 / 3.0), 1e-10));
}

TEST_CASE("refining the grid leaves the exact tiers unchanged") {
  DeterministicSpec spec{0.02, 0.04, v1(0.1), v1(0.05), v1(0.03), v1(0.0), m1(0.2), m1(0.01)};
  const auto m = CoefficientModel::deterministic(spec);
  const BsdeSolution a = solve_det(m, 40), b = solve_det(m, 80);
  CHECK(test::rel_close(a.h0(m), b.h0(m), 1e-8));
  CHECK(test::rel_close(a.y0(m), b.y0(m), 1e-8));
  CHECK(a.h_residual.ok);
  CHECK(a.h_residual.max_abs <= 1e-8);
  CHECK(a.y_residual.max_abs <= 1e-8);
}

TEST_CASE("jump term of Y") {
  const auto flat = test::constant_model(0.0, 0.0, 0.0, 0.2);
  JumpModel j = test::unit_claims(0.3);
  CHECK(test::rel_close(solve_det(flat, 50, &j).y0(flat), std::exp(0.09), 1e-12));

  j.intensity = 0.5;
  j.premium_loading = 0.2;
  j.claims = ClaimDistribution::discrete({{2.0, 1.0}});
  const PathBundle b(TimeGrid(2.0, 50), 16, 1, 1);
  const BsdeSolution s = solve_bsde(flat, b, {}, &j);
  CHECK(test::rel_close(s.y0(flat), std::exp(0.04), 1e-12));
}

TEST_CASE("vanishing premium loading reproduces Y exactly") {
  const auto m = test::constant_model(0.03, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, 50), 16, 1, 1);
  const BsdeSolution h = solve_h(m, b.grid(), b);
  const BsdeSolution plain = solve_y(m, h, b);
  const BsdeSolution jump = solve_y_reinsurance(m, test::unit_claims(1e-200), h, b);
  CHECK(plain.y_grid() == jump.y_grid());
}

TEST_CASE("phi and alpha") {
  Coefficients co{0.0, v1(0.1), v1(0.0), m1(0.2)};
  CHECK(phi(1.3, v1(0.0), co)[0] == doctest::Approx(0.5));
  BsdePoint p;
  p.h = 1.3;
  p.l = v1(0.0);
  CHECK(alpha(v1(2.0), 5.0, p, co)[0] == doctest::Approx(1.3 * 0.2 * 2.0));
  p.l = v1(0.07);
  CHECK(alpha(v1(0.0), 5.0, p, co)[0] == doctest::Approx(0.35));
  try {
    phi(1e-9, v1(0.0), co);
    FAIL("expected FloorViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FloorViolation);
  }
  co.d = m1(0.0);
  CHECK_THROWS_AS(solve_d(co.d, v1(1.0)), Error);
}

TEST_CASE("degenerate factor matches the deterministic tier") {
  const auto markov = vasicek(0.0, 0.1, 0.0);
  const double kappa = 0.8, mean = 0.04, f0 = 0.03;
  const auto det = CoefficientModel::deterministic(1, [=](double t) {
    return Coefficients{mean + (f0 - mean) * std::exp(-kappa * t), v1(0.1), v1(0.0), m1(0.2)};
  });
  const PathBundle b(TimeGrid(1.0, 50), 2000, 1, 3);
  const BsdeSolution hm = solve_h(markov, b.grid(), b);
  const BsdeSolution hd = solve_h(det, b.grid(), b);
  CHECK(test::rel_close(hm.h0(markov), hd.h0(det), 1e-6));
  CHECK(test::rel_close(hd.h0(det), std::exp(mean + (f0 - mean) * (1 - std::exp(-kappa)) / kappa), 1e-10));
}

TEST_CASE("h is the reciprocal bond price when B and C vanish") {
  const auto m = vasicek(0.015, 0.0, 0.0);
  const PathBundle b(TimeGrid(1.0, 50), 20000, 1, 5);
  BsdeOptions affine;
  affine.markov_backend = Backend::Affine;
  const BsdeSolution exact = solve_h(m, b.grid(), b, affine);
  const double oracle = 1.0 / vasicek_bond(0.8, 0.04, 0.015, 0.03, 1.0);
  CHECK(test::rel_close(exact.h0(m), oracle, 1e-12));
  const BsdeSolution reg = solve_h(m, b.grid(), b);
  CHECK(reg.h_backend() == Backend::Regression);
  CHECK(std::abs(reg.h0(m) - oracle) <= 3.0 * std::max(reg.diagnostics.h0_se, 1e-12));
}

TEST_CASE("regression and affine backends agree along the factor path") {
  const auto m = vasicek(0.015, 0.1, 0.0);
  const PathBundle b(TimeGrid(1.0, 50), 20000, 1, 5);
  BsdeOptions affine;
  affine.markov_backend = Backend::Affine;
  const BsdeSolution exact = solve_bsde(m, b, affine);
  const BsdeSolution reg = solve_bsde(m, b);
  const OracleComparison cmp = compare_with_affine(reg, exact, m, 5);
  INFO("h0 " << cmp.h0 << " vs " << cmp.h0_oracle << " se " << cmp.h0_se << " worst z " << cmp.worst_h_z);
  INFO("y0 " << cmp.y0 << " vs " << cmp.y0_oracle << " se " << cmp.y0_se << " worst z " << cmp.worst_y_z);
  CHECK(cmp.ok);
  CHECK(cmp.all_points_ok);
  CHECK(reg.diagnostics.y_ge_one);
  CHECK(reg.diagnostics.min_h >= reg.h_floor());
  const FeatureState s = m.initial_features();
  CHECK(reg.h_at(50, s) == 1.0);
  CHECK(reg.y_at(50, s) == 1.0);
}
