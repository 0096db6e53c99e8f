#include <doctest.h>

#include <cmath>

#include "mmvlab/bsde.hpp"
#include "mmvlab/control.hpp"
#include "support.hpp"

using namespace mmvlab;
using test::m1;
using test::v1;

namespace {

struct Solved {
  CoefficientModel model;
  PathBundle bundle;
  BsdeSolution sol;
  RobustSetup setup() const { return RobustSetup{&model, &sol, 1.0, 1.0, nullptr}; }
};

Solved solved(CoefficientModel model, std::size_t paths, int steps = 50) {
  PathBundle b(TimeGrid(1.0, steps), paths, model.dim(), 11);
  BsdeSolution s = solve_bsde(model, b);
  return Solved{std::move(model), std::move(b), std::move(s)};
}

}  // namespace

TEST_CASE("optimal generator") {
  BsdePoint p;
  p.phi = v1(0.0);
  CHECK(optimal_eta(p)[0] == 0.0);
  p.phi = v1(0.5);
  CHECK(optimal_eta(p)[0] == -0.5);
}

TEST_CASE("optimal control collapses without L, Z and C") {
  const Coefficients co{0.03, v1(0.1), v1(0.0), m1(0.2)};
  BsdePoint p;
  p.h = 1.2;
  p.l = v1(0.0);
  p.y = 1.4;
  p.z = v1(0.0);
  p.phi = v1(0.5);
  const double lam = 0.9, theta = 2.0;
  CHECK(optimal_u(p, co, 3.0, lam, theta)[0] == doctest::Approx(0.5 / 0.2 * lam * 1.4 / (theta * 1.2)));
}

TEST_CASE("optimal control at time zero of the constant portfolio") {
  const Solved s = solved(test::constant_model(0.03, 0.1, 0.0, 0.2), 16);
  const FeatureState f = s.model.initial_features();
  const Coefficients co = s.model.evaluate(0.0, f);
  const BsdePoint p = s.sol.at(0, f, co);
  const double expected = 0.5 * std::exp(0.25) / (std::exp(0.03) * 0.2);
  for (double x : {0.5, 1.0, 7.0})
    CHECK(optimal_u(p, co, x, 1.0, 1.0)[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("closed-form wealth") {
  CHECK(optimal_wealth_closed_form(1.1, 1.3, 1.0, 1.1, 1.3, 2.5, 0.7) == doctest::Approx(2.5));
  // Without a market price of risk the density and Y are one: pure discounting.
  CHECK(optimal_wealth_closed_form(1.02, 1.0, 1.0, 1.05, 1.0, 2.0, 1.0) ==
        doctest::Approx(2.0 * 1.05 / 1.02));
  const double h = 1.01, y = 1.12, lam = 0.83, h0 = 1.03, y0 = 1.28, x = 1.0, theta = 1.0;
  const double xt = optimal_wealth_closed_form(h, y, lam, h0, y0, x, theta);
  CHECK(std::abs(theta * h * xt + lam * y - (theta * h0 * x + y0)) <= 4e-16 * (theta * h0 * x + y0));
}

TEST_CASE("R process and value") {
  CHECK(compute_R(1.03, 1.28, 1.0, 1.0, 1.0) == doctest::Approx(1.03 + 0.14));
  CHECK(compute_R(1.0, 1.0, 4.0, 1.6, 0.5) == doctest::Approx(4.0 + 0.6));
  CHECK(compute_R(1.03, 1.28, 1.0, 1.0, 1e12) == doctest::Approx(1.03));
  CHECK(robust_value(1.0, 1.0, 3.0, 1.0) == 3.0);
  CHECK(robust_value(std::exp(0.03), std::exp(0.25), 1.0, 1.0) == doctest::Approx(1.17248).epsilon(1e-5));
  const double g1 = robust_value(1.1, 1.5, 1.0, 1.0) - 1.1;
  const double g2 = robust_value(1.1, 1.5, 1.0, 2.0) - 1.1;
  CHECK(g2 == doctest::Approx(g1 / 2.0));
  try {
    robust_value(1.0, 0.9, 1.0, 1.0);
    FAIL("expected DomainError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainError);
  }
}

TEST_CASE("saddle on the zero-coefficient model") {
  const Solved s = solved(test::constant_model(0.0, 0.0, 0.0, 1.0), 2000, 20);
  const SaddleReport rep = verify_saddle(s.setup(), s.bundle);
  CHECK(rep.r0 == 1.0);
  CHECK(rep.pass);
  CHECK(rep.find("control", "optimal")->estimate == 1.0);
  CHECK(rep.find("control", "zero")->estimate == 1.0);
  CHECK(rep.find("density", "optimal")->estimate == 1.0);
  CHECK(rep.equality.estimate == 1.0);
}

TEST_CASE("saddle on the constant portfolio") {
  const Solved s = solved(test::constant_model(0.03, 0.1, 0.0, 0.2), 20000);
  const SaddleReport rep = verify_saddle(s.setup(), s.bundle);
  const double r0 = std::exp(0.03) + (std::exp(0.25) - 1.0) / 2.0;
  CHECK(rep.r0 == doctest::Approx(r0).epsilon(1e-12));
  const ProbeResult* zero = rep.find("control", "zero");
  REQUIRE(zero != nullptr);
  CHECK(std::abs(zero->estimate - r0) <= 4.0 * zero->se);
  for (const auto& p : rep.probes) {
    CHECK_MESSAGE(p.pass, p.kind << " " << p.name);
    CHECK(p.density_ok);
  }
  CHECK(rep.pass);
  for (const auto& st : rep.statements) CHECK_MESSAGE(st.pass, st.name);
}

TEST_CASE("cross-check under the shifted drift") {
  const Solved s = solved(test::constant_model(0.03, 0.1, 0.0, 0.2), 20000);
  SaddleOptions opt;
  opt.cross_check = true;
  const SaddleReport rep = verify_saddle(s.setup(), s.bundle, opt);
  REQUIRE_FALSE(rep.cross_checks.empty());
  for (const auto& c : rep.cross_checks) CHECK_MESSAGE(c.pass, c.name);
}

TEST_CASE("conservation along the closed-form wealth") {
  const Solved s = solved(test::constant_model(0.03, 0.1, 0.05, 0.2), 1000);
  CHECK(closed_form_wealth(s.setup(), s.bundle).max_rel_deviation <= 1e-12);
}

TEST_CASE("Euler density step is first order in the exponent") {
  const Generator g{v1(0.3), {}};
  const Vec dw = v1(0.01);
  CHECK(density_euler_step(2.0, g, dw, 0.001, {}, nullptr) == doctest::Approx(2.0 * 1.003));
}
