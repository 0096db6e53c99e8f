#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmvlab/bsde.hpp"
#include "mmvlab/duality.hpp"
#include "support.hpp"

using namespace mmvlab;
using test::m1;
using test::v1;

namespace {

bool degenerate(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == ErrorCode::DegenerateMarket;
  }
  return false;
}

}  // namespace

TEST_CASE("J values") {
  const double y0 = std::exp(0.25);
  CHECK(J_value(1.0, 1.0, 1.0, y0, 1.0) == 0.0);
  CHECK(J_value(1.4, 1.0, 1.0, y0, 1.0) == doctest::Approx(-0.16));
  CHECK(J_value(1.2, 1.5, 1.0, y0, 1.0) == doctest::Approx(std::exp(-0.25) * 0.25 - 0.09));
}

TEST_CASE("F and its maximiser") {
  CHECK(F_value(1.3, 1.3, 1.5, 1.0) == 0.0);
  CHECK(gamma_hat(1.3, 1.3, 1.5, 1.0) == doctest::Approx(1.3));
  CHECK(F_value(1.5, 1.0, 2.0, 1.0) == doctest::Approx(0.25));
  CHECK(gamma_hat(1.5, 1.0, 2.0, 1.0) == doctest::Approx(2.0));
  CHECK(J_value(1.5, 2.0, 1.0, 2.0, 1.0) == doctest::Approx(0.25));
}

TEST_CASE("numerical sup of J matches F") {
  for (double y0 : {1.05, 1.5, 2.0, 5.0})
    for (double k : {0.2, 1.0, 1.7, 4.0}) {
      const SupSearch s = sup_J(k, 1.1, y0, 1.0);
      CHECK(std::abs(s.value - F_value(k, 1.1, y0, 1.0)) <= 1e-9);
      CHECK(s.gamma == doctest::Approx(gamma_hat(k, 1.1, y0, 1.0)).epsilon(1e-4));
    }
}

TEST_CASE("dual chain") {
  CHECK(K_hat(1.0, 2.0, 1.0, 1.0) == 2.0);
  CHECK(F_value(2.0, 1.0, 2.0, 1.0) == doctest::Approx(1.0));
  CHECK(mv_value(1.0, 2.0, 1.0, 1.0) == doctest::Approx(1.5));
  for (double theta : {0.5, 1.0, 3.0})
    for (double y0 : {1.01, 1.28, 4.0}) {
      const double k = K_hat(1.2, y0, 1.0, theta);
      CHECK(gamma_hat(k, 1.2, y0, 1.0) == doctest::Approx(1.2 + y0 / theta).epsilon(1e-14));
      CHECK(F_value(k, 1.2, y0, 1.0) == doctest::Approx((y0 - 1.0) / (theta * theta)).epsilon(1e-13));
    }
}

TEST_CASE("degenerate market") {
  CHECK(degenerate([] { J_value(1.0, 1.0, 1.0, 1.0, 1.0); }));
  CHECK(degenerate([] { F_value(1.0, 1.0, 1.0, 1.0); }));
  CHECK(degenerate([] { gamma_hat(1.0, 1.0, 1.0, 1.0); }));
  CHECK(degenerate([] { K_hat(1.0, 1.0, 1.0, 1.0); }));
  CHECK(degenerate([] { mv_value(1.0, 1.0, 1.0, 1.0); }));
  CHECK(degenerate([] { sup_J(1.0, 1.0, 1.0, 1.0); }));
}

TEST_CASE("MV feedback") {
  const Coefficients co{0.03, v1(0.1), v1(0.0), m1(0.2)};
  BsdePoint p;
  p.h = 1.1;
  p.l = v1(0.0);
  p.y = 1.0;
  p.z = v1(0.0);
  p.phi = v1(0.5);
  CHECK(mv_feedback(1.1 * 2.0, p, co, 2.0)[0] == 0.0);
  CHECK(mv_feedback(3.0, p, co, 2.0)[0] == doctest::Approx(-0.5 * (2.2 - 3.0) / (1.1 * 0.2)));
}

TEST_CASE("MV feedback equals the optimal control at the dual target") {
  const auto model = test::constant_model(0.03, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, 50), 16, 1, 1);
  const BsdeSolution sol = solve_bsde(model, b);
  const double h0 = sol.h0(model), y0 = sol.y0(model);
  const double g = gamma_hat(K_hat(h0, y0, 1.0, 1.0), h0, y0, 1.0);
  const FeatureState f = model.initial_features();
  const Coefficients co = model.evaluate(0.0, f);
  const BsdePoint p = sol.at(0, f, co);
  CHECK(mv_feedback(g, p, co, 1.0)[0] == doctest::Approx(optimal_u(p, co, 1.0, 1.0, 1.0)[0]).epsilon(1e-14));
}

TEST_CASE("MV moments") {
  const MvEmpirical z = mv_empirical(test::constant_model(0.0, 0.0, 0.0, 1.0),
                                     [](const ControlInput&) { return ControlDecision{v1(0.0), 0.0}; },
                                     PathBundle(TimeGrid(1.0, 10), 100, 1, 1), 1.0, 1.0);
  CHECK(z.mean == 1.0);
  CHECK(z.var == 0.0);
  CHECK(z.value == 1.0);

  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const MvEmpirical m = mv_moments(xs, 2.0);
  CHECK(m.mean == 2.5);
  CHECK(m.var == doctest::Approx(5.0 / 3.0));
  CHECK(m.value == doctest::Approx(2.5 - 5.0 / 3.0));
  CHECK(m.n == 4);
}

TEST_CASE("duality report on the constant portfolio") {
  const auto model = test::constant_model(0.03, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, 100), 20000, 1, 3);
  const BsdeSolution sol = solve_bsde(model, b);
  const DualityReport rep = duality_report(RobustSetup{&model, &sol, 1.0, 1.0, nullptr}, b);
  CHECK(rep.chain_gap <= 1e-14);
  CHECK(rep.feedback_gap <= 1e-10);
  CHECK(rep.mean_ok);
  CHECK(rep.var_ok);
  CHECK(rep.value_ok);
  for (const auto& c : rep.f_checks) CHECK(c.pass);
  for (const auto& c : rep.mean_checks) CHECK(c.pass);
  for (const auto& p : rep.probes) CHECK_MESSAGE(p.pass, p.name);
  CHECK(rep.pass);
}
