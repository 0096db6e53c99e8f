#include <doctest.h>

#include <cmath>

#include "acceptance.hpp"
#include "mmvlab/applications.hpp"
#include "mmvlab/duality.hpp"
#include "support.hpp"

using namespace mmvlab;
using test::m1;
using test::v1;

namespace {

RunOptions quick() {
  RunOptions o;
  o.duality.suboptimal_probes = false;
  return o;
}

}  // namespace

TEST_CASE("portfolio without excess return holds no risky asset") {
  ScenarioConfig cfg = acceptance::constant_portfolio(2000, 3, 50);
  cfg.market->mu = v1(0.0);
  cfg.model = portfolio_to_generic(*cfg.market);
  const ApplicationReport rep = run_portfolio(cfg, quick());
  CHECK(rep.value == doctest::Approx(std::exp(0.03)).epsilon(1e-12));
  CHECK(rep.y0 == 1.0);
  CHECK(rep.duality_degenerate);
  REQUIRE(rep.saddle.has_value());
  CHECK(rep.saddle->pass);
  const PathBundle b = generate_paths(cfg);
  const BsdeSolution sol = solve_scenario(cfg, b);
  const FeatureState f = cfg.model.initial_features();
  for (int k : {0, 20, 49}) {
    const Coefficients co = cfg.model.evaluate(cfg.grid.time(k), f);
    CHECK(optimal_u(sol.at(k, f, co), co, 1.3, 1.0, 1.0)[0] == 0.0);
  }
}

TEST_CASE("constant portfolio value and specialised formulas") {
  const ApplicationReport rep = run_portfolio(acceptance::constant_portfolio(5000, 3, 50), quick());
  CHECK(rep.value == doctest::Approx(std::exp(0.03) + (std::exp(0.25) - 1.0) / 2.0).epsilon(1e-12));
  CHECK(rep.specialization.pass);
  CHECK(rep.specialization.max_u_gap <= 1e-12);
  CHECK(rep.conservation_closed_form <= 1e-12);
  REQUIRE(rep.duality.has_value());
  CHECK(rep.duality->mv_value == doctest::Approx(rep.value).epsilon(1e-14));
  CHECK(rep.pass);
}

TEST_CASE("reinsurance with only the jump term") {
  const ApplicationReport rep = run_reinsurance(acceptance::flat_reinsurance(0.3, 3000, 5, 50), quick());
  CHECK(rep.y0 == doctest::Approx(std::exp(0.09)).epsilon(1e-12));
  CHECK(rep.value == doctest::Approx(std::exp(0.03) + (std::exp(0.09) - 1.0) / 2.0).epsilon(1e-9));
  CHECK(rep.admissible);
  CHECK(rep.q_min > 0.0);
  CHECK(rep.psi_slope == doctest::Approx(0.3));
  CHECK(rep.psi_bound == doctest::Approx(0.3));
  CHECK(rep.h_invariant);
  CHECK(rep.feedback_q_gap <= 1e-12);
  CHECK(rep.pass);
}

TEST_CASE("MV feedback in the jump market") {
  const JumpModel jm = test::unit_claims(0.3);
  const Coefficients co{0.03, v1(0.1), v1(0.0), m1(0.2)};
  BsdePoint p;
  p.h = 1.1;
  p.l = v1(0.0);
  p.y = 1.2;
  p.z = v1(0.0);
  p.phi = v1(0.5);
  CHECK(mv_feedback_reinsurance(1.1 * 2.0, p, co, 2.0, jm).q == 0.0);
  CHECK(mv_feedback_reinsurance(3.0, p, co, 2.0, test::unit_claims(0.0)).q == 0.0);

  const double h0 = 1.1, y0 = 1.3, x = 1.0, theta = 1.0;
  const double g = gamma_hat(K_hat(h0, y0, x, theta), h0, y0, x);
  const double lam = 0.8, y = 1.2, h = 1.05;
  const double xt = optimal_wealth_closed_form(h, y, lam, h0, y0, x, theta);
  p.h = h;
  p.y = y;
  const double q = mv_feedback_reinsurance(g, p, co, xt, jm).q;
  CHECK(q == doctest::Approx(optimal_q(p, jm, lam, theta)).epsilon(1e-13));
  CHECK(q == doctest::Approx(0.3 * lam * y / (h * theta)).epsilon(1e-13));
}

TEST_CASE("vanishing premium loading reproduces the portfolio report") {
  RunOptions o = quick();
  const ApplicationReport a = run_portfolio(acceptance::constant_portfolio(1500, 9, 40), o);
  const ApplicationReport b = run_reinsurance(acceptance::constant_reinsurance(1e-200, 1500, 9, 40), o);
  const LimitComparison cmp = compare_reports(a, b);
  CHECK(cmp.compared > 10);
  for (const auto& m : cmp.mismatches) INFO(m);
  CHECK(cmp.identical());
}
