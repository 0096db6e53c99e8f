#include <doctest.h>

#include <limits>

#include "mmvlab/model.hpp"
#include "support.hpp"

using namespace mmvlab;
using test::m1;
using test::v1;

namespace {

PortfolioMarket vasicek_market() {
  PortfolioMarket m;
  m.r.kind = RateSpec::Kind::Vasicek;
  m.r.vasicek.kappa = 0.8;
  m.r.vasicek.mean = 0.04;
  m.r.vasicek.vol = Vec(2);
  m.r.vasicek.vol << 0.015, 0.0;
  m.r.vasicek.f0 = 0.03;
  m.mu = Vec(2);
  m.mu << 0.08, 0.05;
  m.sigma = Mat(2, 2);
  m.sigma << 0.2, 0.0, 0.05, 0.15;
  return m;
}

}  // namespace

TEST_CASE("validation of the nondegeneracy bound") {
  ModelLimits lim;
  lim.delta = 0.01;
  ScenarioConfig cfg = test::scenario(test::constant_model(0.0, 0.0, 0.0, 0.2), 10);
  cfg.model.set_limits(lim);
  CHECK(validate_scenario(cfg).ok());

  cfg.model = test::constant_model(0.0, 0.0, 0.0, 0.0);
  cfg.model.set_limits(lim);
  const ValidationReport rep = validate_scenario(cfg);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].rule == "nondegeneracy");
}

TEST_CASE("validation of a factor model and of the claim support") {
  ScenarioConfig cfg = test::scenario(portfolio_to_generic(vasicek_market()), 10);
  CHECK(cfg.model.tier() == Tier::MarkovFactor);
  CHECK(validate_scenario(cfg).ok());

  JumpModel j = test::unit_claims(0.3);
  j.claims = ClaimDistribution::lognormal_truncated(-0.5, 0.6, std::numeric_limits<double>::infinity());
  cfg.jump = j;
  const ValidationReport rep = validate_scenario(cfg);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].rule == "claim support unbounded");
}

TEST_CASE("validation reports a non-positive risk parameter") {
  ScenarioConfig cfg = test::scenario(test::constant_model(0.0, 0.1, 0.0, 0.2), 10);
  cfg.theta = 0.0;
  const ValidationReport rep = validate_scenario(cfg);
  CHECK(rep.has("theta"));
  CHECK(rep.violations[0].location == "/theta");
}

TEST_CASE("portfolio mapping with a constant rate") {
  PortfolioMarket m;
  m.r.r0 = 0.03;
  m.mu = v1(0.10);
  m.sigma = m1(0.20);
  const CoefficientModel model = portfolio_to_generic(m);
  CHECK(model.tier() == Tier::Deterministic);
  for (double t : {0.0, 0.4, 1.0}) {
    const Coefficients co = model.evaluate(t, model.initial_features());
    CHECK(co.a == 0.03);
    CHECK(co.b[0] == 0.10);
    CHECK(co.c[0] == 0.0);
    CHECK(co.d(0, 0) == 0.20);
  }
  const PortfolioMarket back = generic_to_portfolio(model);
  CHECK(back.r.r0 == 0.03);
  CHECK(back.mu == m.mu);
  CHECK(back.sigma == m.sigma);
}

TEST_CASE("portfolio mapping with zero drift") {
  PortfolioMarket m;
  m.mu = v1(0.0);
  m.sigma = m1(1.0);
  const Coefficients co = portfolio_to_generic(m).evaluate(0.5, FeatureState{});
  CHECK(co.a == 0.0);
  CHECK(co.b[0] == 0.0);
  CHECK(co.c[0] == 0.0);
}

TEST_CASE("portfolio mapping with a Vasicek rate round-trips") {
  const PortfolioMarket m = vasicek_market();
  const CoefficientModel model = portfolio_to_generic(m);
  CHECK(model.tier() == Tier::MarkovFactor);
  FeatureState s = model.initial_features();
  CHECK(s.value[0] == 0.03);
  s.value[0] = 0.051;
  CHECK(model.evaluate(0.3, s).a == 0.051);
  const PortfolioMarket back = generic_to_portfolio(model);
  CHECK(back.r.kind == RateSpec::Kind::Vasicek);
  CHECK(back.r.vasicek.kappa == 0.8);
  CHECK(back.r.vasicek.mean == 0.04);
  CHECK(back.r.vasicek.vol == m.r.vasicek.vol);
  CHECK(back.r.vasicek.f0 == 0.03);
  CHECK(back.mu == m.mu);
  CHECK(back.sigma == m.sigma);
}

TEST_CASE("portfolio mapping rejects bad inputs") {
  PortfolioMarket m;
  m.mu = v1(0.1);
  m.sigma = m1(0.0);
  CHECK_THROWS_AS(portfolio_to_generic(m), Error);
  try {
    portfolio_to_generic(m);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Degenerate);
  }
  m.sigma = Mat::Identity(2, 2);
  try {
    portfolio_to_generic(m);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("claim moments satisfy m1^2 <= m2") {
  const auto d = ClaimDistribution::discrete({{0.5, 0.4}, {1.0, 0.4}, {2.0, 0.2}});
  CHECK(d.moment(1) == doctest::Approx(1.0));
  CHECK(d.moment(2) == doctest::Approx(0.1 + 0.4 + 0.8));
  CHECK(d.moment(1) * d.moment(1) <= d.moment(2));
  const auto l = ClaimDistribution::lognormal_truncated(-0.5, 0.6, 5.0);
  CHECK(l.moment(1) > 0.0);
  CHECK(l.moment(1) * l.moment(1) <= l.moment(2));
  CHECK(l.moment(1) < std::exp(-0.5 + 0.18));
  for (double u : {1e-9, 0.3, 0.999999}) {
    const double y = l.sample(u);
    CHECK(y > 0.0);
    CHECK(y <= 5.0);
  }
}

TEST_CASE("minimum eigenvalue of D D'") {
  Mat d(2, 2);
  d << 2.0, 0.0, 0.0, 0.5;
  CHECK(min_eig_ddt(d) == doctest::Approx(0.25));
}
