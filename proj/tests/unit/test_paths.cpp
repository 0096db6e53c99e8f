#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmvlab/parallel.hpp"
#include "mmvlab/paths.hpp"
#include "support.hpp"

using namespace mmvlab;

namespace {

ControlRule zero_rule(int n, double q = 0.0) {
  return [n, q](const ControlInput&) { return ControlDecision{Vec::Zero(n), q}; };
}

GeneratorRule constant_eta(double c) {
  return [c](const StepInput&) { return Generator{test::v1(c), {}}; };
}

}  // namespace

TEST_CASE("path generation is deterministic") {
  const PathBundle a(TimeGrid(1.0, 4), 2, 1, 42);
  const PathBundle b(TimeGrid(1.0, 4), 2, 1, 42);
  std::vector<double> x(4), y(4);
  for (std::size_t p = 0; p < 2; ++p) {
    a.increments(p, x);
    b.increments(p, y);
    CHECK(x == y);
    CHECK(a.jumps(p).empty());
  }
  CHECK_FALSE(a.jump().has_value());
}

TEST_CASE("claim counts have the Poisson mean") {
  const PathBundle b(TimeGrid(1.0, 10), 100000, 1, 42, streams::kSimulation, false,
                     test::unit_claims(0.3, 2.0));
  double count = 0.0;
  for (std::size_t p = 0; p < b.n_paths(); ++p) {
    const auto js = b.jumps(p);
    for (const auto& j : js) {
      CHECK(j.time > 0.0);
      CHECK(j.time <= 1.0);
    }
    count += static_cast<double>(js.size());
  }
  const double mean = count / static_cast<double>(b.n_paths());
  CHECK(mean >= 1.97);
  CHECK(mean <= 2.03);
}

TEST_CASE("Brownian increments pass the sanity gates") {
  const PathBundle b(TimeGrid(1.0, 20), 20000, 2, 3);
  const BrownianSanity s = check_increments(b);
  CHECK(s.ok);
  CHECK(s.worst_mean_ratio <= 5.0);
}

TEST_CASE("antithetic pairs mirror each other") {
  const PathBundle b(TimeGrid(1.0, 6), 4, 1, 5, streams::kSimulation, true);
  std::vector<double> x(6), y(6);
  b.increments(0, x);
  b.increments(1, y);
  for (int k = 0; k < 6; ++k) CHECK(x[k] == -y[k]);
}

TEST_CASE("path budget") {
  ScenarioConfig cfg = test::scenario(test::constant_model(0, 0, 0, 1), 1000000, 1000);
  try {
    generate_paths(cfg, 1e6);
    FAIL("expected ResourceLimit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ResourceLimit);
  }
}

TEST_CASE("zero dynamics keep wealth constant") {
  const CoefficientModel model = test::constant_model(0.0, 0.0, 0.0, 1.0);
  const PathBundle b(TimeGrid(1.0, 8), 100, 1, 1);
  SimulateOptions so;
  so.retain_full = true;
  const StatePath st = simulate_state(model, zero_rule(1), b, 1.5, so);
  for (int k = 0; k <= 8; ++k)
    for (std::size_t p = 0; p < 100; ++p) CHECK(st.at(k, p) == 1.5);
}

TEST_CASE("constant rate without control compounds deterministically") {
  const int steps = 50;
  const CoefficientModel model = test::constant_model(0.03, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, steps), 10, 1, 1);
  const StatePath st = simulate_state(model, zero_rule(1), b, 2.0);
  double expected = 2.0;
  for (int k = 0; k < steps; ++k) expected *= 1.0 + 0.03 / steps;
  for (std::size_t p = 0; p < 10; ++p) CHECK(st.terminal(p) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("claims flow with unit retention matches a direct recursion") {
  const int steps = 20;
  const double r = 0.03, b = 0.3, dt = 1.0 / steps;
  const CoefficientModel model = test::constant_model(r, 0.1, 0.0, 0.2);
  const JumpModel jm = test::unit_claims(b);
  const PathBundle bundle(TimeGrid(1.0, steps), 3, 1, 9, streams::kSimulation, false, jm);
  const StatePath st = simulate_state(model, zero_rule(1, 1.0), bundle, 1.0);
  for (std::size_t p = 0; p < 3; ++p) {
    const auto marks = bundle.jumps(p);
    double x = 1.0;
    for (int k = 0; k < steps; ++k) {
      const double t0 = k * dt, t1 = (k + 1) * dt;
      double claims = 0.0;
      for (const auto& m : marks)
        if (m.time > t0 && m.time <= t1 + 1e-15) claims += m.size;
      x = x + r * x * dt + b * dt - (claims - dt);
    }
    CHECK(st.terminal(p) == doctest::Approx(x).epsilon(1e-12));
  }

  const PathBundle many(TimeGrid(1.0, steps), 50000, 1, 9, streams::kSimulation, false, jm);
  const StatePath big = simulate_state(model, zero_rule(1, 1.0), many, 1.0);
  std::vector<double> xt(big.x.begin(), big.x.end());
  const Estimate e = sample_estimate(xt);
  double euler = 1.0, premium = 0.0;
  for (int k = 0; k < steps; ++k) {
    euler *= 1.0 + r * dt;
    premium = premium * (1.0 + r * dt) + b * dt;
  }
  CHECK(std::abs(e.mean - (euler + premium)) <= 4.0 * e.se);
}

TEST_CASE("negative retention is rejected") {
  const CoefficientModel model = test::constant_model(0.0, 0.1, 0.0, 0.2);
  const PathBundle bundle(TimeGrid(1.0, 4), 2, 1, 1, streams::kSimulation, false, test::unit_claims(0.3));
  try {
    simulate_state(model, zero_rule(1, -0.5), bundle, 1.0);
    FAIL("expected NegativeRetention");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NegativeRetention);
  }
}

TEST_CASE("empty stochastic exponential is one") {
  const CoefficientModel model = test::constant_model(0.0, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, 10), 50, 1, 2);
  const DensityPath d = stochastic_exponential(constant_eta(0.0), model, b, true);
  for (double v : d.lambda) CHECK(v == 1.0);
}

TEST_CASE("constant generator has lognormal moments") {
  const double c = 0.4;
  const CoefficientModel model = test::constant_model(0.0, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, 10), 100000, 1, 2);
  const DensityPath d = stochastic_exponential(constant_eta(c), model, b);
  CHECK(d.min_value > 0.0);
  const Estimate m1 = sample_estimate(d.lambda);
  CHECK(std::abs(m1.mean - 1.0) <= 4.0 * m1.se);
  CHECK(d.martingale_ok);
  std::vector<double> sq(d.lambda.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = d.lambda[i] * d.lambda[i];
  const Estimate m2 = sample_estimate(sq);
  CHECK(std::abs(m2.mean - std::exp(c * c)) <= 4.0 * m2.se);
}

TEST_CASE("jump generator boundary") {
  const auto claims = ClaimDistribution::discrete({{1.0, 0.5}, {2.0, 0.5}});
  CHECK_NOTHROW(check_jump_generator(JumpGenerator{0.0, -1.0 + 1e-9}, claims));
  try {
    check_jump_generator(JumpGenerator{0.0, -1.0}, claims);
    FAIL("expected PsiBelowMinusOne");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PsiBelowMinusOne);
  }
}

TEST_CASE("density with jumps stays a martingale") {
  const CoefficientModel model = test::constant_model(0.0, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, 20), 50000, 1, 4, streams::kSimulation, false, test::unit_claims(0.3));
  const GeneratorRule g = [](const StepInput&) { return Generator{test::v1(-0.2), JumpGenerator{0.3, 0.0}}; };
  const DensityPath d = stochastic_exponential(g, model, b);
  CHECK(d.min_value > 0.0);
  CHECK(std::abs(d.terminal_mean - 1.0) <= 4.0 * d.terminal_se);
}

TEST_CASE("Girsanov reweighting") {
  const double c = 0.3;
  const int steps = 10;
  const CoefficientModel model = test::constant_model(0.0, 0.1, 0.0, 0.2);
  const PathBundle b(TimeGrid(1.0, steps), 100000, 1, 6);
  const DensityPath d = stochastic_exponential(constant_eta(c), model, b);
  const DensityPath flat = stochastic_exponential(constant_eta(0.0), model, b);
  std::vector<double> ones(b.n_paths(), 1.0), w_t(b.n_paths());
  std::vector<double> inc(steps);
  for (std::size_t p = 0; p < b.n_paths(); ++p) {
    b.increments(p, inc);
    double w = 0.0;
    for (double x : inc) w += x;
    w_t[p] = w;
  }
  const Estimate one = girsanov_reweight(ones, d.lambda);
  CHECK(std::abs(one.mean - 1.0) <= 4.0 * one.se);
  const Estimate plain = girsanov_reweight(w_t, flat.lambda);
  CHECK(plain.mean == sample_estimate(w_t).mean);
  const Estimate shifted = girsanov_reweight(w_t, d.lambda);
  CHECK(std::abs(shifted.mean - c) <= 4.0 * shifted.se);
  std::vector<double> shorter(10, 1.0);
  try {
    girsanov_reweight(shorter, d.lambda);
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("simulation is invariant to the worker count") {
  const CoefficientModel model = test::constant_model(0.03, 0.1, 0.05, 0.2);
  const PathBundle b(TimeGrid(1.0, 30), 3000, 1, 8);
  const ControlRule rule = [](const ControlInput& in) {
    return ControlDecision{test::v1(0.5 - 0.2 * in.x), 0.0};
  };
  set_worker_count(1);
  const StatePath a = simulate_state(model, rule, b, 1.0);
  const DensityPath da = stochastic_exponential(constant_eta(0.2), model, b);
  set_worker_count(3);
  const StatePath c = simulate_state(model, rule, b, 1.0);
  const DensityPath dc = stochastic_exponential(constant_eta(0.2), model, b);
  set_worker_count(0);
  CHECK(a.x == c.x);
  CHECK(da.lambda == dc.lambda);
  CHECK(da.terminal_mean == dc.terminal_mean);
}
