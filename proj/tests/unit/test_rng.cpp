#include <doctest.h>

#include <set>
#include <vector>

#include "mmvlab/parallel.hpp"
#include "mmvlab/quadrature.hpp"
#include "mmvlab/rng.hpp"
#include "mmvlab/time_grid.hpp"

using namespace mmvlab;

TEST_CASE("philox known answers") {
  using P = rng::Philox4x32;
  CHECK(P::generate({0, 0, 0, 0}, {0, 0}) ==
        P::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(P::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        P::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(P::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        P::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("uniforms lie strictly inside the unit interval and streams differ") {
  const rng::StreamKey a{42, 0}, b{42, 1};
  std::set<double> seen;
  for (std::uint64_t p = 0; p < 2000; ++p) {
    const auto u = rng::uniform_pair(a, p, 3, 0);
    CHECK(u[0] > 0.0);
    CHECK(u[0] < 1.0);
    CHECK(u[1] > 0.0);
    CHECK(u[1] < 1.0);
    seen.insert(u[0]);
    CHECK(rng::uniform_pair(b, p, 3, 0)[0] != u[0]);
  }
  CHECK(seen.size() == 2000);
}

TEST_CASE("time grid") {
  const TimeGrid g(1.0, 3);
  CHECK(g.time(3) == 1.0);
  CHECK(g.time(0) == 0.0);
  CHECK(g.refined(2).steps() == 6);
  CHECK_THROWS_AS(TimeGrid(1.0, 1), Error);
  CHECK_THROWS_AS(TimeGrid(0.0, 10), Error);
}

TEST_CASE("simpson and suffix integrals") {
  CHECK(simpson([](double t) { return std::exp(t); }, 0.0, 1.0) ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
  const TimeGrid g(2.0, 8);
  const auto s = suffix_integrals([](double t) { return t; }, g);
  REQUIRE(s.size() == 9);
  CHECK(s[8] == 0.0);
  for (int k = 0; k <= 8; ++k) CHECK(s[k] == doctest::Approx(2.0 - 0.5 * g.time(k) * g.time(k)));
}

TEST_CASE("block reduction is independent of the worker count") {
  auto run = [](unsigned workers) {
    set_worker_count(workers);
    double total = 0.0;
    block_reduce(
        100000, total, [] { return 0.0; },
        [](std::size_t begin, std::size_t end, double& part) {
          for (std::size_t i = begin; i < end; ++i) part += 1.0 / (1.0 + static_cast<double>(i));
        },
        [](double& t, const double& p) { t += p; });
    return total;
  };
  const double one = run(1);
  CHECK(run(2) == one);
  CHECK(run(5) == one);
  set_worker_count(0);
}
