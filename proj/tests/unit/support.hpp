#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "mmvlab/bsde.hpp"
#include "mmvlab/model.hpp"

namespace test {

using mmvlab::Mat;
using mmvlab::Vec;

inline Vec v1(double a) { return Vec::Constant(1, a); }
inline Mat m1(double a) { return Mat::Constant(1, 1, a); }

/// One-dimensional constant coefficients (A, B, C, D).
inline mmvlab::CoefficientModel constant_model(double a, double b, double c, double d) {
  return mmvlab::CoefficientModel::deterministic(
      mmvlab::DeterministicSpec{a, 0.0, v1(b), v1(0.0), v1(c), v1(0.0), m1(d), m1(0.0)});
}

inline mmvlab::ScenarioConfig scenario(mmvlab::CoefficientModel model, std::size_t n_paths,
                                       int steps = 50, std::uint64_t seed = 42) {
  mmvlab::ScenarioConfig cfg;
  cfg.model = std::move(model);
  cfg.grid = mmvlab::TimeGrid(1.0, steps);
  cfg.n_paths = n_paths;
  cfg.seed = seed;
  return cfg;
}

inline mmvlab::JumpModel unit_claims(double b, double lambda = 1.0) {
  mmvlab::JumpModel j;
  j.intensity = lambda;
  j.claims = mmvlab::ClaimDistribution::discrete({{1.0, 1.0}});
  j.premium_loading = b;
  return j;
}

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace test
