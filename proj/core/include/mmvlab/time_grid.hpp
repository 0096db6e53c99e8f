#pragma once

#include <cstddef>

#include "mmvlab/error.hpp"

namespace mmvlab {

/// Uniform grid t_k = k * dt on [0, horizon], k = 0..steps.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0)) throw Error(ErrorCode::DomainError, "grid horizon must be positive");
    if (steps < 2) throw Error(ErrorCode::DomainError, "grid needs at least 2 steps");
  }

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double dt() const noexcept { return horizon_ / steps_; }
  // Exact at k == steps so that t_N == T bit-for-bit.
  double time(int k) const noexcept { return k == steps_ ? horizon_ : k * dt(); }

  TimeGrid refined(int factor) const { return TimeGrid(horizon_, steps_ * factor); }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  int steps_;
};

}  // namespace mmvlab
