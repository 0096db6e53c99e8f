#pragma once

#include <functional>
#include <vector>

#include "mmvlab/time_grid.hpp"

namespace mmvlab {

struct QuadratureOptions {
  double rel_tol = 1e-10;
  int max_doublings = 24;
};

/// Composite Simpson on [a, b], doubling the panel count until two
/// successive estimates agree to rel_tol. Throws QuadratureNonConvergence.
double simpson(const std::function<double(double)>& f, double a, double b,
               const QuadratureOptions& opt = {});

/// out[k] = int_{t_k}^T f(s) ds for k = 0..N, so out[N] == 0. Each grid
/// interval is integrated separately and the results are summed from the end.
std::vector<double> suffix_integrals(const std::function<double(double)>& f, const TimeGrid& grid,
                                     const QuadratureOptions& opt = {});

}  // namespace mmvlab
