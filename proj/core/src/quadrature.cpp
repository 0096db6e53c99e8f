#include "mmvlab/quadrature.hpp"

#include <cmath>
#include <sstream>

#include "mmvlab/error.hpp"

namespace mmvlab {

double simpson(const std::function<double(double)>& f, double a, double b,
               const QuadratureOptions& opt) {
  if (a == b) return 0.0;
  // Endpoints, odd and even interior nodes are kept apart so that each
  // doubling only evaluates the new midpoints.
  const double fa = f(a);
  const double fb = f(b);
  double ends = fa + fb;
  double abs_ends = std::abs(fa) + std::abs(fb);
  int panels = 2;
  double h = (b - a) / panels;
  double odd = f(a + h);
  double abs_odd = std::abs(odd);
  double even = 0.0;
  double abs_even = 0.0;
  double prev = h / 3.0 * (ends + 4.0 * odd);
  for (int it = 0; it < opt.max_doublings; ++it) {
    even += odd;
    abs_even += abs_odd;
    panels *= 2;
    h = (b - a) / panels;
    odd = 0.0;
    abs_odd = 0.0;
    for (int i = 1; i < panels; i += 2) {
      const double v = f(a + i * h);
      odd += v;
      abs_odd += std::abs(v);
    }
    const double cur = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    const double scale = std::abs(h) / 3.0 * (abs_ends + 4.0 * abs_odd + 2.0 * abs_even);
    if (!std::isfinite(cur)) break;
    if (std::abs(cur - prev) <= opt.rel_tol * std::max(std::abs(cur), scale) ||
        std::abs(cur - prev) == 0.0)
      return cur;
    prev = cur;
  }
  std::ostringstream os;
  os << "Simpson on [" << a << ", " << b << "] did not reach " << opt.rel_tol << " after "
     << opt.max_doublings << " doublings";
  throw Error(ErrorCode::QuadratureNonConvergence, os.str());
}

std::vector<double> suffix_integrals(const std::function<double(double)>& f, const TimeGrid& grid,
                                     const QuadratureOptions& opt) {
  const int n = grid.steps();
  std::vector<double> out(n + 1, 0.0);
  for (int k = n - 1; k >= 0; --k) out[k] = out[k + 1] + simpson(f, grid.time(k), grid.time(k + 1), opt);
  return out;
}

}  // namespace mmvlab
