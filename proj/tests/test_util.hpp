#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

namespace testutil {

inline double central_diff(const std::function<double(double)>& f, double x, double scale = 1.0) {
  const double h = 1e-5 * std::max(1.0, std::abs(scale));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace testutil
