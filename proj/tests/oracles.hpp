#pragma once

// Independent reference implementations used only by the test suite. These
// deliberately take the slow, textbook route so they share no code with the
// library kernels they are checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gskan/matrix.hpp"
#include "gskan/spline.hpp"

namespace gskan::testing {

// Textbook two-term Cox-de Boor recursion for a single basis function
// B_{j,d}(t). Half-open spans, so callers should stick to interior t.
inline double bspline_recursive(const std::vector<double>& knots, int j, int d, double t) {
  if (d == 0) return (t >= knots[j] && t < knots[j + 1]) ? 1.0 : 0.0;
  double left = 0.0, right = 0.0;
  const double dl = knots[j + d] - knots[j];
  const double dr = knots[j + d + 1] - knots[j + 1];
  if (dl > 0.0) left = (t - knots[j]) / dl * bspline_recursive(knots, j, d - 1, t);
  if (dr > 0.0) right = (knots[j + d + 1] - t) / dr * bspline_recursive(knots, j + 1, d - 1, t);
  return left + right;
}

// All basis_count values at t by full recursion.
inline std::vector<double> full_basis_row(const KnotVector& kv, double t) {
  std::vector<double> row(kv.basis_count());
  for (int j = 0; j < kv.basis_count(); ++j) {
    row[j] = bspline_recursive(kv.knots, j, kv.degree, t);
  }
  return row;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double t, double step) {
  return (f(t + step) - f(t - step)) / (2.0 * step);
}

// Relative error with a small absolute floor so near-zero pairs compare
// absolutely instead of blowing up.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace gskan::testing
