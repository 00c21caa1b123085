#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gskan {

// Highest spline degree the local evaluation buffers are sized for.
inline constexpr int kMaxDegree = 5;

// Uniform knot sequence for degree-d B-splines over an active interval
// [domain_lo, domain_hi]. The d padding knots on each side continue the
// uniform spacing h beyond the interval (no repeated boundary knots), so
// knots[d] == domain_lo and knots[K-1-d] == domain_hi. The basis has
// K - d - 1 member functions.
struct KnotVector {
  int degree = 3;
  std::vector<double> knots;
  double domain_lo = -1.0;
  double domain_hi = 1.0;

  int num_knots() const { return static_cast<int>(knots.size()); }
  int basis_count() const { return num_knots() - degree - 1; }
  int num_segments() const { return num_knots() - 1 - 2 * degree; }
  double spacing() const { return (domain_hi - domain_lo) / num_segments(); }
  bool in_domain(double t) const { return t >= domain_lo && t <= domain_hi; }
};

inline KnotVector build_uniform_knots(double domain_lo, double domain_hi, int total_knots,
                                      int degree = 3) {
  if (!std::isfinite(domain_lo) || !std::isfinite(domain_hi) || domain_lo >= domain_hi) {
    throw std::invalid_argument("build_uniform_knots: domain must be finite with lo < hi");
  }
  if (degree < 1 || degree > kMaxDegree) {
    throw std::invalid_argument("build_uniform_knots: degree must be in [1, " +
                                std::to_string(kMaxDegree) + "]");
  }
  if (total_knots < 2 * degree + 2) {
    throw std::invalid_argument("build_uniform_knots: insufficient knots for degree (need K >= 2d+2)");
  }
  KnotVector kv;
  kv.degree = degree;
  kv.domain_lo = domain_lo;
  kv.domain_hi = domain_hi;
  kv.knots.resize(total_knots);
  const int segments = total_knots - 1 - 2 * degree;
  const double span = domain_hi - domain_lo;
  for (int i = 0; i < total_knots; ++i) {
    kv.knots[i] = domain_lo + span * (static_cast<double>(i - degree) / segments);
  }
  return kv;
}

// Values of the at most degree+1 basis functions that can be nonzero at one
// point: value[r] = B_{offset+r, d}(t).
struct LocalBasis {
  int offset = 0;
  std::array<double, kMaxDegree + 1> value{};
};

namespace detail {

// Index i of the knot span [knots[i], knots[i+1]] containing t, restricted to
// the active spans [d, K-2-d]. The arithmetic guess is nudged so the bracket
// actually holds, which keeps every term in the triangular recursion
// nonnegative for in-domain t.
inline int find_span(const KnotVector& kv, double t) {
  const int d = kv.degree;
  const int hi_span = kv.num_knots() - 2 - d;
  const double h = kv.spacing();
  int i = d + static_cast<int>(std::floor((t - kv.domain_lo) / h));
  if (i < d) i = d;
  if (i > hi_span) i = hi_span;
  while (i > d && t < kv.knots[i]) --i;
  while (i < hi_span && t > kv.knots[i + 1]) ++i;
  return i;
}

// Triangular scheme for the nonzero basis values at t in span i. If
// degree_minus_one is non-null it receives the degree d-1 row, which is what
// the derivative formula consumes.
inline void local_values(const KnotVector& kv, double t, int span,
                         std::array<double, kMaxDegree + 1>& out,
                         std::array<double, kMaxDegree + 1>* degree_minus_one = nullptr) {
  const int d = kv.degree;
  std::array<double, kMaxDegree + 1> left{}, right{};
  out[0] = 1.0;
  for (int j = 1; j <= d; ++j) {
    if (j == d && degree_minus_one) {
      for (int r = 0; r < d; ++r) (*degree_minus_one)[r] = out[r];
    }
    left[j] = t - kv.knots[span + 1 - j];
    right[j] = kv.knots[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace detail

// Local basis values at t. Outside [domain_lo, domain_hi] every value is zero
// and the offset is clamped into [0, basis_count - degree - 1]; this is the
// hard-zero convention the fixed-domain training strategy relies on.
inline LocalBasis basis_values(const KnotVector& kv, double t) {
  LocalBasis out;
  const int span = detail::find_span(kv, t);
  out.offset = span - kv.degree;
  if (!kv.in_domain(t)) return out;
  detail::local_values(kv, t, span, out.value);
  return out;
}

// Local values of dB_{j,d}/dt via the degree-reduction identity
// d * (B_{j,d-1}/(t_{j+d}-t_j) - B_{j+1,d-1}/(t_{j+d+1}-t_{j+1})).
// Zero outside the domain, like basis_values.
inline LocalBasis basis_derivatives(const KnotVector& kv, double t) {
  LocalBasis out;
  const int d = kv.degree;
  const int span = detail::find_span(kv, t);
  out.offset = span - d;
  if (!kv.in_domain(t)) return out;
  std::array<double, kMaxDegree + 1> full{}, lower{};
  detail::local_values(kv, t, span, full, &lower);
  for (int r = 0; r <= d; ++r) {
    const int j = span - d + r;
    const double left = (r >= 1) ? lower[r - 1] / (kv.knots[j + d] - kv.knots[j]) : 0.0;
    const double right = (r < d) ? lower[r] / (kv.knots[j + d + 1] - kv.knots[j + 1]) : 0.0;
    out.value[r] = d * (left - right);
  }
  return out;
}

// Values and first derivatives in one pass; shares the triangular table.
inline void basis_values_and_derivatives(const KnotVector& kv, double t, LocalBasis& values,
                                         LocalBasis& derivatives) {
  const int d = kv.degree;
  const int span = detail::find_span(kv, t);
  values = LocalBasis{};
  derivatives = LocalBasis{};
  values.offset = span - d;
  derivatives.offset = span - d;
  if (!kv.in_domain(t)) return;
  std::array<double, kMaxDegree + 1> lower{};
  detail::local_values(kv, t, span, values.value, &lower);
  for (int r = 0; r <= d; ++r) {
    const int j = span - d + r;
    const double left = (r >= 1) ? lower[r - 1] / (kv.knots[j + d] - kv.knots[j]) : 0.0;
    const double right = (r < d) ? lower[r] / (kv.knots[j + d + 1] - kv.knots[j + 1]) : 0.0;
    derivatives.value[r] = d * (left - right);
  }
}

// One learnable univariate spline: a knot vector plus one coefficient per
// basis function. This is the object a GS-KAN layer shares across its edges.
struct SharedBasis {
  KnotVector kv;
  std::vector<double> coeffs;
};

inline SharedBasis make_shared_basis(KnotVector kv, std::vector<double> coeffs) {
  if (static_cast<int>(coeffs.size()) != kv.basis_count()) {
    throw std::invalid_argument("make_shared_basis: coefficient count must equal basis_count");
  }
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw std::invalid_argument("make_shared_basis: non-finite coefficient");
  }
  return SharedBasis{std::move(kv), std::move(coeffs)};
}

inline double spline_eval(const SharedBasis& basis, double t) {
  if (!basis.kv.in_domain(t)) return 0.0;
  const LocalBasis local = basis_values(basis.kv, t);
  double sum = 0.0;
  for (int r = 0; r <= basis.kv.degree; ++r) sum += basis.coeffs[local.offset + r] * local.value[r];
  return sum;
}

inline double spline_eval_derivative(const SharedBasis& basis, double t) {
  if (!basis.kv.in_domain(t)) return 0.0;
  const LocalBasis local = basis_derivatives(basis.kv, t);
  double sum = 0.0;
  for (int r = 0; r <= basis.kv.degree; ++r) sum += basis.coeffs[local.offset + r] * local.value[r];
  return sum;
}

// Greville abscissae xi_j = (t_{j+1} + ... + t_{j+d}) / d. Using these as
// coefficients makes the spline reproduce the identity on the active domain,
// which both the initialization scheme and the linear-precision tests use.
inline std::vector<double> greville_abscissae(const KnotVector& kv) {
  std::vector<double> xi(kv.basis_count());
  for (int j = 0; j < kv.basis_count(); ++j) {
    double sum = 0.0;
    for (int r = 1; r <= kv.degree; ++r) sum += kv.knots[j + r];
    xi[j] = sum / kv.degree;
  }
  return xi;
}

}  // namespace gskan
