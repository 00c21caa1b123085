#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gskan/matrix.hpp"
#include "gskan/spline.hpp"

namespace gskan {

enum class Activation { kIdentity, kRelu, kSilu };

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double silu(double u) { return u * sigmoid(u); }
inline double silu_grad(double u) {
  const double s = sigmoid(u);
  return s * (1.0 + u * (1.0 - s));
}

inline double apply_activation(Activation act, double u) {
  switch (act) {
    case Activation::kIdentity: return u;
    case Activation::kRelu: return u > 0.0 ? u : 0.0;
    case Activation::kSilu: return silu(u);
  }
  return u;
}

// ReLU subgradient at 0 is fixed to 0 so gradient checks have a reproducible
// exclusion zone.
inline double activation_grad(Activation act, double u) {
  switch (act) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return u > 0.0 ? 1.0 : 0.0;
    case Activation::kSilu: return silu_grad(u);
  }
  return 1.0;
}

// Mexican-hat mother wavelet and its derivative.
inline double mexican_hat(double u) { return (1.0 - u * u) * std::exp(-0.5 * u * u); }
inline double mexican_hat_grad(double u) { return (u * u * u - 3.0 * u) * std::exp(-0.5 * u * u); }

// ---------------------------------------------------------------------------
// GS-KAN layer: y_q = sum_p lambda(q,p) * psi(x_p + eps_q) with one shared
// learnable spline psi per layer.
// ---------------------------------------------------------------------------

struct GsKanLayer {
  int n_in = 0;
  int n_out = 0;
  Matrix lambda;             // [n_out x n_in]
  std::vector<double> eps;   // [n_out]
  SharedBasis basis;
};

// Everything the backward pass needs, recorded per (b, q, p) triple: the
// local basis values/derivatives at x_p + eps_q plus the spline value itself.
struct GsKanCache {
  Matrix x;
  int stride = 0;  // degree + 1
  std::vector<std::int32_t> offset;
  std::vector<double> basis_val;
  std::vector<double> basis_der;
  std::vector<double> psi;
};

struct GsKanGrads {
  Matrix d_lambda;
  std::vector<double> d_eps;
  std::vector<double> d_coeffs;
  Matrix dx;
};

inline std::pair<Matrix, GsKanCache> gskan_forward(const GsKanLayer& layer, const Matrix& x) {
  require_cols(x, static_cast<std::size_t>(layer.n_in), "gskan_forward");
  const int degree = layer.basis.kv.degree;
  const std::size_t batch = x.rows();
  const std::size_t triples = batch * layer.n_out * layer.n_in;

  GsKanCache cache;
  cache.x = x;
  cache.stride = degree + 1;
  cache.offset.resize(triples);
  cache.basis_val.resize(triples * cache.stride);
  cache.basis_der.resize(triples * cache.stride);
  cache.psi.resize(triples);

  Matrix y(batch, layer.n_out);
  LocalBasis val, der;
  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      double acc = 0.0;
      for (int p = 0; p < layer.n_in; ++p) {
        const double t = x(b, p) + layer.eps[q];
        basis_values_and_derivatives(layer.basis.kv, t, val, der);
        const std::size_t idx = (b * layer.n_out + q) * layer.n_in + p;
        cache.offset[idx] = val.offset;
        double psi = 0.0;
        for (int r = 0; r <= degree; ++r) {
          cache.basis_val[idx * cache.stride + r] = val.value[r];
          cache.basis_der[idx * cache.stride + r] = der.value[r];
          psi += layer.basis.coeffs[val.offset + r] * val.value[r];
        }
        cache.psi[idx] = psi;
        acc += layer.lambda(q, p) * psi;
      }
      y(b, q) = acc;
    }
  }
  return {std::move(y), std::move(cache)};
}

// Gradients are summed over the batch; the loss owns the 1/B factor.
// Arguments that fell outside the spline domain have all-zero cached basis
// rows, so they contribute nothing to any gradient.
inline GsKanGrads gskan_backward(const GsKanLayer& layer, const GsKanCache& cache,
                                 const Matrix& dy) {
  const std::size_t batch = cache.x.rows();
  if (dy.rows() != batch || dy.cols() != static_cast<std::size_t>(layer.n_out)) {
    throw std::invalid_argument("gskan_backward: dY shape does not match cache");
  }
  const int degree = layer.basis.kv.degree;

  GsKanGrads grads;
  grads.d_lambda = Matrix(layer.n_out, layer.n_in);
  grads.d_eps.assign(layer.eps.size(), 0.0);
  grads.d_coeffs.assign(layer.basis.coeffs.size(), 0.0);
  grads.dx = Matrix(batch, layer.n_in);

  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      const double g = dy(b, q);
      if (g == 0.0) continue;
      for (int p = 0; p < layer.n_in; ++p) {
        const std::size_t idx = (b * layer.n_out + q) * layer.n_in + p;
        const std::int32_t off = cache.offset[idx];
        const double lam = layer.lambda(q, p);
        double dpsi = 0.0;
        for (int r = 0; r <= degree; ++r) {
          dpsi += layer.basis.coeffs[off + r] * cache.basis_der[idx * cache.stride + r];
        }
        grads.d_lambda(q, p) += g * cache.psi[idx];
        grads.d_eps[q] += g * lam * dpsi;
        grads.dx(b, p) += g * lam * dpsi;
        const double glam = g * lam;
        for (int r = 0; r <= degree; ++r) {
          grads.d_coeffs[off + r] += glam * cache.basis_val[idx * cache.stride + r];
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Dense (MLP) layer: y = act(W x + b).
// ---------------------------------------------------------------------------

struct DenseLayer {
  int n_in = 0;
  int n_out = 0;
  Matrix weights;            // [n_out x n_in]
  std::vector<double> biases;
  Activation activation = Activation::kIdentity;
};

struct DenseCache {
  Matrix x;
  Matrix pre;  // pre-activation
};

struct DenseGrads {
  Matrix d_weights;
  std::vector<double> d_biases;
  Matrix dx;
};

inline std::pair<Matrix, DenseCache> dense_forward(const DenseLayer& layer, const Matrix& x) {
  require_cols(x, static_cast<std::size_t>(layer.n_in), "dense_forward");
  const std::size_t batch = x.rows();
  DenseCache cache;
  cache.x = x;
  cache.pre = Matrix(batch, layer.n_out);
  Matrix y(batch, layer.n_out);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      double u = layer.biases[q];
      for (int p = 0; p < layer.n_in; ++p) u += layer.weights(q, p) * x(b, p);
      cache.pre(b, q) = u;
      y(b, q) = apply_activation(layer.activation, u);
    }
  }
  return {std::move(y), std::move(cache)};
}

inline DenseGrads dense_backward(const DenseLayer& layer, const DenseCache& cache,
                                 const Matrix& dy) {
  const std::size_t batch = cache.x.rows();
  if (dy.rows() != batch || dy.cols() != static_cast<std::size_t>(layer.n_out)) {
    throw std::invalid_argument("dense_backward: dY shape does not match cache");
  }
  DenseGrads grads;
  grads.d_weights = Matrix(layer.n_out, layer.n_in);
  grads.d_biases.assign(layer.biases.size(), 0.0);
  grads.dx = Matrix(batch, layer.n_in);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      const double du = dy(b, q) * activation_grad(layer.activation, cache.pre(b, q));
      if (du == 0.0) continue;
      grads.d_biases[q] += du;
      for (int p = 0; p < layer.n_in; ++p) {
        grads.d_weights(q, p) += du * cache.x(b, p);
        grads.dx(b, p) += du * layer.weights(q, p);
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Wav-KAN layer: y_q = sum_p w(q,p) * psi_M((x_p - shift(q,p)) / scale(q,p))
// with the fixed Mexican-hat mother wavelet.
// ---------------------------------------------------------------------------

struct WavKanLayer {
  int n_in = 0;
  int n_out = 0;
  Matrix weight;  // w  [n_out x n_in]
  Matrix scale;   // s  [n_out x n_in], |s| kept >= kWavKanScaleFloor
  Matrix shift;   // t  [n_out x n_in]
};

inline constexpr double kWavKanScaleFloor = 1e-3;

struct WavKanCache {
  Matrix x;
  std::vector<double> u;      // per (b, q, p)
  std::vector<double> gauss;  // exp(-u^2/2) per (b, q, p)
};

struct WavKanGrads {
  Matrix d_weight;
  Matrix d_scale;
  Matrix d_shift;
  Matrix dx;
};

inline std::pair<Matrix, WavKanCache> wavkan_forward(const WavKanLayer& layer, const Matrix& x) {
  require_cols(x, static_cast<std::size_t>(layer.n_in), "wavkan_forward");
  const std::size_t batch = x.rows();
  WavKanCache cache;
  cache.x = x;
  cache.u.resize(batch * layer.n_out * layer.n_in);
  cache.gauss.resize(cache.u.size());
  Matrix y(batch, layer.n_out);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      double acc = 0.0;
      for (int p = 0; p < layer.n_in; ++p) {
        const std::size_t idx = (b * layer.n_out + q) * layer.n_in + p;
        const double u = (x(b, p) - layer.shift(q, p)) / layer.scale(q, p);
        const double e = std::exp(-0.5 * u * u);
        cache.u[idx] = u;
        cache.gauss[idx] = e;
        acc += layer.weight(q, p) * (1.0 - u * u) * e;
      }
      y(b, q) = acc;
    }
  }
  return {std::move(y), std::move(cache)};
}

inline WavKanGrads wavkan_backward(const WavKanLayer& layer, const WavKanCache& cache,
                                   const Matrix& dy) {
  const std::size_t batch = cache.x.rows();
  if (dy.rows() != batch || dy.cols() != static_cast<std::size_t>(layer.n_out)) {
    throw std::invalid_argument("wavkan_backward: dY shape does not match cache");
  }
  WavKanGrads grads;
  grads.d_weight = Matrix(layer.n_out, layer.n_in);
  grads.d_scale = Matrix(layer.n_out, layer.n_in);
  grads.d_shift = Matrix(layer.n_out, layer.n_in);
  grads.dx = Matrix(batch, layer.n_in);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      const double g = dy(b, q);
      if (g == 0.0) continue;
      for (int p = 0; p < layer.n_in; ++p) {
        const std::size_t idx = (b * layer.n_out + q) * layer.n_in + p;
        const double u = cache.u[idx];
        const double e = cache.gauss[idx];
        const double s = layer.scale(q, p);
        const double dpsi_du = (u * u * u - 3.0 * u) * e;
        const double chain = g * layer.weight(q, p) * dpsi_du;
        grads.d_weight(q, p) += g * (1.0 - u * u) * e;
        grads.d_shift(q, p) -= chain / s;
        grads.d_scale(q, p) -= chain * u / s;
        grads.dx(b, p) += chain / s;
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Per-edge-spline KAN layer (the standard-KAN baseline): every edge carries
// its own spline coefficients on a fixed shared grid, plus a SiLU base path.
//   y_q = sum_p [ base_w(q,p)*silu(x_p) + scale(q,p)*sum_j c(q,p,j)*B_j(x_p) ]
// ---------------------------------------------------------------------------

struct EdgeSplineKanLayer {
  int n_in = 0;
  int n_out = 0;
  KnotVector kv;                // fixed for the whole run
  std::vector<double> coeffs;   // [n_out][n_in][basis_count], row-major
  Matrix base_weight;           // [n_out x n_in]
  Matrix spline_scale;          // [n_out x n_in]

  std::size_t coeff_index(int q, int p, int j) const {
    return (static_cast<std::size_t>(q) * n_in + p) * kv.basis_count() + j;
  }
};

struct EdgeSplineCache {
  Matrix x;
  int stride = 0;  // degree + 1
  // Basis rows depend on x only, so they are cached per (b, p) and shared
  // across output nodes.
  std::vector<std::int32_t> offset;
  std::vector<double> basis_val;
  std::vector<double> basis_der;
  std::vector<double> act;       // silu(x) per (b, p)
  std::vector<double> act_grad;  // silu'(x) per (b, p)
};

struct EdgeSplineGrads {
  std::vector<double> d_coeffs;
  Matrix d_base_weight;
  Matrix d_spline_scale;
  Matrix dx;
};

inline std::pair<Matrix, EdgeSplineCache> edgespline_forward(const EdgeSplineKanLayer& layer,
                                                             const Matrix& x) {
  require_cols(x, static_cast<std::size_t>(layer.n_in), "edgespline_forward");
  const int degree = layer.kv.degree;
  const std::size_t batch = x.rows();
  const std::size_t cells = batch * layer.n_in;

  EdgeSplineCache cache;
  cache.x = x;
  cache.stride = degree + 1;
  cache.offset.resize(cells);
  cache.basis_val.resize(cells * cache.stride);
  cache.basis_der.resize(cells * cache.stride);
  cache.act.resize(cells);
  cache.act_grad.resize(cells);

  LocalBasis val, der;
  for (std::size_t b = 0; b < batch; ++b) {
    for (int p = 0; p < layer.n_in; ++p) {
      const std::size_t cell = b * layer.n_in + p;
      const double t = x(b, p);
      basis_values_and_derivatives(layer.kv, t, val, der);
      cache.offset[cell] = val.offset;
      for (int r = 0; r <= degree; ++r) {
        cache.basis_val[cell * cache.stride + r] = val.value[r];
        cache.basis_der[cell * cache.stride + r] = der.value[r];
      }
      cache.act[cell] = silu(t);
      cache.act_grad[cell] = silu_grad(t);
    }
  }

  Matrix y(batch, layer.n_out);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      double acc = 0.0;
      for (int p = 0; p < layer.n_in; ++p) {
        const std::size_t cell = b * layer.n_in + p;
        const std::int32_t off = cache.offset[cell];
        double spline_sum = 0.0;
        for (int r = 0; r <= degree; ++r) {
          spline_sum += layer.coeffs[layer.coeff_index(q, p, off + r)] *
                        cache.basis_val[cell * cache.stride + r];
        }
        acc += layer.base_weight(q, p) * cache.act[cell] +
               layer.spline_scale(q, p) * spline_sum;
      }
      y(b, q) = acc;
    }
  }
  return {std::move(y), std::move(cache)};
}

inline EdgeSplineGrads edgespline_backward(const EdgeSplineKanLayer& layer,
                                           const EdgeSplineCache& cache, const Matrix& dy) {
  const std::size_t batch = cache.x.rows();
  if (dy.rows() != batch || dy.cols() != static_cast<std::size_t>(layer.n_out)) {
    throw std::invalid_argument("edgespline_backward: dY shape does not match cache");
  }
  const int degree = layer.kv.degree;
  EdgeSplineGrads grads;
  grads.d_coeffs.assign(layer.coeffs.size(), 0.0);
  grads.d_base_weight = Matrix(layer.n_out, layer.n_in);
  grads.d_spline_scale = Matrix(layer.n_out, layer.n_in);
  grads.dx = Matrix(batch, layer.n_in);

  for (std::size_t b = 0; b < batch; ++b) {
    for (int q = 0; q < layer.n_out; ++q) {
      const double g = dy(b, q);
      if (g == 0.0) continue;
      for (int p = 0; p < layer.n_in; ++p) {
        const std::size_t cell = b * layer.n_in + p;
        const std::int32_t off = cache.offset[cell];
        const double scale = layer.spline_scale(q, p);
        double spline_sum = 0.0, spline_der = 0.0;
        for (int r = 0; r <= degree; ++r) {
          const double c = layer.coeffs[layer.coeff_index(q, p, off + r)];
          spline_sum += c * cache.basis_val[cell * cache.stride + r];
          spline_der += c * cache.basis_der[cell * cache.stride + r];
          grads.d_coeffs[layer.coeff_index(q, p, off + r)] +=
              g * scale * cache.basis_val[cell * cache.stride + r];
        }
        grads.d_base_weight(q, p) += g * cache.act[cell];
        grads.d_spline_scale(q, p) += g * spline_sum;
        grads.dx(b, p) += g * (layer.base_weight(q, p) * cache.act_grad[cell] + scale * spline_der);
      }
    }
  }
  return grads;
}

}  // namespace gskan
