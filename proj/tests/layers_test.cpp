#include "gskan/layers.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gskan/rng.hpp"
#include "oracles.hpp"

using namespace gskan;
using gskan::testing::bspline_recursive;
using gskan::testing::max_abs_diff;
using gskan::testing::rel_err;

namespace {

// Spline value by full recursion, independent of the local-support kernel.
double oracle_spline(const SharedBasis& basis, double t) {
  if (!basis.kv.in_domain(t)) return 0.0;
  double sum = 0.0;
  for (int j = 0; j < basis.kv.basis_count(); ++j) {
    sum += basis.coeffs[j] * bspline_recursive(basis.kv.knots, j, basis.kv.degree, t);
  }
  return sum;
}

GsKanLayer random_gskan(int n_in, int n_out, int knots, Rng& rng) {
  GsKanLayer layer;
  layer.n_in = n_in;
  layer.n_out = n_out;
  layer.lambda = Matrix(n_out, n_in);
  for (auto& v : layer.lambda.values()) v = rng.uniform(-1.0, 1.0);
  layer.eps.resize(n_out);
  for (auto& e : layer.eps) e = rng.uniform(-0.1, 0.1);
  KnotVector kv = build_uniform_knots(-1.0, 1.0, knots, 3);
  std::vector<double> coeffs(kv.basis_count());
  for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);
  layer.basis = make_shared_basis(std::move(kv), std::move(coeffs));
  return layer;
}

// Probe inputs that keep every spline argument at least `margin` away from
// every knot, so finite differences never straddle a breakpoint.
Matrix safe_inputs(const GsKanLayer& layer, std::size_t batch, Rng& rng, double margin = 5e-3) {
  const KnotVector& kv = layer.basis.kv;
  Matrix x(batch, layer.n_in);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int p = 0; p < layer.n_in; ++p) {
      double candidate = 0.0;
      for (int attempt = 0; attempt < 200; ++attempt) {
        candidate = rng.uniform(kv.domain_lo * 0.8, kv.domain_hi * 0.8);
        bool ok = true;
        for (double e : layer.eps) {
          const double t = candidate + e;
          for (double knot : kv.knots) {
            if (std::abs(t - knot) < margin) ok = false;
          }
        }
        if (ok) break;
      }
      x(b, p) = candidate;
    }
  }
  return x;
}

template <typename LossFn>
double fd_slot(double& slot, double step, const LossFn& loss) {
  const double orig = slot;
  slot = orig + step;
  const double lp = loss();
  slot = orig - step;
  const double lm = loss();
  slot = orig;
  return (lp - lm) / (2.0 * step);
}

double sq_loss(const Matrix& y) {
  double acc = 0.0;
  for (double v : y.values()) acc += v * v;
  return 0.5 * acc;
}

}  // namespace

TEST_CASE("gskan_forward basics", "[layers]") {
  Rng rng(11);

  SECTION("zero lambda kills the output") {
    GsKanLayer layer = random_gskan(3, 4, 12, rng);
    for (auto& v : layer.lambda.values()) v = 0.0;
    Matrix x(5, 3);
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const auto [y, cache] = gskan_forward(layer, x);
    for (double v : y.values()) REQUIRE(v == 0.0);
  }

  SECTION("1x1 layer with unit weight and zero shift is the spline itself") {
    GsKanLayer layer = random_gskan(1, 1, 14, rng);
    layer.lambda(0, 0) = 1.0;
    layer.eps[0] = 0.0;
    Matrix x(6, 1);
    for (auto& v : x.values()) v = rng.uniform(-0.9, 0.9);
    const auto [y, cache] = gskan_forward(layer, x);
    for (std::size_t b = 0; b < 6; ++b) {
      REQUIRE(y(b, 0) == Catch::Approx(spline_eval(layer.basis, x(b, 0))).margin(1e-14));
    }
  }

  SECTION("matches the scalar triple-loop oracle") {
    GsKanLayer layer = random_gskan(2, 3, 12, rng);
    Matrix x(2, 2);
    for (auto& v : x.values()) v = rng.uniform(-0.8, 0.8);
    const auto [y, cache] = gskan_forward(layer, x);
    for (std::size_t b = 0; b < 2; ++b) {
      for (int q = 0; q < 3; ++q) {
        double expect = 0.0;
        for (int p = 0; p < 2; ++p) {
          expect += layer.lambda(q, p) * oracle_spline(layer.basis, x(b, p) + layer.eps[q]);
        }
        REQUIRE(y(b, q) == Catch::Approx(expect).margin(1e-12));
      }
    }
  }

  SECTION("dimension mismatch is rejected") {
    GsKanLayer layer = random_gskan(3, 2, 12, rng);
    REQUIRE_THROWS_AS(gskan_forward(layer, Matrix(4, 2)), std::invalid_argument);
  }
}

TEST_CASE("gskan layer structural properties", "[layers][property]") {
  Rng rng(23);
  GsKanLayer layer = random_gskan(4, 5, 16, rng);
  Matrix x(6, 4);
  for (auto& v : x.values()) v = rng.uniform(-0.8, 0.8);

  SECTION("shift equivariance: x -> x - delta, eps -> eps + delta") {
    const double delta = 0.37;
    const auto [y0, c0] = gskan_forward(layer, x);
    GsKanLayer shifted = layer;
    for (auto& e : shifted.eps) e += delta;
    Matrix xs = x;
    for (auto& v : xs.values()) v -= delta;
    const auto [y1, c1] = gskan_forward(shifted, xs);
    REQUIRE(max_abs_diff(y0, y1) < 1e-12);
  }

  SECTION("homogeneity in lambda") {
    const double alpha = -2.75;
    const auto [y0, c0] = gskan_forward(layer, x);
    GsKanLayer scaled = layer;
    for (auto& v : scaled.lambda.values()) v *= alpha;
    const auto [y1, c1] = gskan_forward(scaled, x);
    for (std::size_t i = 0; i < y0.size(); ++i) {
      REQUIRE(y1.data()[i] == Catch::Approx(alpha * y0.data()[i]).margin(1e-12));
    }
  }

  SECTION("batch rows are independent") {
    const auto [y0, c0] = gskan_forward(layer, x);
    Matrix xp(x.rows(), x.cols());
    const std::size_t batch = x.rows();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < x.cols(); ++j) xp(b, j) = x(batch - 1 - b, j);
    }
    const auto [y1, c1] = gskan_forward(layer, xp);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t q = 0; q < y0.cols(); ++q) {
        REQUIRE(y1(b, q) == y0(batch - 1 - b, q));
      }
    }
  }
}

TEST_CASE("gskan_backward", "[layers]") {
  Rng rng(31);

  SECTION("zero dY gives zero gradients") {
    GsKanLayer layer = random_gskan(3, 4, 12, rng);
    Matrix x(4, 3);
    for (auto& v : x.values()) v = rng.uniform(-0.8, 0.8);
    const auto [y, cache] = gskan_forward(layer, x);
    const GsKanGrads grads = gskan_backward(layer, cache, Matrix(4, 4));
    for (double v : grads.d_lambda.values()) REQUIRE(v == 0.0);
    for (double v : grads.d_eps) REQUIRE(v == 0.0);
    for (double v : grads.d_coeffs) REQUIRE(v == 0.0);
    for (double v : grads.dx.values()) REQUIRE(v == 0.0);
  }

  SECTION("arguments outside the domain contribute nothing") {
    GsKanLayer layer = random_gskan(2, 3, 12, rng);
    Matrix x(3, 2, 5.0);  // far beyond [-1, 1]
    const auto [y, cache] = gskan_forward(layer, x);
    for (double v : y.values()) REQUIRE(v == 0.0);
    Matrix dy(3, 3, 1.0);
    const GsKanGrads grads = gskan_backward(layer, cache, dy);
    for (double v : grads.d_lambda.values()) REQUIRE(v == 0.0);
    for (double v : grads.d_eps) REQUIRE(v == 0.0);
    for (double v : grads.d_coeffs) REQUIRE(v == 0.0);
    for (double v : grads.dx.values()) REQUIRE(v == 0.0);
  }

  SECTION("every gradient group matches finite differences") {
    GsKanLayer layer = random_gskan(3, 4, 12, rng);
    Matrix x = safe_inputs(layer, 4, rng);
    const double step = 1e-5;
    const auto loss = [&]() { return sq_loss(gskan_forward(layer, x).first); };

    const auto [y, cache] = gskan_forward(layer, x);
    const GsKanGrads grads = gskan_backward(layer, cache, y);

    for (int q = 0; q < layer.n_out; ++q) {
      for (int p = 0; p < layer.n_in; ++p) {
        const double fd = fd_slot(layer.lambda(q, p), step, loss);
        REQUIRE(rel_err(grads.d_lambda(q, p), fd) < 1e-4);
      }
    }
    for (int q = 0; q < layer.n_out; ++q) {
      const double fd = fd_slot(layer.eps[q], step, loss);
      REQUIRE(rel_err(grads.d_eps[q], fd) < 1e-4);
    }
    for (std::size_t j = 0; j < layer.basis.coeffs.size(); ++j) {
      const double fd = fd_slot(layer.basis.coeffs[j], step, loss);
      REQUIRE(rel_err(grads.d_coeffs[j], fd) < 1e-4);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double fd = fd_slot(x.data()[i], step, loss);
      REQUIRE(rel_err(grads.dx.data()[i], fd) < 1e-4);
    }
  }
}

TEST_CASE("dense layer", "[layers]") {
  Rng rng(41);

  SECTION("identity activation with identity weights passes input through") {
    DenseLayer layer{3, 3, Matrix(3, 3), std::vector<double>(3, 0.0), Activation::kIdentity};
    for (int i = 0; i < 3; ++i) layer.weights(i, i) = 1.0;
    Matrix x(4, 3);
    for (auto& v : x.values()) v = rng.uniform(-2.0, 2.0);
    const auto [y, cache] = dense_forward(layer, x);
    REQUIRE(max_abs_diff(y, x) == 0.0);
  }

  SECTION("relu at negative preactivation: zero output, zero gradient") {
    DenseLayer layer{1, 1, Matrix(1, 1, 1.0), {0.0}, Activation::kRelu};
    Matrix x(1, 1, -1.0);
    const auto [y, cache] = dense_forward(layer, x);
    REQUIRE(y(0, 0) == 0.0);
    Matrix dy(1, 1, 1.0);
    const DenseGrads grads = dense_backward(layer, cache, dy);
    REQUIRE(grads.d_weights(0, 0) == 0.0);
    REQUIRE(grads.d_biases[0] == 0.0);
    REQUIRE(grads.dx(0, 0) == 0.0);
  }

  SECTION("silu gradients match finite differences") {
    DenseLayer layer{4, 3, Matrix(3, 4), std::vector<double>(3), Activation::kSilu};
    for (auto& v : layer.weights.values()) v = rng.uniform(-1.0, 1.0);
    for (auto& b : layer.biases) b = rng.uniform(-0.5, 0.5);
    Matrix x(5, 4);
    for (auto& v : x.values()) v = rng.uniform(-1.5, 1.5);
    const double step = 1e-5;
    const auto loss = [&]() { return sq_loss(dense_forward(layer, x).first); };

    const auto [y, cache] = dense_forward(layer, x);
    const DenseGrads grads = dense_backward(layer, cache, y);

    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      const double fd = fd_slot(layer.weights.data()[i], step, loss);
      REQUIRE(rel_err(grads.d_weights.data()[i], fd) < 1e-4);
    }
    for (std::size_t i = 0; i < layer.biases.size(); ++i) {
      const double fd = fd_slot(layer.biases[i], step, loss);
      REQUIRE(rel_err(grads.d_biases[i], fd) < 1e-4);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double fd = fd_slot(x.data()[i], step, loss);
      REQUIRE(rel_err(grads.dx.data()[i], fd) < 1e-4);
    }
  }

  SECTION("matches a naive loop") {
    DenseLayer layer{3, 2, Matrix(2, 3), {0.3, -0.4}, Activation::kSilu};
    for (auto& v : layer.weights.values()) v = rng.uniform(-1.0, 1.0);
    Matrix x(3, 3);
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const auto [y, cache] = dense_forward(layer, x);
    for (std::size_t b = 0; b < 3; ++b) {
      for (int q = 0; q < 2; ++q) {
        double u = layer.biases[q];
        for (int p = 0; p < 3; ++p) u += layer.weights(q, p) * x(b, p);
        REQUIRE(y(b, q) == Catch::Approx(u / (1.0 + std::exp(-u))).margin(1e-12));
      }
    }
  }
}

TEST_CASE("wavkan layer", "[layers]") {
  Rng rng(53);

  SECTION("mother wavelet value at the origin") {
    WavKanLayer layer{1, 1, Matrix(1, 1, 1.0), Matrix(1, 1, 1.0), Matrix(1, 1, 0.0)};
    Matrix x(1, 1, 0.0);
    const auto [y, cache] = wavkan_forward(layer, x);
    REQUIRE(y(0, 0) == Catch::Approx(1.0).margin(1e-15));
  }

  SECTION("zero weights give zero output") {
    WavKanLayer layer{3, 2, Matrix(2, 3, 0.0), Matrix(2, 3, 1.0), Matrix(2, 3, 0.0)};
    Matrix x(4, 3);
    for (auto& v : x.values()) v = rng.uniform(-2.0, 2.0);
    const auto [y, cache] = wavkan_forward(layer, x);
    for (double v : y.values()) REQUIRE(v == 0.0);
  }

  SECTION("matches the naive formula") {
    WavKanLayer layer{2, 3, Matrix(3, 2), Matrix(3, 2), Matrix(3, 2)};
    for (auto& v : layer.weight.values()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : layer.scale.values()) v = rng.uniform(0.5, 2.0);
    for (auto& v : layer.shift.values()) v = rng.uniform(-1.0, 1.0);
    Matrix x(2, 2);
    for (auto& v : x.values()) v = rng.uniform(-1.5, 1.5);
    const auto [y, cache] = wavkan_forward(layer, x);
    for (std::size_t b = 0; b < 2; ++b) {
      for (int q = 0; q < 3; ++q) {
        double expect = 0.0;
        for (int p = 0; p < 2; ++p) {
          const double u = (x(b, p) - layer.shift(q, p)) / layer.scale(q, p);
          expect += layer.weight(q, p) * (1.0 - u * u) * std::exp(-0.5 * u * u);
        }
        REQUIRE(y(b, q) == Catch::Approx(expect).margin(1e-12));
      }
    }
  }

  SECTION("all four gradient groups match finite differences") {
    WavKanLayer layer{3, 2, Matrix(2, 3), Matrix(2, 3), Matrix(2, 3)};
    for (auto& v : layer.weight.values()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : layer.scale.values()) v = rng.uniform(0.6, 1.8);
    for (auto& v : layer.shift.values()) v = rng.uniform(-0.8, 0.8);
    Matrix x(4, 3);
    for (auto& v : x.values()) v = rng.uniform(-1.5, 1.5);
    const double step = 1e-5;
    const auto loss = [&]() { return sq_loss(wavkan_forward(layer, x).first); };

    const auto [y, cache] = wavkan_forward(layer, x);
    const WavKanGrads grads = wavkan_backward(layer, cache, y);

    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      REQUIRE(rel_err(grads.d_weight.data()[i], fd_slot(layer.weight.data()[i], step, loss)) < 1e-4);
    }
    for (std::size_t i = 0; i < layer.scale.size(); ++i) {
      REQUIRE(rel_err(grads.d_scale.data()[i], fd_slot(layer.scale.data()[i], step, loss)) < 1e-4);
    }
    for (std::size_t i = 0; i < layer.shift.size(); ++i) {
      REQUIRE(rel_err(grads.d_shift.data()[i], fd_slot(layer.shift.data()[i], step, loss)) < 1e-4);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      REQUIRE(rel_err(grads.dx.data()[i], fd_slot(x.data()[i], step, loss)) < 1e-4);
    }
  }
}

TEST_CASE("edgespline layer", "[layers]") {
  Rng rng(67);

  auto make_layer = [&](int n_in, int n_out, int grid) {
    EdgeSplineKanLayer layer;
    layer.n_in = n_in;
    layer.n_out = n_out;
    layer.kv = build_uniform_knots(-1.0, 1.0, grid + 2 * 3 + 1, 3);
    layer.coeffs.resize(static_cast<std::size_t>(n_in) * n_out * layer.kv.basis_count());
    for (auto& c : layer.coeffs) c = rng.normal(0.0, 0.3);
    layer.base_weight = Matrix(n_out, n_in);
    for (auto& v : layer.base_weight.values()) v = rng.uniform(-1.0, 1.0);
    layer.spline_scale = Matrix(n_out, n_in);
    for (auto& v : layer.spline_scale.values()) v = rng.uniform(0.5, 1.5);
    return layer;
  };

  SECTION("zero base weights and zero scalers give zero output") {
    EdgeSplineKanLayer layer = make_layer(2, 3, 5);
    for (auto& v : layer.base_weight.values()) v = 0.0;
    for (auto& v : layer.spline_scale.values()) v = 0.0;
    Matrix x(3, 2);
    for (auto& v : x.values()) v = rng.uniform(-0.9, 0.9);
    const auto [y, cache] = edgespline_forward(layer, x);
    for (double v : y.values()) REQUIRE(v == 0.0);
  }

  SECTION("per-layer parameter inventory [2,5,5,1] at G=7 is 480") {
    std::size_t total = 0;
    const std::vector<int> widths = {2, 5, 5, 1};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      EdgeSplineKanLayer layer = make_layer(widths[l], widths[l + 1], 7);
      REQUIRE(layer.kv.basis_count() == 7 + 3);
      total += layer.coeffs.size() + layer.base_weight.size() + layer.spline_scale.size();
    }
    REQUIRE(total == 480);
  }

  SECTION("matches a naive full-recursion loop") {
    EdgeSplineKanLayer layer = make_layer(2, 3, 5);
    Matrix x(2, 2);
    for (auto& v : x.values()) v = rng.uniform(-0.9, 0.9);
    const auto [y, cache] = edgespline_forward(layer, x);
    for (std::size_t b = 0; b < 2; ++b) {
      for (int q = 0; q < 3; ++q) {
        double expect = 0.0;
        for (int p = 0; p < 2; ++p) {
          double spline_sum = 0.0;
          for (int j = 0; j < layer.kv.basis_count(); ++j) {
            spline_sum += layer.coeffs[layer.coeff_index(q, p, j)] *
                          bspline_recursive(layer.kv.knots, j, 3, x(b, p));
          }
          expect += layer.base_weight(q, p) * silu(x(b, p)) +
                    layer.spline_scale(q, p) * spline_sum;
        }
        REQUIRE(y(b, q) == Catch::Approx(expect).margin(1e-12));
      }
    }
  }

  SECTION("gradients match finite differences") {
    EdgeSplineKanLayer layer = make_layer(3, 2, 4);
    Matrix x(4, 3);
    // Keep inputs off the knots so input-gradient differences stay clean.
    for (auto& v : x.values()) {
      v = rng.uniform(-0.9, 0.9);
      for (double knot : layer.kv.knots) {
        if (std::abs(v - knot) < 5e-3) v += 0.01;
      }
    }
    const double step = 1e-5;
    const auto loss = [&]() { return sq_loss(edgespline_forward(layer, x).first); };

    const auto [y, cache] = edgespline_forward(layer, x);
    const EdgeSplineGrads grads = edgespline_backward(layer, cache, y);

    for (std::size_t i = 0; i < layer.coeffs.size(); ++i) {
      REQUIRE(rel_err(grads.d_coeffs[i], fd_slot(layer.coeffs[i], step, loss)) < 1e-4);
    }
    for (std::size_t i = 0; i < layer.base_weight.size(); ++i) {
      REQUIRE(rel_err(grads.d_base_weight.data()[i],
                      fd_slot(layer.base_weight.data()[i], step, loss)) < 1e-4);
    }
    for (std::size_t i = 0; i < layer.spline_scale.size(); ++i) {
      REQUIRE(rel_err(grads.d_spline_scale.data()[i],
                      fd_slot(layer.spline_scale.data()[i], step, loss)) < 1e-4);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      REQUIRE(rel_err(grads.dx.data()[i], fd_slot(x.data()[i], step, loss)) < 1e-4);
    }
  }
}
