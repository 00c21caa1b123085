#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gskan/matrix.hpp"

namespace gskan {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One Adam step with bias correction, in place. Non-finite gradients abort
// the step: silently skipping them would mask layer bugs.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const AdamHyper& hyper) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state length mismatch");
  }
  if (hyper.lr <= 0.0 || hyper.eps_hat <= 0.0 || hyper.beta1 <= 0.0 || hyper.beta1 >= 1.0 ||
      hyper.beta2 <= 0.0 || hyper.beta2 >= 1.0) {
    throw std::invalid_argument("adam_step: invalid hyperparameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::runtime_error("adam_step: non-finite gradient at slot " + std::to_string(i));
    }
  }
  state.t += 1;
  const double corr1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = state.m[i] / corr1;
    const double v_hat = state.v[i] / corr2;
    params[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps_hat);
  }
}

// Mean squared error over all entries, with its gradient.
inline std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse_loss");
  const double count = static_cast<double>(pred.size());
  double loss = 0.0;
  Matrix d_pred(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred.data()[i] - target.data()[i];
    loss += diff * diff;
    d_pred.data()[i] = 2.0 * diff / count;
  }
  return {loss / count, std::move(d_pred)};
}

// Mean negative log-softmax of the true class, stabilized by max-subtraction.
// dLogits = (softmax - onehot) / batch.
inline std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                       std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label count must equal batch size");
  }
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  double loss = 0.0;
  Matrix d_logits(batch, classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                  " out of range at row " + std::to_string(b));
    }
    double max_logit = logits(b, 0);
    for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, logits(b, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits(b, c) - max_logit);
    const double log_denom = std::log(denom);
    loss += log_denom - (logits(b, label) - max_logit);
    for (std::size_t c = 0; c < classes; ++c) {
      const double softmax = std::exp(logits(b, c) - max_logit) / denom;
      d_logits(b, c) = (softmax - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) /
                       static_cast<double>(batch);
    }
  }
  return {loss / static_cast<double>(batch), std::move(d_logits)};
}

// Fraction of rows whose argmax equals the label; ties break to the lowest
// index.
inline double accuracy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw std::invalid_argument("accuracy: label count must equal batch size");
  }
  if (logits.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(b, c) > logits(b, best)) best = c;
    }
    if (static_cast<std::size_t>(labels[b]) == best) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace gskan
