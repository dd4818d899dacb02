#pragma once

#include "mgqe/common.hpp"
#include "mgqe/embedding/layer.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace mgqe {

template <typename Real>
struct LossResult {
  double loss = 0;
  std::vector<Real> grad;  // d(loss)/d(input)
};

/// Mean binary cross-entropy computed from logits, with the stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)).
template <typename Real>
LossResult<Real> bce_loss(std::span<const Real> logits, std::span<const Real> labels) {
  require(logits.size() == labels.size(), "bce_loss: logits and labels differ in length");
  LossResult<Real> r;
  r.grad.resize(logits.size());
  if (logits.empty()) return r;
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = labels[i];
    r.loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.grad[i] = static_cast<Real>((sig - y) * inv);
  }
  r.loss *= inv;
  return r;
}

/// Mean squared error and its gradient.
template <typename Real>
LossResult<Real> squared_loss(std::span<const Real> preds, std::span<const Real> targets) {
  require(preds.size() == targets.size(), "squared_loss: predictions and targets differ in length");
  LossResult<Real> r;
  r.grad.resize(preds.size());
  if (preds.empty()) return r;
  const double inv = 1.0 / static_cast<double>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = static_cast<double>(preds[i]) - static_cast<double>(targets[i]);
    r.loss += diff * diff;
    r.grad[i] = static_cast<Real>(2.0 * diff * inv);
  }
  r.loss *= inv;
  return r;
}

template <typename Real>
struct VqLossResult {
  double loss = 0;
  Matrix<Real> grad_raw;  // flows into the raw embeddings e
  Matrix<Real> grad_q;    // flows into the selected centroids
};

/// Auxiliary quantization loss
///   mean ||sg(e) - q||^2 + beta * mean ||e - sg(q)||^2
/// (means over batch rows). The first term moves centroids towards the raw
/// vectors assigned to them, the second commits raw vectors to their centroids.
template <typename Real>
VqLossResult<Real> vq_loss(const Matrix<Real>& raw, const Matrix<Real>& quantized, double beta) {
  require(raw.rows() == quantized.rows() && raw.cols() == quantized.cols(),
          "vq_loss: shape mismatch");
  VqLossResult<Real> r;
  const Index batch = raw.rows();
  r.grad_raw = Matrix<Real>::Zero(batch, raw.cols());
  r.grad_q = Matrix<Real>::Zero(batch, raw.cols());
  if (batch == 0) return r;
  const double inv = 1.0 / static_cast<double>(batch);
  double sq = 0;
  for (Index b = 0; b < batch; ++b) {
    for (Index j = 0; j < raw.cols(); ++j) {
      const double diff = static_cast<double>(raw(b, j)) - static_cast<double>(quantized(b, j));
      sq += diff * diff;
      r.grad_q(b, j) = static_cast<Real>(-2.0 * diff * inv);
      r.grad_raw(b, j) = static_cast<Real>(2.0 * beta * diff * inv);
    }
  }
  r.loss = (1.0 + beta) * sq * inv;
  return r;
}

/// Applies the VQ loss to one training-mode lookup of a quantized layer and
/// returns the loss value (0 for layers that do not quantize during training).
template <typename Real>
double apply_vq_loss(EmbeddingLayer<Real>& layer, const LookupContext<Real>& ctx, double beta) {
  if (!layer.quantized_training() || !ctx.training || ctx.ids.empty()) return 0.0;
  VqLossResult<Real> r = vq_loss(ctx.raw, ctx.output, beta);
  layer.backward_quantization(ctx, r.grad_raw, r.grad_q);
  return r.loss;
}

}  // namespace mgqe
