#pragma once

#include "mgqe/embedding/layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>

namespace mgqe {

/// Per-dimension affine quantization of a learned table into 2^b buckets.
struct ScalarQuantizedTable {
  Index rows = 0;
  Index cols = 0;
  int bits = 8;
  std::vector<std::uint16_t> codes;  // rows x cols, row-major
  std::vector<float> min;
  std::vector<float> max;

  std::uint32_t levels() const { return (1u << bits) - 1u; }

  std::uint16_t code(Index i, Index j) const { return codes[i * cols + j]; }

  /// min_j + code * (max_j - min_j) / (2^b - 1), evaluated in double.
  double dequantize_code(std::uint32_t code, Index j) const {
    const double lo = min[j];
    const double hi = max[j];
    if (hi == lo) return lo;
    return lo + static_cast<double>(code) * (hi - lo) / static_cast<double>(levels());
  }

  double dequantize(Index i, Index j) const { return dequantize_code(code(i, j), j); }

  /// Worst-case reconstruction error for dimension j.
  double error_bound(Index j) const {
    return (static_cast<double>(max[j]) - static_cast<double>(min[j])) /
           (2.0 * static_cast<double>(levels()));
  }
};

template <typename Real>
ScalarQuantizedTable scalar_quantize_table(const Matrix<Real>& w, int bits) {
  require(bits >= 1 && bits <= 16, "scalar quantization bits must be in [1, 16]");
  ScalarQuantizedTable sq;
  sq.rows = w.rows();
  sq.cols = w.cols();
  sq.bits = bits;
  sq.codes.assign(static_cast<std::size_t>(w.size()), 0);
  sq.min.assign(w.cols(), 0.0f);
  sq.max.assign(w.cols(), 0.0f);
  const double levels = static_cast<double>(sq.levels());
  for (Index j = 0; j < w.cols(); ++j) {
    if (w.rows() == 0) continue;
    const auto col = w.col(j);
    // Stored as float32; round outward so the range still covers every value.
    const double cmin = static_cast<double>(col.minCoeff());
    const double cmax = static_cast<double>(col.maxCoeff());
    sq.min[j] = static_cast<float>(cmin);
    sq.max[j] = static_cast<float>(cmax);
    if (sq.min[j] > cmin) sq.min[j] = std::nextafter(sq.min[j], -HUGE_VALF);
    if (sq.max[j] < cmax) sq.max[j] = std::nextafter(sq.max[j], HUGE_VALF);
    const double lo = sq.min[j];
    const double hi = sq.max[j];
    if (hi == lo) continue;
    for (Index i = 0; i < w.rows(); ++i) {
      const double t = (static_cast<double>(w(i, j)) - lo) / (hi - lo) * levels;
      const double c = std::clamp(std::round(t), 0.0, levels);
      sq.codes[i * sq.cols + j] = static_cast<std::uint16_t>(c);
    }
  }
  return sq;
}

/// Scalar quantization baseline. Trains exactly like a full table; `freeze`
/// quantizes the learned table and discards the floats.
template <typename Real>
class ScalarQuantizedEmbedding : public EmbeddingLayer<Real> {
 public:
  ScalarQuantizedEmbedding(Index n, Index d, int bits, double init_std, Rng& rng)
      : full_(n, d, init_std, rng), bits_(bits), n_(n), d_(d) {
    require(bits >= 1 && bits <= 16, "scalar quantization bits must be in [1, 16]");
  }
  explicit ScalarQuantizedEmbedding(ScalarQuantizedTable table)
      : full_(0, 0), bits_(table.bits), n_(table.rows), d_(table.cols), sq_(std::move(table)) {}

  SchemeKind kind() const override { return SchemeKind::ScalarQuantized; }
  Index vocab_size() const override { return n_; }
  Index dim() const override { return d_; }
  int bits() const { return bits_; }
  bool frozen() const override { return sq_.has_value(); }
  const ScalarQuantizedTable& table() const { return *sq_; }

  Matrix<Real> forward(std::span<const Index> ids, LookupContext<Real>& ctx) const override {
    if (!sq_) return full_.forward(ids, ctx);
    this->check_ids(ids);
    Matrix<Real> out(static_cast<Index>(ids.size()), d_);
    for (std::size_t b = 0; b < ids.size(); ++b)
      for (Index j = 0; j < d_; ++j) out(b, j) = static_cast<Real>(sq_->dequantize(ids[b], j));
    ctx.ids.assign(ids.begin(), ids.end());
    ctx.training = false;
    return out;
  }

  void backward(const LookupContext<Real>& ctx, const Matrix<Real>& upstream) override {
    this->check_training(ctx);
    full_.backward(ctx, upstream);
  }

  void freeze() override {
    if (sq_) return;
    sq_ = scalar_quantize_table(full_.table(), bits_);
    full_ = FullEmbedding<Real>(0, 0);
  }

  void parameters(ParameterList<Real>& out) override {
    if (!sq_) full_.parameters(out);
  }

  EmbeddingBits size_bits() const override {
    EmbeddingBits bits;
    bits.code_bits_exact = static_cast<double>(n_) * d_ * bits_;
    bits.code_bits_packed = static_cast<std::uint64_t>(n_) * d_ * bits_;
    bits.overhead_bits = 64ull * d_;
    return bits;
  }

  std::unique_ptr<EmbeddingLayer<Real>> clone() const override {
    return std::make_unique<ScalarQuantizedEmbedding>(*this);
  }

 private:
  FullEmbedding<Real> full_;
  int bits_;
  Index n_;
  Index d_;
  std::optional<ScalarQuantizedTable> sq_;
};

}  // namespace mgqe
