#pragma once

#include "mgqe/common.hpp"
#include "mgqe/embedding/codebook.hpp"
#include "mgqe/parameter.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mgqe {

using Rng = std::mt19937_64;

enum class SchemeKind { Full = 0, LowRank = 1, ScalarQuantized = 2, Dpq = 3, Mgqe = 4 };

enum class MgqeVariant { SharedVarK = 0, UnsharedVarK = 1, UnsharedVarD = 2 };

inline std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Full: return "full";
    case SchemeKind::LowRank: return "lrf";
    case SchemeKind::ScalarQuantized: return "sq";
    case SchemeKind::Dpq: return "dpq";
    case SchemeKind::Mgqe: return "mgqe";
  }
  return "?";
}

inline std::string_view to_string(MgqeVariant v) {
  switch (v) {
    case MgqeVariant::SharedVarK: return "shared-vark";
    case MgqeVariant::UnsharedVarK: return "unshared-vark";
    case MgqeVariant::UnsharedVarD: return "unshared-vard";
  }
  return "?";
}

inline SchemeKind parse_scheme(std::string_view s) {
  if (s == "full" || s == "fe") return SchemeKind::Full;
  if (s == "lrf" || s == "lowrank") return SchemeKind::LowRank;
  if (s == "sq") return SchemeKind::ScalarQuantized;
  if (s == "dpq") return SchemeKind::Dpq;
  if (s == "mgqe") return SchemeKind::Mgqe;
  throw DataError("unknown embedding scheme '" + std::string(s) + "'");
}

inline MgqeVariant parse_variant(std::string_view s) {
  if (s == "shared-vark") return MgqeVariant::SharedVarK;
  if (s == "unshared-vark") return MgqeVariant::UnsharedVarK;
  if (s == "unshared-vard") return MgqeVariant::UnsharedVarD;
  throw DataError("unknown MGQE variant '" + std::string(s) + "'");
}

/// Serving-size breakdown of one embedding table, in bits.
struct EmbeddingBits {
  std::uint64_t table_bits = 0;       // float tables (Full, LowRank)
  double code_bits_exact = 0;         // sum |V_i| D_i log2 K_i (or n d b for SQ)
  std::uint64_t code_bits_packed = 0; // with ceil(log2 K_i)-bit fields
  std::uint64_t codebook_bits = 0;    // 32 K d per codebook
  std::uint64_t overhead_bits = 0;    // SQ per-dimension min/max

  double total_exact() const {
    return static_cast<double>(table_bits + codebook_bits + overhead_bits) + code_bits_exact;
  }
  std::uint64_t total_packed() const {
    return table_bits + codebook_bits + overhead_bits + code_bits_packed;
  }
};

/// State saved by a training-mode lookup for the backward pass.
template <typename Real>
struct LookupContext {
  std::vector<Index> ids;
  Matrix<Real> output;  // B x d rows handed to the model
  Matrix<Real> raw;     // quantized schemes: pre-quantization e rows
  Matrix<Real> aux;     // low-rank: gathered rows of P
  std::vector<Code> codes;  // B x code_stride, row-major
  Index code_stride = 0;
  std::vector<int> tier;    // MGQE tier of every row
  bool training = false;
};

/// Uniform lookup contract shared by every embedding scheme.
template <typename Real>
class EmbeddingLayer {
 public:
  virtual ~EmbeddingLayer() = default;

  virtual SchemeKind kind() const = 0;
  virtual Index vocab_size() const = 0;
  virtual Index dim() const = 0;
  virtual bool frozen() const = 0;

  /// Lookup that records a context for `backward`. On a frozen layer the
  /// context is marked as serving-mode and cannot be back-propagated.
  virtual Matrix<Real> forward(std::span<const Index> ids, LookupContext<Real>& ctx) const = 0;

  /// Lookup without context; safe for concurrent use once frozen.
  virtual Matrix<Real> lookup(std::span<const Index> ids) const {
    LookupContext<Real> ctx;
    return forward(ids, ctx);
  }

  /// Accumulates parameter gradients given dL/d(output).
  virtual void backward(const LookupContext<Real>& ctx, const Matrix<Real>& upstream) = 0;

  /// True when training lookups quantize and need the auxiliary VQ loss.
  virtual bool quantized_training() const { return false; }

  /// Routes auxiliary-loss gradients: `grad_raw` onto the raw rows, `grad_q`
  /// onto the centroids selected by the context's codes.
  virtual void backward_quantization(const LookupContext<Real>&, const Matrix<Real>&,
                                     const Matrix<Real>&) {}

  virtual void freeze() = 0;
  virtual void parameters(ParameterList<Real>& out) = 0;
  /// Called after every optimizer step.
  virtual void after_update() {}
  virtual EmbeddingBits size_bits() const = 0;
  virtual std::unique_ptr<EmbeddingLayer> clone() const = 0;

 protected:
  void check_ids(std::span<const Index> ids) const {
    for (Index id : ids)
      if (id < 0 || id >= vocab_size())
        throw DataError("embedding id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(vocab_size()) + ")");
  }
  static void check_training(const LookupContext<Real>& ctx) {
    if (!ctx.training) throw StateError("backward called with a serving-mode lookup context");
  }
};

template <typename Real>
void fill_normal(Matrix<Real>& m, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng));
}

/// One-hot encoding: a learned n x d table.
template <typename Real>
class FullEmbedding : public EmbeddingLayer<Real> {
 public:
  FullEmbedding(Index n, Index d) : table_("table", n, d, true) {}
  FullEmbedding(Index n, Index d, double init_std, Rng& rng) : FullEmbedding(n, d) {
    fill_normal(table_.value, init_std, rng);
  }
  explicit FullEmbedding(Matrix<Real> table, bool frozen = false) : FullEmbedding(0, 0) {
    table_.value = std::move(table);
    table_.grad = Matrix<Real>::Zero(table_.value.rows(), table_.value.cols());
    frozen_ = frozen;
  }

  SchemeKind kind() const override { return SchemeKind::Full; }
  Index vocab_size() const override { return table_.rows(); }
  Index dim() const override { return table_.cols(); }
  bool frozen() const override { return frozen_; }

  const Matrix<Real>& table() const { return table_.value; }
  Matrix<Real>& table() { return table_.value; }

  Matrix<Real> forward(std::span<const Index> ids, LookupContext<Real>& ctx) const override {
    this->check_ids(ids);
    Matrix<Real> out(static_cast<Index>(ids.size()), dim());
    for (std::size_t b = 0; b < ids.size(); ++b) out.row(b) = table_.value.row(ids[b]);
    ctx.ids.assign(ids.begin(), ids.end());
    ctx.training = !frozen_;
    return out;
  }

  void backward(const LookupContext<Real>& ctx, const Matrix<Real>& upstream) override {
    this->check_training(ctx);
    for (std::size_t b = 0; b < ctx.ids.size(); ++b) {
      table_.grad.row(ctx.ids[b]) += upstream.row(b);
      table_.touch(ctx.ids[b]);
    }
  }

  void freeze() override { frozen_ = true; }
  void parameters(ParameterList<Real>& out) override { out.push_back(&table_); }

  EmbeddingBits size_bits() const override {
    EmbeddingBits bits;
    bits.table_bits = 32ull * vocab_size() * dim();
    return bits;
  }

  std::unique_ptr<EmbeddingLayer<Real>> clone() const override {
    return std::make_unique<FullEmbedding>(*this);
  }

 private:
  Parameter<Real> table_;
  bool frozen_ = false;
};

/// W = P Q with P: n x r and Q: r x d.
template <typename Real>
class LowRankEmbedding : public EmbeddingLayer<Real> {
 public:
  LowRankEmbedding(Index n, Index d, Index rank)
      : p_("P", n, rank, true), q_("Q", rank, d) {
    require(rank >= 1, "low-rank embedding needs rank >= 1");
  }
  /// P ~ N(0, init_std^2); Q ~ N(0, 1/r) so that rows of PQ start with the
  /// same spread as a full table initialised with init_std.
  LowRankEmbedding(Index n, Index d, Index rank, double init_std, Rng& rng)
      : LowRankEmbedding(n, d, rank) {
    fill_normal(p_.value, init_std, rng);
    fill_normal(q_.value, 1.0 / std::sqrt(static_cast<double>(rank)), rng);
  }
  LowRankEmbedding(Matrix<Real> p, Matrix<Real> q, bool frozen = false)
      : LowRankEmbedding(p.rows(), q.cols(), p.cols()) {
    require(p.cols() == q.rows(), "low-rank factors have mismatched rank");
    p_.value = std::move(p);
    q_.value = std::move(q);
    frozen_ = frozen;
  }

  SchemeKind kind() const override { return SchemeKind::LowRank; }
  Index vocab_size() const override { return p_.rows(); }
  Index dim() const override { return q_.cols(); }
  Index rank() const { return p_.cols(); }
  bool frozen() const override { return frozen_; }

  Matrix<Real>& p() { return p_.value; }
  Matrix<Real>& q() { return q_.value; }
  const Matrix<Real>& p() const { return p_.value; }
  const Matrix<Real>& q() const { return q_.value; }

  Matrix<Real> forward(std::span<const Index> ids, LookupContext<Real>& ctx) const override {
    this->check_ids(ids);
    Matrix<Real> rows(static_cast<Index>(ids.size()), rank());
    for (std::size_t b = 0; b < ids.size(); ++b) rows.row(b) = p_.value.row(ids[b]);
    Matrix<Real> out = rows * q_.value;
    ctx.ids.assign(ids.begin(), ids.end());
    ctx.aux = std::move(rows);
    ctx.training = !frozen_;
    return out;
  }

  void backward(const LookupContext<Real>& ctx, const Matrix<Real>& upstream) override {
    this->check_training(ctx);
    const Matrix<Real> grad_rows = upstream * q_.value.transpose();
    for (std::size_t b = 0; b < ctx.ids.size(); ++b) {
      p_.grad.row(ctx.ids[b]) += grad_rows.row(b);
      p_.touch(ctx.ids[b]);
    }
    q_.grad.noalias() += ctx.aux.transpose() * upstream;
  }

  void freeze() override { frozen_ = true; }
  void parameters(ParameterList<Real>& out) override {
    out.push_back(&p_);
    out.push_back(&q_);
  }

  EmbeddingBits size_bits() const override {
    EmbeddingBits bits;
    bits.table_bits = 32ull * vocab_size() * rank() + 32ull * rank() * dim();
    return bits;
  }

  std::unique_ptr<EmbeddingLayer<Real>> clone() const override {
    return std::make_unique<LowRankEmbedding>(*this);
  }

 private:
  Parameter<Real> p_;
  Parameter<Real> q_;
  bool frozen_ = false;
};

}  // namespace mgqe
