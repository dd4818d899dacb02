#pragma once

#include "mgqe/embedding/codebook.hpp"
#include "mgqe/embedding/layer.hpp"

#include <cmath>
#include <unordered_map>
#include <vector>

namespace mgqe {

/// Differentiable product quantization (vector-quantization variant).
///
/// Training keeps a raw table E; every lookup re-encodes the looked-up rows
/// against the codebooks and returns the concatenated nearest centroids. The
/// backward pass is straight-through: dL/de is the upstream gradient. Centroids
/// only learn through the auxiliary VQ loss (`backward_quantization`).
/// `freeze` caches the codes of every row and discards E.
template <typename Real>
class DpqEmbedding : public EmbeddingLayer<Real> {
 public:
  DpqEmbedding(Index n, Index d, Index num_subspaces, Index num_centroids)
      : raw_("raw", n, d, true), cb_(d, num_subspaces, num_centroids), n_(n) {}

  /// E ~ N(0, init_std^2); centroids sampled from the initial rows plus noise.
  DpqEmbedding(Index n, Index d, Index num_subspaces, Index num_centroids, double init_std,
               Rng& rng, double centroid_noise = -1)
      : DpqEmbedding(n, d, num_subspaces, num_centroids) {
    fill_normal(raw_.value, init_std, rng);
    cb_.init_from_rows(raw_.value, 0, n, centroid_noise < 0 ? 0.1 * init_std : centroid_noise,
                       rng);
    build_index();
  }

  /// Serving-mode layer from stored codes (n x D, row-major).
  DpqEmbedding(CodebookSet<Real> codebook, std::vector<Code> codes, Index n)
      : cb_(std::move(codebook)), n_(n), codes_(std::move(codes)), frozen_(true) {
    require(static_cast<Index>(codes_.size()) == n * cb_.num_subspaces(), "code table size mismatch");
    for (Code c : codes_) require(c >= 0 && c < cb_.num_centroids(), "code out of range");
  }

  DpqEmbedding(const DpqEmbedding& o)
      : raw_(o.raw_), cb_(o.cb_), n_(o.n_), codes_(o.codes_), frozen_(o.frozen_) {
    build_index();
  }
  DpqEmbedding& operator=(const DpqEmbedding&) = delete;

  SchemeKind kind() const override { return SchemeKind::Dpq; }
  Index vocab_size() const override { return n_; }
  Index dim() const override { return cb_.dim(); }
  bool frozen() const override { return frozen_; }
  bool quantized_training() const override { return !frozen_; }

  const CodebookSet<Real>& codebook() const { return cb_; }
  CodebookSet<Real>& codebook() { return cb_; }
  const Matrix<Real>& raw() const { return raw_.value; }
  const Parameter<Real>& raw_parameter() const { return raw_; }
  Matrix<Real>& raw() { return raw_.value; }
  /// Frozen codes, n x D row-major.
  const std::vector<Code>& codes() const { return codes_; }

  /// Encodes one raw vector with the current codebooks.
  void encode(std::span<const Real> e, std::span<Code> out) const {
    const Index nsub = cb_.num_subspaces();
    const Index k = cb_.num_centroids();
    if (!index_.empty()) {
      for (Index s = 0; s < nsub; ++s) out[s] = index_.nearest(cb_, e[s], s, k);
    } else {
      quantize<Real>(e, cb_, k, out);
    }
  }

  /// `encode` seeded with the codes this row received last time.
  void encode_row(Index id, std::span<const Real> e, std::span<Code> out) const {
    const Index nsub = cb_.num_subspaces();
    if (index_.empty()) {
      encode(e, out);
      return;
    }
    if (hints_.empty()) hints_.assign(n_ * nsub, -1);
    Code* hint = hints_.data() + id * nsub;
    for (Index s = 0; s < nsub; ++s) hint[s] = out[s] = index_.nearest(cb_, e[s], s, cb_.num_centroids(), hint[s]);
  }

  Matrix<Real> forward(std::span<const Index> ids, LookupContext<Real>& ctx) const override {
    this->check_ids(ids);
    const Index batch = static_cast<Index>(ids.size());
    const Index nsub = cb_.num_subspaces();
    Matrix<Real> out(batch, dim());
    ctx.ids.assign(ids.begin(), ids.end());
    ctx.code_stride = nsub;
    ctx.codes.resize(batch * nsub);
    ctx.training = !frozen_;
    if (frozen_) {
      for (Index b = 0; b < batch; ++b) {
        std::copy_n(codes_.begin() + ids[b] * nsub, nsub, ctx.codes.begin() + b * nsub);
        cb_.decode({ctx.codes.data() + b * nsub, static_cast<std::size_t>(nsub)},
                   {out.data() + b * dim(), static_cast<std::size_t>(dim())});
      }
      return out;
    }
    ctx.raw.resize(batch, dim());
    std::unordered_map<Index, Index> seen;  // repeated ids share one encoding
    seen.reserve(batch);
    for (Index b = 0; b < batch; ++b) {
      ctx.raw.row(b) = raw_.value.row(ids[b]);
      const auto [it, fresh] = seen.try_emplace(ids[b], b);
      if (!fresh) {
        std::copy_n(ctx.codes.begin() + it->second * nsub, nsub, ctx.codes.begin() + b * nsub);
        out.row(b) = out.row(it->second);
        continue;
      }
      std::span<Code> codes{ctx.codes.data() + b * nsub, static_cast<std::size_t>(nsub)};
      encode_row(ids[b], {ctx.raw.data() + b * dim(), static_cast<std::size_t>(dim())}, codes);
      cb_.decode(codes, {out.data() + b * dim(), static_cast<std::size_t>(dim())});
    }
    ctx.output = out;
    return out;
  }

  void backward(const LookupContext<Real>& ctx, const Matrix<Real>& upstream) override {
    this->check_training(ctx);
    for (std::size_t b = 0; b < ctx.ids.size(); ++b) {
      raw_.grad.row(ctx.ids[b]) += upstream.row(b);
      raw_.touch(ctx.ids[b]);
    }
  }

  void backward_quantization(const LookupContext<Real>& ctx, const Matrix<Real>& grad_raw,
                             const Matrix<Real>& grad_q) override {
    this->check_training(ctx);
    const Index nsub = cb_.num_subspaces();
    const Index sd = cb_.sub_dim();
    for (std::size_t b = 0; b < ctx.ids.size(); ++b) {
      raw_.grad.row(ctx.ids[b]) += grad_raw.row(b);
      raw_.touch(ctx.ids[b]);
      for (Index s = 0; s < nsub; ++s) {
        Real* g = cb_.centroid_grad(s, ctx.codes[b * nsub + s]);
        for (Index j = 0; j < sd; ++j) g[j] += grad_q(b, s * sd + j);
      }
    }
  }

  void freeze() override {
    if (frozen_) return;
    const Index nsub = cb_.num_subspaces();
    codes_.assign(n_ * nsub, 0);
    for (Index i = 0; i < n_; ++i)
      encode({raw_.value.data() + i * dim(), static_cast<std::size_t>(dim())},
             {codes_.data() + i * nsub, static_cast<std::size_t>(nsub)});
    raw_.release();
    hints_.clear();
    cb_.parameter().grad.resize(0, 0);
    frozen_ = true;
  }

  void parameters(ParameterList<Real>& out) override {
    if (frozen_) return;
    out.push_back(&raw_);
    out.push_back(&cb_.parameter());
  }

  void after_update() override {
    if (!index_.empty()) index_.refresh(cb_);
  }

  EmbeddingBits size_bits() const override {
    EmbeddingBits bits;
    const Index k = cb_.num_centroids();
    bits.code_bits_exact = static_cast<double>(n_) * cb_.num_subspaces() * std::log2(static_cast<double>(k));
    bits.code_bits_packed = static_cast<std::uint64_t>(n_) * cb_.num_subspaces() * bits_for(k);
    bits.codebook_bits = cb_.size_bits();
    return bits;
  }

  std::unique_ptr<EmbeddingLayer<Real>> clone() const override {
    return std::make_unique<DpqEmbedding>(*this);
  }

 private:
  void build_index() {
    if (!frozen_ && cb_.sub_dim() == 1) index_ = ScalarCentroidIndex<Real>(cb_, {cb_.num_centroids()});
  }

  Parameter<Real> raw_;
  CodebookSet<Real> cb_;
  Index n_ = 0;
  std::vector<Code> codes_;
  bool frozen_ = false;
  ScalarCentroidIndex<Real> index_;
  mutable std::vector<Code> hints_;
};

}  // namespace mgqe
