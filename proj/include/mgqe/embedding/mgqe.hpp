#pragma once

#include "mgqe/embedding/codebook.hpp"
#include "mgqe/embedding/layer.hpp"
#include "mgqe/embedding/partition.hpp"

#include <cmath>
#include <unordered_map>
#include <vector>

namespace mgqe {

/// Multi-granular quantized embeddings.
///
/// Items are split into frequency tiers; tier i is encoded with K_i centroids
/// and D_i subspaces. In the shared variant all tiers address one codebook and
/// tier i may only use its first K_i centroids. Batches are looked up group by
/// group: one batched quantization per tier, then rows are put back in input
/// order.
template <typename Real>
class MgqeEmbedding : public EmbeddingLayer<Real> {
 public:
  MgqeEmbedding(Index n, Index d, TierPartition partition, double init_std, Rng& rng,
                double centroid_noise = -1)
      : raw_("raw", n, d, true), part_(std::move(partition)), d_(d) {
    part_.validate(n, d);
    fill_normal(raw_.value, init_std, rng);
    const double noise = centroid_noise < 0 ? 0.1 * init_std : centroid_noise;
    if (part_.shared()) {
      codebooks_.emplace_back(d, part_.D[0], part_.K[0]);
      codebooks_[0].init_from_rows(raw_.value, 0, n, noise, rng);
    } else {
      for (Index t = 0; t < part_.num_tiers(); ++t) {
        codebooks_.emplace_back(d, part_.D[t], part_.K[t], "codebook" + std::to_string(t));
        const bool empty = part_.tier_size(t) == 0;
        codebooks_[t].init_from_rows(raw_.value, empty ? 0 : part_.begin(t),
                                     empty ? n : part_.end(t), noise, rng);
      }
    }
    compute_offsets();
    build_indexes();
  }

  /// Serving-mode layer from stored codes laid out tier by tier, item-major.
  MgqeEmbedding(Index d, TierPartition partition, std::vector<CodebookSet<Real>> codebooks,
                std::vector<Code> codes)
      : part_(std::move(partition)), codebooks_(std::move(codebooks)), d_(d),
        codes_(std::move(codes)), frozen_(true) {
    part_.validate(part_.vocab_size(), d);
    require(static_cast<Index>(codebooks_.size()) == (part_.shared() ? 1 : part_.num_tiers()),
            "wrong number of codebooks for variant");
    compute_offsets();
    require(static_cast<Index>(codes_.size()) == total_codes_, "code table size mismatch");
    for (Index t = 0; t < part_.num_tiers(); ++t)
      for (Index i = part_.begin(t); i < part_.end(t); ++i)
        for (Index s = 0; s < part_.D[t]; ++s) {
          const Code c = codes_[code_offset(i, t) + s];
          require(c >= 0 && c < part_.K[t], "stored code exceeds its tier's centroid count");
        }
  }

  MgqeEmbedding(const MgqeEmbedding& o)
      : raw_(o.raw_), part_(o.part_), codebooks_(o.codebooks_), d_(o.d_), codes_(o.codes_),
        tier_offset_(o.tier_offset_), total_codes_(o.total_codes_), frozen_(o.frozen_) {
    build_indexes();
  }
  MgqeEmbedding& operator=(const MgqeEmbedding&) = delete;

  SchemeKind kind() const override { return SchemeKind::Mgqe; }
  Index vocab_size() const override { return part_.vocab_size(); }
  Index dim() const override { return d_; }
  bool frozen() const override { return frozen_; }
  bool quantized_training() const override { return !frozen_; }

  const TierPartition& partition() const { return part_; }
  Index codebook_of(Index tier) const { return part_.shared() ? 0 : tier; }
  const CodebookSet<Real>& codebook(Index i) const { return codebooks_[i]; }
  CodebookSet<Real>& codebook(Index i) { return codebooks_[i]; }
  Index num_codebooks() const { return static_cast<Index>(codebooks_.size()); }
  const Matrix<Real>& raw() const { return raw_.value; }
  Matrix<Real>& raw() { return raw_.value; }
  /// Frozen codes, tier by tier, item-major within a tier.
  const std::vector<Code>& codes() const { return codes_; }
  std::span<const Code> item_codes(Index id) const {
    const Index t = part_.tier_of(id);
    return {codes_.data() + code_offset(id, t), static_cast<std::size_t>(part_.D[t])};
  }

  /// Encodes one raw vector as a member of `tier`: nearest centroid among the
  /// first K_tier of that tier's codebook.
  void encode(std::span<const Real> e, Index tier, std::span<Code> out) const {
    const Index cbi = codebook_of(tier);
    const CodebookSet<Real>& cb = codebooks_[cbi];
    const Index limit = part_.K[tier];
    if (!indexes_[cbi].empty()) {
      for (Index s = 0; s < cb.num_subspaces(); ++s) out[s] = indexes_[cbi].nearest(cb, e[s], s, limit);
    } else {
      quantize<Real>(e, cb, limit, out);
    }
  }

  /// `encode` seeded with the codes this row received last time.
  void encode_row(Index id, std::span<const Real> e, Index tier, std::span<Code> out) const {
    const Index cbi = codebook_of(tier);
    if (indexes_[cbi].empty()) {
      encode(e, tier, out);
      return;
    }
    if (hints_.empty()) hints_.assign(total_codes_, -1);
    const CodebookSet<Real>& cb = codebooks_[cbi];
    const Index limit = part_.K[tier];
    Code* hint = hints_.data() + code_offset(id, tier);
    for (Index s = 0; s < cb.num_subspaces(); ++s)
      hint[s] = out[s] = indexes_[cbi].nearest(cb, e[s], s, limit, hint[s]);
  }

  Matrix<Real> forward(std::span<const Index> ids, LookupContext<Real>& ctx) const override {
    this->check_ids(ids);
    const Index batch = static_cast<Index>(ids.size());
    const Index m = part_.num_tiers();
    const Index stride = *std::max_element(part_.D.begin(), part_.D.end());

    // Split the batch into groups by tier, remembering each row's position.
    std::vector<std::vector<Index>> groups(m);
    for (Index b = 0; b < batch; ++b) groups[part_.tier_of(ids[b])].push_back(b);

    Matrix<Real> stacked(batch, d_);
    Matrix<Real> stacked_raw(frozen_ ? 0 : batch, d_);
    std::vector<Code> stacked_codes(batch * stride, -1);
    std::vector<Index> order;
    order.reserve(batch);
    Index row = 0;
    for (Index t = 0; t < m; ++t) {
      if (groups[t].empty()) continue;
      lookup_group(t, ids, groups[t], stacked, stacked_raw, stacked_codes, stride, row);
      order.insert(order.end(), groups[t].begin(), groups[t].end());
      row += static_cast<Index>(groups[t].size());
    }

    // Reorder so that row b corresponds to ids[b].
    Matrix<Real> out(batch, d_);
    ctx.ids.assign(ids.begin(), ids.end());
    ctx.code_stride = stride;
    ctx.codes.assign(batch * stride, -1);
    ctx.tier.assign(batch, 0);
    ctx.training = !frozen_;
    if (!frozen_) ctx.raw.resize(batch, d_);
    for (Index r = 0; r < batch; ++r) {
      const Index b = order[r];
      out.row(b) = stacked.row(r);
      if (!frozen_) ctx.raw.row(b) = stacked_raw.row(r);
      std::copy_n(stacked_codes.begin() + r * stride, stride, ctx.codes.begin() + b * stride);
      ctx.tier[b] = static_cast<int>(part_.tier_of(ids[b]));
    }
    if (!frozen_) ctx.output = out;
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
    for (std::size_t b = 0; b < ctx.ids.size(); ++b) {
      raw_.grad.row(ctx.ids[b]) += grad_raw.row(b);
      raw_.touch(ctx.ids[b]);
      const Index t = ctx.tier[b];
      CodebookSet<Real>& cb = codebooks_[codebook_of(t)];
      const Index sd = cb.sub_dim();
      for (Index s = 0; s < cb.num_subspaces(); ++s) {
        Real* g = cb.centroid_grad(s, ctx.codes[b * ctx.code_stride + s]);
        for (Index j = 0; j < sd; ++j) g[j] += grad_q(b, s * sd + j);
      }
    }
  }

  void freeze() override {
    if (frozen_) return;
    codes_.assign(total_codes_, 0);
    for (Index t = 0; t < part_.num_tiers(); ++t)
      for (Index i = part_.begin(t); i < part_.end(t); ++i)
        encode({raw_.value.data() + i * d_, static_cast<std::size_t>(d_)}, t,
               {codes_.data() + code_offset(i, t), static_cast<std::size_t>(part_.D[t])});
    raw_.release();
    hints_.clear();
    for (auto& cb : codebooks_) cb.parameter().grad.resize(0, 0);
    indexes_.assign(codebooks_.size(), {});
    frozen_ = true;
  }

  void parameters(ParameterList<Real>& out) override {
    if (frozen_) return;
    out.push_back(&raw_);
    for (auto& cb : codebooks_) out.push_back(&cb.parameter());
  }

  void after_update() override {
    for (std::size_t i = 0; i < codebooks_.size(); ++i)
      if (!indexes_[i].empty()) indexes_[i].refresh(codebooks_[i]);
  }

  EmbeddingBits size_bits() const override {
    EmbeddingBits bits;
    for (Index t = 0; t < part_.num_tiers(); ++t) {
      const double items = static_cast<double>(part_.tier_size(t));
      bits.code_bits_exact += items * part_.D[t] * std::log2(static_cast<double>(part_.K[t]));
      bits.code_bits_packed +=
          static_cast<std::uint64_t>(part_.tier_size(t)) * part_.D[t] * bits_for(part_.K[t]);
    }
    for (const auto& cb : codebooks_) bits.codebook_bits += cb.size_bits();
    return bits;
  }

  std::unique_ptr<EmbeddingLayer<Real>> clone() const override {
    return std::make_unique<MgqeEmbedding>(*this);
  }

 private:
  /// One batched lookup for all rows of `group` (positions into ids), all in tier t.
  void lookup_group(Index t, std::span<const Index> ids, const std::vector<Index>& group,
                    Matrix<Real>& out, Matrix<Real>& out_raw, std::vector<Code>& out_codes,
                    Index stride, Index first_row) const {
    const Index cbi = codebook_of(t);
    const CodebookSet<Real>& cb = codebooks_[cbi];
    const Index nsub = part_.D[t];
    const Index g = static_cast<Index>(group.size());
    if (frozen_) {
      for (Index r = 0; r < g; ++r) {
        const Index id = ids[group[r]];
        Code* codes = out_codes.data() + (first_row + r) * stride;
        std::copy_n(codes_.begin() + code_offset(id, t), nsub, codes);
        cb.decode({codes, static_cast<std::size_t>(nsub)},
                  {out.data() + (first_row + r) * d_, static_cast<std::size_t>(d_)});
      }
      return;
    }
    Matrix<Real> gathered(g, d_);
    for (Index r = 0; r < g; ++r) gathered.row(r) = raw_.value.row(ids[group[r]]);
    // Repeated ids in a batch share one encoding.
    std::unordered_map<Index, Index> seen;
    seen.reserve(g);
    for (Index r = 0; r < g; ++r) {
      Code* codes = out_codes.data() + (first_row + r) * stride;
      const auto [it, fresh] = seen.try_emplace(ids[group[r]], first_row + r);
      if (!fresh) {
        std::copy_n(out_codes.data() + it->second * stride, stride, codes);
        out.row(first_row + r) = out.row(it->second);
        continue;
      }
      encode_row(ids[group[r]], {gathered.data() + r * d_, static_cast<std::size_t>(d_)}, t,
                 {codes, static_cast<std::size_t>(nsub)});
      cb.decode({codes, static_cast<std::size_t>(nsub)},
                {out.data() + (first_row + r) * d_, static_cast<std::size_t>(d_)});
    }
    out_raw.middleRows(first_row, g) = gathered;
  }

  Index code_offset(Index id, Index tier) const {
    return tier_offset_[tier] + (id - part_.begin(tier)) * part_.D[tier];
  }

  void compute_offsets() {
    tier_offset_.assign(part_.num_tiers() + 1, 0);
    for (Index t = 0; t < part_.num_tiers(); ++t)
      tier_offset_[t + 1] = tier_offset_[t] + part_.tier_size(t) * part_.D[t];
    total_codes_ = tier_offset_.back();
  }

  void build_indexes() {
    indexes_.assign(codebooks_.size(), {});
    if (frozen_) return;
    for (std::size_t i = 0; i < codebooks_.size(); ++i) {
      if (codebooks_[i].sub_dim() != 1) continue;
      std::vector<Index> limits;
      for (Index t = 0; t < part_.num_tiers(); ++t)
        if (codebook_of(t) == static_cast<Index>(i)) limits.push_back(part_.K[t]);
      indexes_[i] = ScalarCentroidIndex<Real>(codebooks_[i], limits);
    }
  }

  Parameter<Real> raw_;
  TierPartition part_;
  std::vector<CodebookSet<Real>> codebooks_;
  Index d_ = 0;
  std::vector<Code> codes_;
  std::vector<Index> tier_offset_;
  Index total_codes_ = 0;
  bool frozen_ = false;
  std::vector<ScalarCentroidIndex<Real>> indexes_;
  mutable std::vector<Code> hints_;
};

}  // namespace mgqe
