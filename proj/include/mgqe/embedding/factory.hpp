#pragma once

#include "mgqe/embedding/dpq.hpp"
#include "mgqe/embedding/layer.hpp"
#include "mgqe/embedding/mgqe.hpp"
#include "mgqe/embedding/partition.hpp"
#include "mgqe/embedding/scalar_quantized.hpp"

#include <memory>
#include <vector>

namespace mgqe {

/// Everything needed to build one embedding table. Defaults follow the
/// experimental setup: d=64, r=48, b=8, D=64, K=256, K~=[256,64] with the top
/// 10% ids as head tier.
struct SchemeConfig {
  SchemeKind kind = SchemeKind::Full;
  Index d = 64;
  Index rank = 48;
  int bits = 8;
  Index num_subspaces = 64;
  Index num_centroids = 256;
  MgqeVariant variant = MgqeVariant::SharedVarK;
  std::vector<Index> tier_centroids{256, 64};
  std::vector<Index> tier_subspaces{64, 32};
  std::vector<double> tier_fractions{0.10};
  double init_std = 0.01;

  /// Partition of an n-sized, frequency-ordered vocabulary for MGQE.
  TierPartition partition(Index n) const {
    const std::size_t m = tier_fractions.size() + 1;
    std::vector<Index> k;
    std::vector<Index> dsub;
    switch (variant) {
      case MgqeVariant::SharedVarK:
      case MgqeVariant::UnsharedVarK:
        k = tier_centroids;
        dsub.assign(m, num_subspaces);
        break;
      case MgqeVariant::UnsharedVarD:
        k.assign(m, num_centroids);
        dsub = tier_subspaces;
        break;
    }
    require(k.size() == m && dsub.size() == m,
            "MGQE needs one capacity per tier (" + std::to_string(m) + " tiers)");
    return TierPartition::from_fractions(n, d, tier_fractions, std::move(k), std::move(dsub), variant);
  }
};

template <typename Real>
std::unique_ptr<EmbeddingLayer<Real>> make_embedding(const SchemeConfig& cfg, Index n, Rng& rng) {
  require(n >= 1, "embedding vocabulary must not be empty");
  switch (cfg.kind) {
    case SchemeKind::Full:
      return std::make_unique<FullEmbedding<Real>>(n, cfg.d, cfg.init_std, rng);
    case SchemeKind::LowRank:
      return std::make_unique<LowRankEmbedding<Real>>(n, cfg.d, cfg.rank, cfg.init_std, rng);
    case SchemeKind::ScalarQuantized:
      return std::make_unique<ScalarQuantizedEmbedding<Real>>(n, cfg.d, cfg.bits, cfg.init_std, rng);
    case SchemeKind::Dpq:
      return std::make_unique<DpqEmbedding<Real>>(n, cfg.d, cfg.num_subspaces, cfg.num_centroids,
                                                  cfg.init_std, rng);
    case SchemeKind::Mgqe:
      return std::make_unique<MgqeEmbedding<Real>>(n, cfg.d, cfg.partition(n), cfg.init_std, rng);
  }
  throw DataError("unknown embedding scheme");
}

/// Serving-size breakdown implied by a configuration, without allocating tables.
inline EmbeddingBits config_size_bits(const SchemeConfig& cfg, Index n) {
  EmbeddingBits bits;
  switch (cfg.kind) {
    case SchemeKind::Full:
      bits.table_bits = 32ull * n * cfg.d;
      break;
    case SchemeKind::LowRank:
      bits.table_bits = 32ull * n * cfg.rank + 32ull * cfg.rank * cfg.d;
      break;
    case SchemeKind::ScalarQuantized:
      bits.code_bits_exact = static_cast<double>(n) * cfg.d * cfg.bits;
      bits.code_bits_packed = static_cast<std::uint64_t>(n) * cfg.d * cfg.bits;
      bits.overhead_bits = 64ull * cfg.d;
      break;
    case SchemeKind::Dpq:
      require(cfg.num_subspaces >= 1 && cfg.d % cfg.num_subspaces == 0,
              "number of subspaces must divide the embedding dimension");
      bits.code_bits_exact = static_cast<double>(n) * cfg.num_subspaces *
                             std::log2(static_cast<double>(cfg.num_centroids));
      bits.code_bits_packed =
          static_cast<std::uint64_t>(n) * cfg.num_subspaces * bits_for(cfg.num_centroids);
      bits.codebook_bits = 32ull * cfg.num_centroids * cfg.d;
      break;
    case SchemeKind::Mgqe: {
      const TierPartition p = cfg.partition(n);
      for (Index t = 0; t < p.num_tiers(); ++t) {
        bits.code_bits_exact += static_cast<double>(p.tier_size(t)) * p.D[t] *
                                std::log2(static_cast<double>(p.K[t]));
        bits.code_bits_packed +=
            static_cast<std::uint64_t>(p.tier_size(t)) * p.D[t] * bits_for(p.K[t]);
      }
      if (p.shared()) {
        bits.codebook_bits = 32ull * p.K[0] * cfg.d;
      } else {
        for (Index t = 0; t < p.num_tiers(); ++t) bits.codebook_bits += 32ull * p.K[t] * cfg.d;
      }
      break;
    }
  }
  return bits;
}

}  // namespace mgqe
