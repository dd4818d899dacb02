#pragma once

#include "mgqe/common.hpp"
#include "mgqe/embedding/layer.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace mgqe {

/// Multi-tier split of a frequency-ordered vocabulary into contiguous id
/// ranges V_1..V_m, with the per-tier centroid counts and subspace counts.
struct TierPartition {
  std::vector<Index> bounds;  // m + 1 entries: V_i = [bounds[i], bounds[i+1])
  std::vector<Index> K;       // centroids per tier, non-increasing
  std::vector<Index> D;       // subspaces per tier, non-increasing
  MgqeVariant variant = MgqeVariant::SharedVarK;

  Index num_tiers() const { return static_cast<Index>(K.size()); }
  Index vocab_size() const { return bounds.empty() ? 0 : bounds.back(); }
  Index tier_size(Index t) const { return bounds[t + 1] - bounds[t]; }
  Index begin(Index t) const { return bounds[t]; }
  Index end(Index t) const { return bounds[t + 1]; }

  Index tier_of(Index id) const {
    return static_cast<Index>(std::upper_bound(bounds.begin() + 1, bounds.end() - 1, id) -
                              (bounds.begin() + 1));
  }

  bool shared() const { return variant == MgqeVariant::SharedVarK; }

  void validate(Index n, Index d) const {
    const Index m = num_tiers();
    require(m >= 1, "partition needs at least one tier");
    require(static_cast<Index>(D.size()) == m && static_cast<Index>(bounds.size()) == m + 1,
            "partition arrays have inconsistent lengths");
    require(bounds.front() == 0 && bounds.back() == n, "tiers must cover [0, n)");
    for (Index t = 0; t < m; ++t) {
      require(bounds[t] <= bounds[t + 1], "tier boundaries must be non-decreasing");
      require(K[t] >= 1, "every tier needs K >= 1");
      require(D[t] >= 1 && d % D[t] == 0, "tier subspace count must divide d");
      if (t > 0) {
        require(K[t - 1] >= K[t], "K must be non-increasing across tiers");
        require(D[t - 1] >= D[t], "D must be non-increasing across tiers");
      }
    }
    const bool same_d = std::all_of(D.begin(), D.end(), [&](Index x) { return x == D[0]; });
    const bool same_k = std::all_of(K.begin(), K.end(), [&](Index x) { return x == K[0]; });
    switch (variant) {
      case MgqeVariant::SharedVarK:
      case MgqeVariant::UnsharedVarK:
        require(same_d, "variable-K variants use one subspace count for every tier");
        break;
      case MgqeVariant::UnsharedVarD:
        require(same_k, "variable-D variant uses one centroid count for every tier");
        break;
    }
  }

  /// Tier boundaries at round(f * n) for each cumulative fraction f, e.g. {0.1}
  /// puts the top 10% ids in the head tier.
  static TierPartition from_fractions(Index n, Index d, std::span<const double> cumulative,
                                      std::vector<Index> k, std::vector<Index> dsub,
                                      MgqeVariant variant) {
    TierPartition p;
    p.variant = variant;
    p.K = std::move(k);
    p.D = std::move(dsub);
    p.bounds.push_back(0);
    for (double f : cumulative) {
      require(f >= 0.0 && f <= 1.0, "tier fractions must lie in [0, 1]");
      p.bounds.push_back(std::clamp<Index>(std::llround(f * static_cast<double>(n)), p.bounds.back(), n));
    }
    p.bounds.push_back(n);
    p.validate(n, d);
    return p;
  }
};

}  // namespace mgqe
