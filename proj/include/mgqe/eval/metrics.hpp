#pragma once

#include "mgqe/common.hpp"
#include "mgqe/data/interactions.hpp"
#include "mgqe/data/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace mgqe {

struct RankingReport {
  Index k = 10;
  Index users = 0;      // users evaluated
  double hr = 0;        // percent
  double ndcg = 0;      // percent
  double recall = 0;    // percent, computed from explicit top-k lists
};

/// 1-based rank of `target` among candidates (all ids not in `excluded`, which
/// is sorted). Ties count against the target.
template <typename Real>
Index rank_of(std::span<const Real> scores, Index target, std::span<const Index> excluded) {
  const Real s = scores[target];
  Index ahead = 0;
  auto ex = excluded.begin();
  for (Index j = 0; j < static_cast<Index>(scores.size()); ++j) {
    while (ex != excluded.end() && *ex < j) ++ex;
    if (ex != excluded.end() && *ex == j) continue;
    if (j != target && !(scores[j] < s)) ++ahead;
  }
  return ahead + 1;
}

inline double ndcg_at(Index rank, Index k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

/// Top-k candidate ids by descending score. Among equal scores the target is
/// placed last, matching the pessimistic rank convention.
template <typename Real>
std::vector<Index> top_k(std::span<const Real> scores, Index k, Index target, std::span<const Index> excluded) {
  std::vector<Index> cand;
  cand.reserve(scores.size());
  for (Index j = 0; j < static_cast<Index>(scores.size()); ++j)
    if (!std::binary_search(excluded.begin(), excluded.end(), j)) cand.push_back(j);
  const auto better = [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if ((a == target) != (b == target)) return b == target;
    return a < b;
  };
  const Index kk = std::min<Index>(k, static_cast<Index>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + kk, cand.end(), better);
  cand.resize(kk);
  return cand;
}

/// Full-vocabulary ranking of each user's held-out item against every item
/// the user has not interacted with in train. Needs `model.scorer()`.
template <typename Model>
RankingReport evaluate_ranking(const Model& model, const InteractionDataset& ds, Index k = 10,
                               bool use_validation = false) {
  using Real = typename Model::real_type;
  require(k >= 1, "k must be positive");
  require(model.num_items() == ds.num_items && model.num_users() == ds.num_users,
          "model vocabulary does not match the dataset");
  const auto& held = use_validation ? ds.validation : ds.test;
  const auto seen = ds.user_train_items();
  const auto scorer = model.scorer();
  std::vector<Real> scores(ds.num_items);
  RankingReport r;
  r.k = k;
  Index hits = 0;
  Index recalled = 0;
  double ndcg = 0;
  for (const Interaction& x : held) {
    scorer.score(x.user, scores);
    const std::span<const Real> sc(scores);
    const Index rank = rank_of<Real>(sc, x.item, seen[x.user]);
    if (rank <= k) ++hits;
    ndcg += ndcg_at(rank, k);
    const auto top = top_k<Real>(sc, k, x.item, seen[x.user]);
    if (std::find(top.begin(), top.end(), x.item) != top.end()) ++recalled;
    ++r.users;
  }
  if (r.users > 0) {
    const double n = static_cast<double>(r.users);
    r.hr = 100.0 * static_cast<double>(hits) / n;
    r.recall = 100.0 * static_cast<double>(recalled) / n;
    r.ndcg = 100.0 * ndcg / n;
  }
  return r;
}

/// Root mean squared error of the model over the eval pairs.
template <typename Model>
double evaluate_rmse(const Model& model, const RelevanceDataset& ds, Index batch = 4096) {
  using Real = typename Model::real_type;
  if (ds.eval.empty()) throw DataError("relevance dataset has an empty eval split");
  double sq = 0;
  std::vector<Index> a, b;
  for (std::size_t begin = 0; begin < ds.eval.size(); begin += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(ds.eval.size(), begin + static_cast<std::size_t>(batch));
    a.clear();
    b.clear();
    for (std::size_t p = begin; p < end; ++p) {
      a.push_back(ds.eval[p].a);
      b.push_back(ds.eval[p].b);
    }
    const std::vector<Real> pred = model.predict(a, b);
    for (std::size_t p = begin; p < end; ++p) {
      const double diff = static_cast<double>(pred[p - begin]) - static_cast<double>(ds.eval[p].score);
      sq += diff * diff;
    }
  }
  return std::sqrt(sq / static_cast<double>(ds.eval.size()));
}

/// Plain RMSE of two sequences.
inline double rmse(std::span<const double> pred, std::span<const double> target) {
  require(pred.size() == target.size() && !pred.empty(), "rmse needs equal, non-empty inputs");
  double sq = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(sq / static_cast<double>(pred.size()));
}

}  // namespace mgqe
