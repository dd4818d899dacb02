#pragma once

#include "mgqe/common.hpp"
#include "mgqe/parameter.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mgqe {

using Code = std::int32_t;

/// Per-subspace centroid tables. Centroids are stored subspace-major, then
/// centroid, then dimension: row `s` of the parameter holds K blocks of
/// `sub_dim` values.
template <typename Real>
class CodebookSet {
 public:
  CodebookSet() = default;
  CodebookSet(Index dim, Index num_subspaces, Index num_centroids, std::string name = "codebook")
      : dim_(dim), subspaces_(num_subspaces), centroids_(num_centroids) {
    require(num_subspaces >= 1 && dim % num_subspaces == 0,
            "number of subspaces must divide the embedding dimension");
    require(num_centroids >= 1, "codebook needs at least one centroid");
    sub_dim_ = dim / num_subspaces;
    param_ = Parameter<Real>(std::move(name), num_subspaces, num_centroids * sub_dim_);
  }

  Index dim() const { return dim_; }
  Index num_subspaces() const { return subspaces_; }
  Index num_centroids() const { return centroids_; }
  Index sub_dim() const { return sub_dim_; }
  std::uint64_t size_bits() const { return 32ull * centroids_ * dim_; }

  const Real* centroid(Index subspace, Index k) const {
    return param_.value.data() + subspace * param_.value.cols() + k * sub_dim_;
  }
  Real* centroid(Index subspace, Index k) {
    return param_.value.data() + subspace * param_.value.cols() + k * sub_dim_;
  }
  Real* centroid_grad(Index subspace, Index k) {
    return param_.grad.data() + subspace * param_.grad.cols() + k * sub_dim_;
  }

  Parameter<Real>& parameter() { return param_; }
  const Parameter<Real>& parameter() const { return param_; }

  /// Concatenates the selected centroid of every subspace into `out` (length dim).
  void decode(std::span<const Code> codes, std::span<Real> out) const {
    for (Index s = 0; s < subspaces_; ++s) {
      const Real* c = centroid(s, codes[s]);
      std::copy(c, c + sub_dim_, out.begin() + s * sub_dim_);
    }
  }

  /// Seeds every centroid with a sub-vector of a random row in [row_begin, row_end)
  /// plus Gaussian noise.
  template <typename Rng>
  void init_from_rows(const Matrix<Real>& table, Index row_begin, Index row_end, double noise_std,
                      Rng& rng) {
    require(row_end > row_begin, "centroid initialisation needs at least one row");
    std::uniform_int_distribution<Index> pick(row_begin, row_end - 1);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (Index s = 0; s < subspaces_; ++s) {
      for (Index k = 0; k < centroids_; ++k) {
        const Index r = pick(rng);
        Real* c = centroid(s, k);
        for (Index j = 0; j < sub_dim_; ++j)
          c[j] = table(r, s * sub_dim_ + j) + static_cast<Real>(noise(rng));
      }
    }
  }

 private:
  Index dim_ = 0;
  Index subspaces_ = 0;
  Index centroids_ = 0;
  Index sub_dim_ = 0;
  Parameter<Real> param_;
};

/// Nearest centroid in one subspace, restricted to indices < limit.
/// Exhaustive scan; ties resolve to the smallest index.
template <typename Real>
Code nearest_centroid(const Real* sub, const CodebookSet<Real>& cb, Index subspace, Index limit) {
  const Index sd = cb.sub_dim();
  Code best = 0;
  Real best_dist = 0;
  for (Index k = 0; k < limit; ++k) {
    const Real* c = cb.centroid(subspace, k);
    Real dist = 0;
    for (Index j = 0; j < sd; ++j) {
      const Real diff = sub[j] - c[j];
      dist += diff * diff;
    }
    if (k == 0 || dist < best_dist) {
      best_dist = dist;
      best = static_cast<Code>(k);
    }
  }
  return best;
}

/// KD encoding of `e`: per subspace, argmin over k < max_code[s] of ||e^(s) - c^(s)_k||^2.
template <typename Real>
void quantize(std::span<const Real> e, const CodebookSet<Real>& cb, std::span<const Index> max_code,
              std::span<Code> codes) {
  for (Index s = 0; s < cb.num_subspaces(); ++s)
    codes[s] = nearest_centroid(e.data() + s * cb.sub_dim(), cb, s, max_code[s]);
}

template <typename Real>
std::vector<Code> quantize(std::span<const Real> e, const CodebookSet<Real>& cb,
                           std::span<const Index> max_code) {
  std::vector<Code> codes(cb.num_subspaces());
  quantize<Real>(e, cb, max_code, codes);
  return codes;
}

/// Same as `quantize` with one limit shared by all subspaces.
template <typename Real>
void quantize(std::span<const Real> e, const CodebookSet<Real>& cb, Index limit,
              std::span<Code> codes) {
  for (Index s = 0; s < cb.num_subspaces(); ++s)
    codes[s] = nearest_centroid(e.data() + s * cb.sub_dim(), cb, s, limit);
}

/// Exact nearest-centroid search for scalar subspaces (sub_dim == 1).
///
/// Keeps the centroids of each subspace sorted by (value, index) for each
/// registered prefix limit, so a lookup is a binary search instead of a scan
/// over K. Results are identical to `nearest_centroid`, ties included.
/// `refresh()` must be called after the codebook changes; since optimizer
/// steps move centroids only slightly, it re-sorts the previous order with
/// insertion sort.
template <typename Real>
class ScalarCentroidIndex {
 public:
  ScalarCentroidIndex() = default;
  ScalarCentroidIndex(const CodebookSet<Real>& cb, std::vector<Index> limits) {
    std::sort(limits.begin(), limits.end());
    limits.erase(std::unique(limits.begin(), limits.end()), limits.end());
    limits_ = std::move(limits);
    nsub_ = cb.num_subspaces();
    const Index nsub = nsub_;
    tables_.resize(limits_.size() * nsub);
    for (std::size_t l = 0; l < limits_.size(); ++l) {
      for (Index s = 0; s < nsub; ++s) {
        Table& t = tables_[l * nsub + s];
        t.order.resize(limits_[l]);
        for (Index k = 0; k < limits_[l]; ++k) t.order[k] = static_cast<Code>(k);
      }
    }
    refresh(cb);
  }

  bool empty() const { return tables_.empty(); }

  void refresh(const CodebookSet<Real>& cb) {
    const Index nsub = nsub_;
    for (std::size_t l = 0; l < limits_.size(); ++l) {
      for (Index s = 0; s < nsub; ++s) {
        Table& t = tables_[l * nsub + s];
        auto key_less = [&](Code a, Code b) {
          const Real va = *cb.centroid(s, a);
          const Real vb = *cb.centroid(s, b);
          return va < vb || (va == vb && a < b);
        };
        for (std::size_t i = 1; i < t.order.size(); ++i) {
          const Code cur = t.order[i];
          std::size_t j = i;
          while (j > 0 && key_less(cur, t.order[j - 1])) {
            t.order[j] = t.order[j - 1];
            --j;
          }
          t.order[j] = cur;
        }
        t.values.resize(t.order.size());
        t.rank.resize(t.order.size());
        for (std::size_t i = 0; i < t.order.size(); ++i) {
          t.values[i] = *cb.centroid(s, t.order[i]);
          t.rank[t.order[i]] = static_cast<std::int32_t>(i);
        }
      }
    }
  }

  /// Like `nearest`, but first tries `hint` (typically the previous code of
  /// the same row). Distances are unimodal along the sorted values, so a hint
  /// strictly closer than both sorted neighbours is the unique minimum.
  Code nearest(const CodebookSet<Real>& cb, Real x, Index subspace, Index limit, Code hint) const {
    if (hint >= 0 && hint < limit) {
      if (const Table* t = table(subspace, limit)) {
        const auto& v = t->values;
        const std::size_t p = static_cast<std::size_t>(t->rank[hint]);
        const Real diff = x - v[p];
        const Real d = diff * diff;
        auto farther = [&](std::size_t i) {
          const Real e = x - v[i];
          return d < e * e;
        };
        if ((p == 0 || farther(p - 1)) && (p + 1 == v.size() || farther(p + 1))) return hint;
      }
    }
    return nearest(cb, x, subspace, limit);
  }

  Code nearest(const CodebookSet<Real>& cb, Real x, Index subspace, Index limit) const {
    const Table* tp = table(subspace, limit);
    if (!tp) return nearest_centroid(&x, cb, subspace, limit);
    const Table& t = *tp;
    const auto& v = t.values;
    const std::size_t m = v.size();
    auto dist = [&](std::size_t i) {
      const Real diff = x - v[i];
      return diff * diff;
    };
    const std::size_t pos = lower_bound(v, x);
    Real best = 0;
    bool have = false;
    if (pos < m) {
      best = dist(pos);
      have = true;
    }
    if (pos > 0 && (!have || dist(pos - 1) < best)) {
      best = dist(pos - 1);
      have = true;
    }
    // Every centroid at distance `best` sits in a contiguous run around pos;
    // the winner is the smallest original index among them.
    Code winner = -1;
    for (std::size_t i = pos; i < m && dist(i) == best; ++i)
      if (winner < 0 || t.order[i] < winner) winner = t.order[i];
    for (std::size_t i = pos; i > 0 && dist(i - 1) == best; --i)
      if (winner < 0 || t.order[i - 1] < winner) winner = t.order[i - 1];
    if (winner < 0) return nearest_centroid(&x, cb, subspace, limit);  // NaN input
    return winner;
  }

 private:
  struct Table {
    std::vector<Code> order;
    std::vector<Real> values;
    std::vector<std::int32_t> rank;  // position of each code in `order`
  };

  const Table* table(Index subspace, Index limit) const {
    const auto it = std::lower_bound(limits_.begin(), limits_.end(), limit);
    if (it == limits_.end() || *it != limit) return nullptr;
    return &tables_[(it - limits_.begin()) * nsub_ + subspace];
  }

  // std::lower_bound without data-dependent branches; NaN sorts last.
  static std::size_t lower_bound(const std::vector<Real>& v, Real x) {
    const Real* base = v.data();
    std::size_t n = v.size();
    if (n == 0) return 0;
    while (n > 1) {
      const std::size_t half = n / 2;
      base = base[half - 1] < x ? base + half : base;
      n -= half;
    }
    return static_cast<std::size_t>(base - v.data()) + (*base < x ? 1 : 0);
  }
  Index nsub_ = 0;
  std::vector<Index> limits_;
  std::vector<Table> tables_;
};

}  // namespace mgqe
