#pragma once

#include "mgqe/common.hpp"
#include "mgqe/data/interactions.hpp"
#include "mgqe/embedding/dpq.hpp"
#include "mgqe/embedding/mgqe.hpp"
#include "mgqe/embedding/scalar_quantized.hpp"

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace mgqe {

/// Discrete codes of every item, padded with -1 where an item has fewer
/// subspaces than the widest tier.
struct CodeTable {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::int32_t> data;

  std::int32_t at(Index i, Index s) const { return data[i * cols + s]; }
};

/// Codes of a frozen quantized layer; for scalar quantization the codes are
/// the per-dimension buckets.
template <typename Real>
CodeTable code_table(const EmbeddingLayer<Real>& layer) {
  if (!layer.frozen()) throw StateError("code table requires a frozen layer");
  CodeTable t;
  t.rows = layer.vocab_size();
  if (const auto* m = dynamic_cast<const MgqeEmbedding<Real>*>(&layer)) {
    const auto& p = m->partition();
    t.cols = *std::max_element(p.D.begin(), p.D.end());
    t.data.assign(static_cast<std::size_t>(t.rows * t.cols), -1);
    for (Index i = 0; i < t.rows; ++i) {
      const auto c = m->item_codes(i);
      std::copy(c.begin(), c.end(), t.data.begin() + i * t.cols);
    }
  } else if (const auto* q = dynamic_cast<const DpqEmbedding<Real>*>(&layer)) {
    t.cols = q->codebook().num_subspaces();
    t.data.assign(q->codes().begin(), q->codes().end());
  } else if (const auto* s = dynamic_cast<const ScalarQuantizedEmbedding<Real>*>(&layer)) {
    t.cols = layer.dim();
    t.data.assign(s->table().codes.begin(), s->table().codes.end());
  } else {
    throw DataError("layer has no discrete codes");
  }
  return t;
}

/// Number of positions at which both items have a code and the codes agree.
inline Index code_similarity(const CodeTable& t, Index a, Index b) {
  Index same = 0;
  for (Index s = 0; s < t.cols; ++s) {
    const auto x = t.at(a, s);
    if (x >= 0 && x == t.at(b, s)) ++same;
  }
  return same;
}

inline const std::vector<std::string>& default_similarity_categories() {
  static const std::vector<std::string> c = {"Sci-Fi", "Romance", "Animation", "Horror"};
  return c;
}

struct SimilarityMatrix {
  std::vector<std::string> categories;
  std::vector<std::vector<double>> mean;  // symmetric
  std::vector<Index> set_size;            // items per sampled set

  /// Mean same-category similarity minus the mean over the other categories.
  double diagonal_margin(std::size_t c) const {
    double cross = 0;
    for (std::size_t o = 0; o < mean.size(); ++o)
      if (o != c) cross += mean[c][o];
    return mean[c][c] - cross / static_cast<double>(mean.size() - 1);
  }
};

/// For each category, shuffles its items and draws two disjoint sets of up to
/// `sample_size` items (multi-genre items count for each of their genres).
/// Entry (x, y) is the mean similarity between set A of x and set B of y, with
/// identical items skipped; the matrix is then symmetrized.
inline SimilarityMatrix code_similarity_matrix(const CodeTable& codes, const GenreTable& genres,
                                               const std::vector<std::string>& categories,
                                               Index sample_size, std::uint64_t seed) {
  require(sample_size >= 1, "sample size must be positive");
  require(!categories.empty(), "need at least one category");
  require(static_cast<Index>(genres.genres.size()) == codes.rows, "genre table and code table sizes differ");
  std::mt19937_64 rng(seed);
  const std::size_t nc = categories.size();
  std::vector<std::vector<Index>> set_a(nc), set_b(nc);
  SimilarityMatrix out;
  out.categories = categories;
  for (std::size_t c = 0; c < nc; ++c) {
    std::vector<Index> members;
    for (Index i = 0; i < codes.rows; ++i)
      if (genres.has(i, categories[c])) members.push_back(i);
    if (members.size() < 2)
      throw DataError("category '" + categories[c] + "' has " + std::to_string(members.size()) +
                      " items; need at least 2");
    std::shuffle(members.begin(), members.end(), rng);
    const Index take = std::min<Index>(sample_size, static_cast<Index>(members.size()) / 2);
    set_a[c].assign(members.begin(), members.begin() + take);
    set_b[c].assign(members.begin() + take, members.begin() + 2 * take);
    out.set_size.push_back(take);
  }
  std::vector<std::vector<double>> raw(nc, std::vector<double>(nc, 0.0));
  for (std::size_t x = 0; x < nc; ++x)
    for (std::size_t y = 0; y < nc; ++y) {
      std::int64_t total = 0;
      std::int64_t count = 0;
      for (Index a : set_a[x])
        for (Index b : set_b[y]) {
          if (a == b) continue;
          total += code_similarity(codes, a, b);
          ++count;
        }
      raw[x][y] = count ? static_cast<double>(total) / static_cast<double>(count) : 0.0;
    }
  out.mean.assign(nc, std::vector<double>(nc, 0.0));
  for (std::size_t x = 0; x < nc; ++x)
    for (std::size_t y = 0; y < nc; ++y) out.mean[x][y] = 0.5 * (raw[x][y] + raw[y][x]);
  return out;
}

inline void write_similarity_csv(std::ostream& out, const SimilarityMatrix& m) {
  out << "category";
  for (const auto& c : m.categories) out << ',' << c;
  out << '\n' << std::setprecision(6);
  for (std::size_t x = 0; x < m.categories.size(); ++x) {
    out << m.categories[x];
    for (std::size_t y = 0; y < m.categories.size(); ++y) out << ',' << m.mean[x][y];
    out << '\n';
  }
}

}  // namespace mgqe
