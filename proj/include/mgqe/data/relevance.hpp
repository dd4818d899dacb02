#pragma once

#include "mgqe/common.hpp"
#include "mgqe/data/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace mgqe {

struct RelevancePair {
  Index a = 0;
  Index b = 0;
  float score = 0.0f;
};

/// Item-to-item relevance scores in [-100, 100] with a train/eval split.
/// Item ids are ordered by train frequency (descending).
struct RelevanceDataset {
  Index num_items = 0;
  std::vector<RelevancePair> train;
  std::vector<RelevancePair> eval;
  std::vector<Index> item_frequency;  // occurrences in train pairs

  double train_mean() const {
    if (train.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : train) s += p.score;
    return s / static_cast<double>(train.size());
  }
};

struct RelevanceConfig {
  Index num_items = 10000;
  Index num_pairs = 500000;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 42;
  double eval_fraction = 0.1;
  Index latent_dim = 8;
  double dot_scale = 40.0;
  double bias_scale = 10.0;
  double noise_std = 15.0;
};

namespace detail {

/// Remaps item ids by descending count (ties by old id) and returns old->new.
inline std::vector<Index> frequency_permutation(const std::vector<Index>& counts) {
  std::vector<Index> order(counts.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return counts[x] > counts[y]; });
  std::vector<Index> remap(counts.size());
  for (std::size_t r = 0; r < order.size(); ++r) remap[order[r]] = static_cast<Index>(r);
  return remap;
}

}  // namespace detail

/// Synthetic stand-in for a human-rated item relevance set. Item popularity is
/// Zipf-distributed; scores come from planted latent factors and item biases
/// plus Gaussian noise, clipped to [-100, 100]. Each unordered pair appears at
/// most once. Output depends only on the config.
inline RelevanceDataset generate_synthetic_relevance(const RelevanceConfig& cfg) {
  const Index n = cfg.num_items;
  if (n < 2) throw DataError("relevance generator needs at least 2 items");
  if (cfg.num_pairs < 1) throw DataError("relevance generator needs at least 1 pair");
  const double total = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  if (static_cast<double>(cfg.num_pairs) > total)
    throw DataError("cannot draw " + std::to_string(cfg.num_pairs) + " distinct pairs from " +
                    std::to_string(n) + " items (at most " + std::to_string(static_cast<long long>(total)) +
                    ")");
  if (cfg.eval_fraction < 0.0 || cfg.eval_fraction >= 1.0)
    throw DataError("eval fraction must be in [0, 1)");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> weight(n);
  for (Index i = 0; i < n; ++i) weight[i] = std::pow(static_cast<double>(i + 1), -cfg.zipf_exponent);

  const Index k = cfg.latent_dim;
  std::vector<double> factor(static_cast<std::size_t>(n * k));
  std::vector<double> bias(n);
  for (double& f : factor) f = normal(rng);
  for (double& b : bias) b = normal(rng);

  auto key = [n](Index a, Index b) {
    return static_cast<std::uint64_t>(std::min(a, b)) * static_cast<std::uint64_t>(n) +
           static_cast<std::uint64_t>(std::max(a, b));
  };

  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(cfg.num_pairs);
  bool sampled = false;
  if (static_cast<double>(cfg.num_pairs) <= total / 2.0) {
    // Rejection sampling; gives up after a generous budget and enumerates instead.
    std::discrete_distribution<Index> pick(weight.begin(), weight.end());
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(static_cast<std::size_t>(cfg.num_pairs) * 2);
    const std::int64_t budget = 200 * cfg.num_pairs + 1000000;
    for (std::int64_t t = 0; t < budget && static_cast<Index>(pairs.size()) < cfg.num_pairs; ++t) {
      const Index a = pick(rng);
      const Index b = pick(rng);
      if (a == b || !seen.insert(key(a, b)).second) continue;
      pairs.emplace_back(a, b);
    }
    sampled = static_cast<Index>(pairs.size()) == cfg.num_pairs;
  }
  if (!sampled) {
    // Weighted sampling without replacement over every pair (exponential keys).
    pairs.clear();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    struct Keyed {
      double key;
      Index a, b;
    };
    std::vector<Keyed> all;
    all.reserve(static_cast<std::size_t>(total));
    for (Index a = 0; a < n; ++a)
      for (Index b = a + 1; b < n; ++b) {
        double u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        all.push_back({std::log(u) / (weight[a] * weight[b]), a, b});
      }
    std::partial_sort(all.begin(), all.begin() + cfg.num_pairs, all.end(),
                      [](const Keyed& x, const Keyed& y) { return x.key > y.key; });
    for (Index p = 0; p < cfg.num_pairs; ++p) pairs.emplace_back(all[p].a, all[p].b);
  }

  std::vector<RelevancePair> scored(pairs.size());
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    double dot = 0.0;
    for (Index j = 0; j < k; ++j) dot += factor[a * k + j] * factor[b * k + j];
    const double s = cfg.dot_scale * dot * inv_sqrt_k + cfg.bias_scale * (bias[a] + bias[b]) +
                     cfg.noise_std * normal(rng);
    scored[p] = {a, b, static_cast<float>(std::clamp(s, -100.0, 100.0))};
  }

  std::shuffle(scored.begin(), scored.end(), rng);
  const auto n_eval = static_cast<std::size_t>(std::llround(cfg.eval_fraction * static_cast<double>(scored.size())));

  RelevanceDataset ds;
  ds.num_items = n;
  ds.eval.assign(scored.begin(), scored.begin() + n_eval);
  ds.train.assign(scored.begin() + n_eval, scored.end());

  std::vector<Index> counts(n, 0);
  for (const auto& p : ds.train) {
    ++counts[p.a];
    ++counts[p.b];
  }
  const std::vector<Index> remap = detail::frequency_permutation(counts);
  for (auto* split : {&ds.train, &ds.eval})
    for (auto& p : *split) {
      p.a = remap[p.a];
      p.b = remap[p.b];
    }
  ds.item_frequency.assign(n, 0);
  for (Index i = 0; i < n; ++i) ds.item_frequency[remap[i]] = counts[i];
  return ds;
}

inline RelevanceDataset generate_synthetic_relevance(Index num_items, Index num_pairs, double zipf_exponent,
                                                     std::uint64_t seed) {
  RelevanceConfig cfg;
  cfg.num_items = num_items;
  cfg.num_pairs = num_pairs;
  cfg.zipf_exponent = zipf_exponent;
  cfg.seed = seed;
  return generate_synthetic_relevance(cfg);
}

/// CSV with columns item_a,item_b,score,split.
inline void write_relevance_csv(const RelevanceDataset& ds, std::ostream& out) {
  out << "item_a,item_b,score,split\n";
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (const auto& p : ds.train) out << p.a << ',' << p.b << ',' << p.score << ",train\n";
  for (const auto& p : ds.eval) out << p.a << ',' << p.b << ',' << p.score << ",eval\n";
}

inline void write_relevance_csv(const RelevanceDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_relevance_csv(ds, out);
}

inline RelevanceDataset read_relevance_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open relevance file '" + path + "'");
  RelevanceDataset ds;
  std::string line;
  std::size_t lineno = 0;
  Index max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = detail::chomp(line);
    if (l.empty() || (lineno == 1 && l.starts_with("item_a"))) continue;
    const auto f = detail::split_fields(l, ",");
    if (f.size() != 4) throw ParseError("expected item_a,item_b,score,split", lineno);
    RelevancePair p;
    p.a = detail::parse_int(f[0], lineno, "item id");
    p.b = detail::parse_int(f[1], lineno, "item id");
    if (p.a < 0 || p.b < 0) throw ParseError("negative item id", lineno);
    try {
      std::size_t used = 0;
      const std::string s(f[2]);
      p.score = std::stof(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("invalid score '" + std::string(f[2]) + "'", lineno);
    }
    max_id = std::max({max_id, p.a, p.b});
    if (f[3] == "train") {
      ds.train.push_back(p);
    } else if (f[3] == "eval") {
      ds.eval.push_back(p);
    } else {
      throw ParseError("split must be 'train' or 'eval'", lineno);
    }
  }
  ds.num_items = max_id + 1;
  ds.item_frequency.assign(ds.num_items, 0);
  for (const auto& p : ds.train) {
    ++ds.item_frequency[p.a];
    ++ds.item_frequency[p.b];
  }
  return ds;
}

/// Rank/frequency table for log-log plots. Ranks start at 1; log columns are
/// empty for zero counts.
inline std::string frequency_histogram_csv(std::vector<Index> counts) {
  std::stable_sort(counts.begin(), counts.end(), std::greater<>());
  std::ostringstream out;
  out << "rank,frequency,log10_rank,log10_frequency\n";
  out << std::setprecision(6);
  for (std::size_t r = 0; r < counts.size(); ++r) {
    out << r + 1 << ',' << counts[r] << ',' << std::log10(static_cast<double>(r + 1)) << ',';
    if (counts[r] > 0) out << std::log10(static_cast<double>(counts[r]));
    out << '\n';
  }
  return out.str();
}

inline std::string split_counts(const InteractionDataset& ds) { return frequency_histogram_csv(ds.item_frequency); }
inline std::string split_counts(const RelevanceDataset& ds) { return frequency_histogram_csv(ds.item_frequency); }

}  // namespace mgqe
