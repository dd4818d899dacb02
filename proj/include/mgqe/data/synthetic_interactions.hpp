#pragma once

#include "mgqe/common.hpp"
#include "mgqe/data/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace mgqe {

inline const std::vector<std::string>& movielens_genres() {
  static const std::vector<std::string> names = {
      "Action", "Adventure", "Animation", "Children's", "Comedy",  "Crime",
      "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
      "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"};
  return names;
}

/// Shape of a MovieLens-like implicit-feedback corpus with planted structure:
/// Zipf item popularity, genre-clustered item factors, users drawn towards a
/// few genres. Every user gets at least `min_user_actions` items.
struct SyntheticInteractionConfig {
  Index num_users = 6040;
  Index num_items = 3416;
  double zipf_exponent = 0.9;
  double activity_log_mean = 4.6;   // log of a typical user's action count
  double activity_log_std = 0.9;
  Index min_user_actions = 20;
  Index latent_dim = 16;
  double item_noise = 0.6;          // spread of item factors around their genres
  double user_noise = 0.5;
  double affinity = 3.0;            // weight of user-item affinity vs popularity
  std::uint64_t seed = 20190501;
};

struct SyntheticMovie {
  std::int64_t id = 0;
  std::string title;
  std::vector<std::string> genres;
};

struct SyntheticInteractions {
  std::vector<RawRating> ratings;
  std::vector<SyntheticMovie> movies;
};

inline SyntheticInteractions generate_synthetic_interactions(const SyntheticInteractionConfig& cfg) {
  require(cfg.num_users > 0 && cfg.num_items > 1, "synthetic corpus needs users and at least 2 items");
  require(cfg.min_user_actions >= 1 && cfg.min_user_actions <= cfg.num_items,
          "min user actions must be in [1, num_items]");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto& names = movielens_genres();
  const Index ng = static_cast<Index>(names.size());
  // Rough genre prevalence: drama and comedy dominate, documentaries are rare.
  const std::vector<double> prevalence = {5, 3, 1, 1.5, 8, 2, 0.7, 10, 0.8, 0.4, 2.5, 1, 0.8, 3, 2, 3.5, 1, 0.5};
  std::discrete_distribution<Index> pick_genre(prevalence.begin(), prevalence.end());

  const Index k = cfg.latent_dim;
  std::vector<std::vector<double>> proto(ng, std::vector<double>(k));
  for (auto& p : proto)
    for (double& x : p) x = normal(rng);

  SyntheticInteractions out;
  std::vector<double> item_factor(static_cast<std::size_t>(cfg.num_items * k));
  for (Index i = 0; i < cfg.num_items; ++i) {
    SyntheticMovie m;
    m.id = i + 1;
    m.title = "Movie " + std::to_string(i + 1);
    std::vector<Index> g = {pick_genre(rng)};
    for (double p : {0.4, 0.15}) {
      if (unif(rng) >= p) break;
      const Index extra = pick_genre(rng);
      if (std::find(g.begin(), g.end(), extra) == g.end()) g.push_back(extra);
    }
    std::sort(g.begin(), g.end());
    for (Index c : g) m.genres.push_back(names[c]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(g.size()));
    for (Index j = 0; j < k; ++j) {
      double v = 0.0;
      for (Index c : g) v += proto[c][j];
      item_factor[i * k + j] = scale * v + cfg.item_noise * normal(rng);
    }
    out.movies.push_back(std::move(m));
  }

  // Popularity rank is a random permutation so it is independent of genre.
  std::vector<Index> rank(cfg.num_items);
  std::iota(rank.begin(), rank.end(), Index{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> log_pop(cfg.num_items);
  for (Index i = 0; i < cfg.num_items; ++i)
    log_pop[i] = -cfg.zipf_exponent * std::log(static_cast<double>(rank[i] + 1));

  const Index max_actions = std::max<Index>(cfg.min_user_actions, cfg.num_items / 2);
  std::vector<double> user_factor(k);
  std::vector<std::pair<double, Index>> keys(cfg.num_items);
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));
  std::int64_t clock = 956703932;  // seconds; arbitrary epoch in 2000
  for (Index u = 0; u < cfg.num_users; ++u) {
    const Index n_fav = 1 + static_cast<Index>(unif(rng) * 3.0);
    std::fill(user_factor.begin(), user_factor.end(), 0.0);
    for (Index f = 0; f < n_fav; ++f) {
      const Index c = pick_genre(rng);
      for (Index j = 0; j < k; ++j) user_factor[j] += proto[c][j];
    }
    const double fscale = 1.0 / std::sqrt(static_cast<double>(n_fav));
    for (Index j = 0; j < k; ++j) user_factor[j] = fscale * user_factor[j] + cfg.user_noise * normal(rng);

    const double activity = std::exp(cfg.activity_log_mean + cfg.activity_log_std * normal(rng));
    const Index n_actions =
        std::clamp(static_cast<Index>(std::llround(activity)), cfg.min_user_actions, max_actions);

    // Gumbel top-k: sampling without replacement proportional to exp(score).
    for (Index i = 0; i < cfg.num_items; ++i) {
      double dot = 0.0;
      for (Index j = 0; j < k; ++j) dot += user_factor[j] * item_factor[i * k + j];
      double v = unif(rng);
      while (v <= 0.0) v = unif(rng);
      const double gumbel = -std::log(-std::log(v));
      keys[i] = {log_pop[i] + cfg.affinity * dot * inv_sqrt_k + gumbel, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + n_actions, keys.end(), std::greater<>());
    // Consumption order is random, so held-out items are ordinary draws.
    std::shuffle(keys.begin(), keys.begin() + n_actions, rng);
    for (Index a = 0; a < n_actions; ++a) {
      clock += 1 + static_cast<std::int64_t>(unif(rng) * 600.0);
      out.ratings.push_back({u + 1, out.movies[keys[a].second].id, clock});
    }
  }
  return out;
}

/// Writes `ratings.dat` and `movies.dat` in MovieLens-1M layout.
inline void write_movielens_files(const SyntheticInteractions& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream ratings(dir / "ratings.dat", std::ios::binary);
  std::ofstream movies(dir / "movies.dat", std::ios::binary);
  if (!ratings || !movies) throw DataError("cannot write MovieLens files under '" + dir.string() + "'");
  for (const RawRating& r : data.ratings)
    ratings << r.user << "::" << r.item << "::" << (1 + (r.user + r.item) % 5) << "::" << r.timestamp << '\n';
  for (const SyntheticMovie& m : data.movies) {
    movies << m.id << "::" << m.title << "::";
    for (std::size_t g = 0; g < m.genres.size(); ++g) movies << (g ? "|" : "") << m.genres[g];
    movies << '\n';
  }
}

}  // namespace mgqe
