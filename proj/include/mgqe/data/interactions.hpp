#pragma once

#include "mgqe/common.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgqe {

struct Interaction {
  Index user = 0;
  Index item = 0;
  std::int64_t timestamp = 0;
};

/// Implicit-feedback dataset with frequency-ordered ids and a leave-last-two
/// split. Item ids are sorted by train frequency (descending, ties by external
/// id ascending); user ids likewise by their train counts.
struct InteractionDataset {
  Index num_users = 0;
  Index num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;  // one per user with >= 3 actions
  std::vector<Interaction> test;        // one per user with >= 3 actions
  std::vector<Index> item_frequency;    // train counts, non-increasing in id
  std::vector<Index> user_frequency;    // train counts, non-increasing in id
  std::vector<std::int64_t> item_external;
  std::vector<std::int64_t> user_external;

  /// Sorted train items of every user.
  std::vector<std::vector<Index>> user_train_items() const {
    std::vector<std::vector<Index>> items(num_users);
    for (const Interaction& x : train) items[x.user].push_back(x.item);
    for (auto& v : items) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return items;
  }

  std::size_t num_interactions() const { return train.size() + validation.size() + test.size(); }

  double sparsity() const {
    if (num_users == 0 || num_items == 0) return 0.0;
    return 1.0 - static_cast<double>(num_interactions()) /
                     (static_cast<double>(num_users) * static_cast<double>(num_items));
  }
};

/// Per-item genre sets, indexed by internal item id.
struct GenreTable {
  std::vector<std::vector<std::string>> genres;
  std::vector<bool> missing;  // item had no row in the movies file

  bool has(Index item, std::string_view genre) const {
    const auto& g = genres[item];
    return std::find(g.begin(), g.end(), genre) != g.end();
  }
};

/// One rating as read from disk, external ids.
struct RawRating {
  std::int64_t user = 0;
  std::int64_t item = 0;
  std::int64_t timestamp = 0;
};

struct LoadOptions {
  /// Drop items with fewer ratings than this before splitting (0 keeps all).
  Index min_item_count = 0;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
}

inline std::int64_t parse_int(std::string_view s, std::size_t line, const char* what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(std::string("invalid ") + what + " '" + std::string(s) + "'", line);
  return v;
}

inline std::string_view chomp(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Splits and re-indexes raw implicit feedback. Each user's actions are sorted
/// by (timestamp, external item); with at least three actions the last one is
/// the test item and the second-to-last the validation item, everything else is
/// train. Users with fewer actions contribute to train only.
inline InteractionDataset build_interaction_dataset(std::vector<RawRating> ratings,
                                                    const LoadOptions& opts = {}) {
  if (opts.min_item_count > 0) {
    std::unordered_map<std::int64_t, Index> counts;
    for (const RawRating& r : ratings) ++counts[r.item];
    std::erase_if(ratings, [&](const RawRating& r) { return counts[r.item] < opts.min_item_count; });
  }

  std::map<std::int64_t, std::vector<RawRating>> by_user;
  for (const RawRating& r : ratings) by_user[r.user].push_back(r);

  struct Split {
    std::vector<RawRating> train;
    std::vector<RawRating> held;  // validation, test
  };
  std::map<std::int64_t, Split> splits;
  std::map<std::int64_t, Index> item_train_count;
  std::map<std::int64_t, Index> user_train_count;
  for (auto& [user, acts] : by_user) {
    std::stable_sort(acts.begin(), acts.end(), [](const RawRating& a, const RawRating& b) {
      return a.timestamp < b.timestamp || (a.timestamp == b.timestamp && a.item < b.item);
    });
    Split& s = splits[user];
    const std::size_t n_train = acts.size() >= 3 ? acts.size() - 2 : acts.size();
    s.train.assign(acts.begin(), acts.begin() + n_train);
    s.held.assign(acts.begin() + n_train, acts.end());
    for (const RawRating& r : acts) item_train_count.try_emplace(r.item, 0);
    for (const RawRating& r : s.train) ++item_train_count[r.item];
    user_train_count[user] = static_cast<Index>(s.train.size());
  }

  auto frequency_order = [](const std::map<std::int64_t, Index>& counts) {
    std::vector<std::pair<std::int64_t, Index>> v(counts.begin(), counts.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return v;  // map iteration already ascending by external id
  };

  InteractionDataset ds;
  std::unordered_map<std::int64_t, Index> item_id, user_id;
  for (const auto& [ext, count] : frequency_order(item_train_count)) {
    item_id[ext] = static_cast<Index>(ds.item_external.size());
    ds.item_external.push_back(ext);
    ds.item_frequency.push_back(count);
  }
  for (const auto& [ext, count] : frequency_order(user_train_count)) {
    user_id[ext] = static_cast<Index>(ds.user_external.size());
    ds.user_external.push_back(ext);
    ds.user_frequency.push_back(count);
  }
  ds.num_items = static_cast<Index>(ds.item_external.size());
  ds.num_users = static_cast<Index>(ds.user_external.size());

  // Emit in internal user order so the result does not depend on input order.
  for (Index u = 0; u < ds.num_users; ++u) {
    const Split& s = splits[ds.user_external[u]];
    for (const RawRating& r : s.train) ds.train.push_back({u, item_id[r.item], r.timestamp});
    if (s.held.size() == 2) {
      ds.validation.push_back({u, item_id[s.held[0].item], s.held[0].timestamp});
      ds.test.push_back({u, item_id[s.held[1].item], s.held[1].timestamp});
    }
  }
  return ds;
}

/// Reads `UserID::MovieID::Rating::Timestamp` lines.
inline std::vector<RawRating> read_movielens_ratings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ratings file '" + path + "'");
  std::vector<RawRating> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = detail::chomp(line);
    if (l.empty()) continue;
    const auto f = detail::split_fields(l, "::");
    if (f.size() != 4) throw ParseError("expected 4 '::'-separated fields", lineno);
    RawRating r;
    r.user = detail::parse_int(f[0], lineno, "user id");
    r.item = detail::parse_int(f[1], lineno, "movie id");
    detail::parse_int(f[2], lineno, "rating");
    r.timestamp = detail::parse_int(f[3], lineno, "timestamp");
    out.push_back(r);
  }
  return out;
}

/// Reads `MovieID::Title::Genres` lines; titles are opaque bytes (Latin-1 ok).
inline std::map<std::int64_t, std::vector<std::string>> read_movielens_genres(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open movies file '" + path + "'");
  std::map<std::int64_t, std::vector<std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = detail::chomp(line);
    if (l.empty()) continue;
    const std::size_t first = l.find("::");
    const std::size_t last = l.rfind("::");
    if (first == std::string_view::npos || first == last)
      throw ParseError("expected 'MovieID::Title::Genres'", lineno);
    const std::int64_t id = detail::parse_int(l.substr(0, first), lineno, "movie id");
    std::vector<std::string> genres;
    const std::string_view g = l.substr(last + 2);
    if (!g.empty())
      for (std::string_view part : detail::split_fields(g, "|")) genres.emplace_back(part);
    out[id] = std::move(genres);
  }
  return out;
}

inline GenreTable build_genre_table(const InteractionDataset& ds,
                                    const std::map<std::int64_t, std::vector<std::string>>& movies) {
  GenreTable table;
  table.genres.resize(ds.num_items);
  table.missing.assign(ds.num_items, false);
  for (Index i = 0; i < ds.num_items; ++i) {
    const auto it = movies.find(ds.item_external[i]);
    if (it == movies.end()) {
      table.missing[i] = true;
    } else {
      table.genres[i] = it->second;
    }
  }
  return table;
}

struct MovieLensData {
  InteractionDataset dataset;
  GenreTable genres;
};

/// Loads MovieLens-1M `.dat` files, treating every rating as an implicit positive.
inline MovieLensData load_movielens(const std::string& ratings_path, const std::string& movies_path,
                                    const LoadOptions& opts = {}) {
  MovieLensData out;
  out.dataset = build_interaction_dataset(read_movielens_ratings(ratings_path), opts);
  out.genres = build_genre_table(out.dataset, read_movielens_genres(movies_path));
  return out;
}

}  // namespace mgqe
