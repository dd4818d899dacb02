#include "mgqe/data/interactions.hpp"
#include "mgqe/data/relevance.hpp"
#include "mgqe/data/synthetic_interactions.hpp"
#include "support.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

using namespace mgqe;
using mgqe::testing::TempDir;

namespace {

std::vector<RawRating> toy_ratings() {
  // user 10: five actions, two of them at t=5 (items 7 and 3);
  // user 20: three actions; user 30: two actions (train only).
  return {{10, 1, 1}, {10, 7, 5}, {10, 3, 5}, {10, 2, 9}, {10, 4, 12},
          {20, 3, 2}, {20, 1, 3}, {20, 9, 4},
          {30, 1, 8}, {30, 3, 7}};
}

}  // namespace

TEST(Split, LeaveLastTwoOutPerUser) {
  const auto ds = build_interaction_dataset(toy_ratings());
  EXPECT_EQ(ds.num_users, 3);
  EXPECT_EQ(ds.train.size(), 3u + 1u + 2u);
  ASSERT_EQ(ds.test.size(), 2u);
  ASSERT_EQ(ds.validation.size(), 2u);

  std::map<std::int64_t, std::int64_t> test_item, val_item;
  for (const auto& x : ds.test) test_item[ds.user_external[x.user]] = ds.item_external[x.item];
  for (const auto& x : ds.validation) val_item[ds.user_external[x.user]] = ds.item_external[x.item];
  EXPECT_EQ(test_item[10], 4);
  EXPECT_EQ(val_item[10], 2);
  EXPECT_EQ(test_item[20], 9);
  EXPECT_EQ(val_item[20], 1);
  EXPECT_EQ(test_item.count(30), 0u);
}

TEST(Split, EqualTimestampsOrderByItemId) {
  // Items 3 and 7 share t=5, so 3 comes first; the last two are then 7 and 9.
  const auto ds = build_interaction_dataset({{1, 7, 5}, {1, 3, 5}, {1, 9, 6}, {1, 5, 1}});
  ASSERT_EQ(ds.test.size(), 1u);
  EXPECT_EQ(ds.item_external[ds.test[0].item], 9);
  EXPECT_EQ(ds.item_external[ds.validation[0].item], 7);
  std::set<std::int64_t> train;
  for (const auto& x : ds.train) train.insert(ds.item_external[x.item]);
  EXPECT_EQ(train, (std::set<std::int64_t>{3, 5}));
}

TEST(Split, IdsOrderedByTrainFrequency) {
  const auto ds = build_interaction_dataset(toy_ratings());
  for (std::size_t i = 1; i < ds.item_frequency.size(); ++i)
    EXPECT_GE(ds.item_frequency[i - 1], ds.item_frequency[i]);
  // Train counts: item 3 -> 3, item 1 -> 2, item 7 -> 1; items 2, 4 and 9 only
  // appear held out and tie at 0, ordered by external id.
  EXPECT_EQ(ds.item_external, (std::vector<std::int64_t>{3, 1, 7, 2, 4, 9}));
  Index total = 0;
  for (Index c : ds.item_frequency) total += c;
  EXPECT_EQ(total, static_cast<Index>(ds.train.size()));
}

TEST(Split, IndependentOfInputOrder) {
  auto r = toy_ratings();
  const auto a = build_interaction_dataset(r);
  std::reverse(r.begin(), r.end());
  const auto b = build_interaction_dataset(r);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].user, b.train[i].user);
    EXPECT_EQ(a.train[i].item, b.train[i].item);
  }
  EXPECT_EQ(a.item_external, b.item_external);
}

TEST(Split, MinItemCountDropsRareItems) {
  LoadOptions opts;
  opts.min_item_count = 2;
  const auto ds = build_interaction_dataset(toy_ratings(), opts);
  for (std::int64_t ext : ds.item_external) EXPECT_TRUE(ext == 1 || ext == 3);
}

TEST(Split, SparsityAndUserTrainItems) {
  const auto ds = build_interaction_dataset(toy_ratings());
  const auto seen = ds.user_train_items();
  for (const auto& items : seen) EXPECT_TRUE(std::is_sorted(items.begin(), items.end()));
  EXPECT_NEAR(ds.sparsity(), 1.0 - 10.0 / (3.0 * ds.num_items), 1e-12);
}

TEST(MovieLensReader, ParsesRatingsAndGenres) {
  TempDir dir("ml");
  const auto ratings = dir.write("ratings.dat", "1::10::5::100\r\n1::20::3::200\n2::10::4::50\n\n");
  const auto movies = dir.write("movies.dat", "10::Heat (1995)::Action|Crime|Thriller\n20::Caf\xe9 (1990)::Drama\n");
  const auto data = load_movielens(ratings, movies);
  EXPECT_EQ(data.dataset.num_users, 2);
  EXPECT_EQ(data.dataset.num_items, 2);
  const Index heat = data.dataset.item_external[0] == 10 ? 0 : 1;
  EXPECT_TRUE(data.genres.has(heat, "Crime"));
  EXPECT_FALSE(data.genres.has(heat, "Drama"));
  EXPECT_EQ(data.genres.genres[1 - heat], std::vector<std::string>{"Drama"});
}

TEST(MovieLensReader, ReportsLineOfMalformedRating) {
  TempDir dir("ml_bad");
  const auto path = dir.write("ratings.dat", "1::10::5::100\n1::20::3::200\n1::x::3::300\n");
  try {
    read_movielens_ratings(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  const auto short_line = dir.write("short.dat", "1::10::5::100\n1::20::3\n");
  try {
    read_movielens_ratings(short_line);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(MovieLensReader, MissingFileIsDataError) {
  EXPECT_THROW(read_movielens_ratings("/nonexistent/ratings.dat"), DataError);
  EXPECT_THROW(read_movielens_genres("/nonexistent/movies.dat"), DataError);
}

TEST(MovieLensReader, MissingGenresAreFlagged) {
  TempDir dir("ml_missing");
  const auto ratings = dir.write("ratings.dat", "1::10::5::100\n1::99::3::200\n");
  const auto movies = dir.write("movies.dat", "10::A::Comedy\n");
  const auto data = load_movielens(ratings, movies);
  Index missing = 0;
  for (bool m : data.genres.missing) missing += m;
  EXPECT_EQ(missing, 1);
}

TEST(Relevance, DeterministicForSeed) {
  const auto a = generate_synthetic_relevance(500, 4000, 1.0, 7);
  const auto b = generate_synthetic_relevance(500, 4000, 1.0, 7);
  const auto c = generate_synthetic_relevance(500, 4000, 1.0, 8);
  ASSERT_EQ(a.train.size(), b.train.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    same = same && a.train[i].a == b.train[i].a && a.train[i].b == b.train[i].b &&
           a.train[i].score == b.train[i].score;
    differs = differs || i >= c.train.size() || a.train[i].score != c.train[i].score;
  }
  EXPECT_TRUE(same);
  EXPECT_TRUE(differs);
}

TEST(Relevance, PairsAreDistinctAndScoresBounded) {
  const auto ds = generate_synthetic_relevance(300, 5000, 1.0, 3);
  std::set<std::pair<Index, Index>> keys;
  auto add = [&](const RelevancePair& p) {
    EXPECT_NE(p.a, p.b);
    EXPECT_GE(p.score, -100.0f);
    EXPECT_LE(p.score, 100.0f);
    keys.insert({std::min(p.a, p.b), std::max(p.a, p.b)});
  };
  for (const auto& p : ds.train) add(p);
  for (const auto& p : ds.eval) add(p);
  EXPECT_EQ(keys.size(), ds.train.size() + ds.eval.size());
  EXPECT_EQ(ds.train.size() + ds.eval.size(), 5000u);
  EXPECT_EQ(ds.eval.size(), 500u);
}

TEST(Relevance, ZipfExponentShapesFrequencies) {
  const auto flat = generate_synthetic_relevance(400, 20000, 0.0, 11);
  const auto skewed = generate_synthetic_relevance(400, 20000, 1.0, 11);
  auto head_share = [](const RelevanceDataset& ds) {
    Index total = 0, head = 0;
    for (std::size_t i = 0; i < ds.item_frequency.size(); ++i) {
      total += ds.item_frequency[i];
      if (i < ds.item_frequency.size() / 10) head += ds.item_frequency[i];
    }
    return static_cast<double>(head) / static_cast<double>(total);
  };
  // Uniform sampling: the top 10% of items by frequency hold a little over 10%.
  EXPECT_LT(head_share(flat), 0.13);
  EXPECT_GT(head_share(skewed), 0.25);
  for (std::size_t i = 1; i < skewed.item_frequency.size(); ++i)
    EXPECT_GE(skewed.item_frequency[i - 1], skewed.item_frequency[i]);
}

TEST(Relevance, InfeasiblePairCountRejected) {
  EXPECT_THROW(generate_synthetic_relevance(10, 46, 1.0, 1), DataError);
  EXPECT_NO_THROW(generate_synthetic_relevance(10, 45, 1.0, 1));
}

TEST(Relevance, CsvRoundTrip) {
  TempDir dir("rel");
  const auto ds = generate_synthetic_relevance(100, 800, 1.0, 5);
  write_relevance_csv(ds, dir.file("rel.csv"));
  const auto back = read_relevance_csv(dir.file("rel.csv"));
  EXPECT_EQ(back.num_items, ds.num_items);
  ASSERT_EQ(back.train.size(), ds.train.size());
  ASSERT_EQ(back.eval.size(), ds.eval.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    EXPECT_EQ(back.train[i].a, ds.train[i].a);
    EXPECT_EQ(back.train[i].score, ds.train[i].score);
  }
}

TEST(Relevance, FrequencyHistogramCsv) {
  const std::string csv = frequency_histogram_csv({1, 100, 10});
  std::istringstream in(csv);
  std::string header, r1, r2, r3;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  std::getline(in, r3);
  EXPECT_EQ(header, "rank,frequency,log10_rank,log10_frequency");
  EXPECT_EQ(r1.substr(0, 6), "1,100,");
  EXPECT_EQ(r2.substr(0, 5), "2,10,");
  EXPECT_EQ(r3.substr(0, 4), "3,1,");
}

TEST(SyntheticInteractions, WritesLoadableMovieLensFiles) {
  TempDir dir("synth");
  SyntheticInteractionConfig cfg;
  cfg.num_users = 60;
  cfg.num_items = 80;
  const auto data = generate_synthetic_interactions(cfg);
  write_movielens_files(data, dir.path());
  const auto ml = load_movielens(dir.file("ratings.dat"), dir.file("movies.dat"));
  EXPECT_EQ(ml.dataset.num_users, 60);
  EXPECT_EQ(static_cast<Index>(ml.dataset.test.size()), 60);
  for (bool m : ml.genres.missing) EXPECT_FALSE(m);
  const auto again = generate_synthetic_interactions(cfg);
  ASSERT_EQ(again.ratings.size(), data.ratings.size());
  for (std::size_t i = 0; i < data.ratings.size(); ++i) EXPECT_EQ(again.ratings[i].item, data.ratings[i].item);
}
