#include "mgqe/embedding/factory.hpp"
#include "mgqe/models/gmf.hpp"
#include "mgqe/models/item2item.hpp"
#include "mgqe/train/trainer.hpp"
#include "support.hpp"

#include <set>
#include <sstream>

using namespace mgqe;

namespace {

// 4 users x 4 items; user u likes items u and u+1 (mod 4).
InteractionDataset toy() {
  InteractionDataset ds;
  ds.num_users = 4;
  ds.num_items = 4;
  for (Index u = 0; u < 4; ++u) {
    ds.train.push_back({u, u, 0});
    ds.train.push_back({u, (u + 1) % 4, 1});
  }
  ds.item_frequency.assign(4, 2);
  ds.user_frequency.assign(4, 2);
  return ds;
}

InteractionDataset random_dataset(Index users, Index items, Index per_user, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  InteractionDataset ds;
  ds.num_users = users;
  ds.num_items = items;
  for (Index u = 0; u < users; ++u) {
    std::set<Index> chosen;
    std::uniform_int_distribution<Index> pick(0, items - 1);
    while (static_cast<Index>(chosen.size()) < per_user) chosen.insert(pick(g));
    for (Index i : chosen) ds.train.push_back({u, i, 0});
  }
  return ds;
}

GmfModel<float> make_gmf(SchemeKind kind, Index users, Index items, Index d, std::uint64_t seed) {
  Rng rng(seed);
  SchemeConfig sc;
  sc.kind = kind;
  sc.d = d;
  sc.num_subspaces = d;
  sc.num_centroids = 16;
  sc.tier_centroids = {16, 4};
  sc.tier_fractions = {0.25};
  auto u = make_embedding<float>(sc, users, rng);
  auto i = make_embedding<float>(sc, items, rng);
  return GmfModel<float>(std::move(u), std::move(i), rng);
}

std::vector<Matrix<float>> snapshot(GmfModel<float>& m) {
  ParameterList<float> ps;
  m.parameters(ps);
  std::vector<Matrix<float>> out;
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

}  // namespace

TEST(NegativeSampling, NeverReturnsSeenItems) {
  Rng rng(1);
  std::vector<Index> out;
  const std::vector<Index> sparse{2, 5, 7};
  const std::vector<Index> dense{0, 1, 2, 3, 4, 5, 6, 8, 9};  // only 7 is free
  for (int rep = 0; rep < 200; ++rep) {
    sample_negatives(sparse, 20, 4, rng, out);
    ASSERT_EQ(out.size(), 4u);
    for (Index j : out) EXPECT_FALSE(std::binary_search(sparse.begin(), sparse.end(), j));
    sample_negatives(dense, 10, 3, rng, out);
    EXPECT_EQ(out, (std::vector<Index>{7, 7, 7}));
  }
  const std::vector<Index> all{0, 1, 2};
  sample_negatives(all, 3, 4, rng, out);
  EXPECT_TRUE(out.empty());
}

TEST(NegativeSampling, DenseUsersSampleUniformly) {
  Rng rng(2);
  std::vector<Index> seen;
  for (Index i = 0; i < 90; ++i) seen.push_back(i);  // 10 of 100 free
  std::vector<Index> counts(100, 0), out;
  for (int rep = 0; rep < 2000; ++rep) {
    sample_negatives(seen, 100, 5, rng, out);
    for (Index j : out) ++counts[j];
  }
  for (Index j = 90; j < 100; ++j) {
    EXPECT_GT(counts[j], 800);
    EXPECT_LT(counts[j], 1200);
  }
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  for (auto kind : {SchemeKind::Full, SchemeKind::Mgqe}) {
    auto model = make_gmf(kind, 30, 40, 8, 3);
    const auto before = snapshot(model);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.batch_size = 16;
    Trainer<GmfModel<float>> t(model, cfg);
    Rng rng(4);
    t.train_epoch(random_dataset(30, 40, 5, 5), rng);
    const auto after = snapshot(model);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t p = 0; p < before.size(); ++p) EXPECT_EQ(before[p], after[p]) << to_string(kind);
  }
}

TEST(Trainer, SameSeedGivesIdenticalRuns) {
  const auto ds = random_dataset(50, 60, 6, 6);
  std::vector<std::vector<Matrix<float>>> params;
  std::vector<std::vector<double>> losses;
  for (int run = 0; run < 2; ++run) {
    auto model = make_gmf(SchemeKind::Mgqe, 50, 60, 8, 7);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.01;
    Trainer<GmfModel<float>> t(model, cfg);
    Rng rng(8);
    std::vector<double> l;
    for (int e = 0; e < 3; ++e) {
      const auto s = t.train_epoch(ds, rng);
      l.push_back(s.task_loss);
      l.push_back(s.vq_loss);
    }
    losses.push_back(l);
    params.push_back(snapshot(model));
  }
  EXPECT_EQ(losses[0], losses[1]);
  ASSERT_EQ(params[0].size(), params[1].size());
  for (std::size_t p = 0; p < params[0].size(); ++p) EXPECT_EQ(params[0][p], params[1][p]);
}

TEST(Trainer, ToyLossFallsBelowTenPercent) {
  for (auto kind : {SchemeKind::Full, SchemeKind::Dpq}) {
    auto model = make_gmf(kind, 4, 4, 8, 9);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.05;
    cfg.negatives_per_positive = 2;
    Trainer<GmfModel<float>> t(model, cfg);
    Rng rng(10);
    const auto ds = toy();
    double first = 0, last = 0;
    for (int e = 0; e < 50; ++e) {
      const double loss = t.train_epoch(ds, rng).task_loss;
      if (e == 0) first = loss;
      last = loss;
    }
    EXPECT_LT(last, 0.1 * first) << to_string(kind) << " first=" << first << " last=" << last;
  }
}

TEST(Trainer, RegressionEpochReducesSquaredError) {
  Rng rng(11);
  Item2ItemModel<float> m(std::make_unique<FullEmbedding<float>>(20, 8, 0.1, rng), rng);
  RelevanceDataset ds;
  ds.num_items = 20;
  for (Index a = 0; a < 20; ++a)
    for (Index b = a + 1; b < 20; ++b) ds.train.push_back({a, b, static_cast<float>((a % 3) - (b % 2))});
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.02;
  Trainer<Item2ItemModel<float>> t(m, cfg);
  const double first = t.train_epoch(ds, rng).task_loss;
  double last = first;
  for (int e = 0; e < 30; ++e) last = t.train_epoch(ds, rng).task_loss;
  EXPECT_LT(last, 0.5 * first);
}

TEST(Trainer, VqLossReportedOnlyForQuantizedTables) {
  const auto ds = random_dataset(10, 12, 3, 12);
  for (auto kind : {SchemeKind::Full, SchemeKind::LowRank, SchemeKind::Dpq}) {
    auto model = make_gmf(kind, 10, 12, 8, 13);
    Trainer<GmfModel<float>> t(model, TrainConfig{});
    Rng rng(14);
    const auto s = t.train_epoch(ds, rng);
    if (kind == SchemeKind::Dpq) {
      EXPECT_GT(s.vq_loss, 0.0);
    } else {
      EXPECT_EQ(s.vq_loss, 0.0);
    }
  }
}

TEST(VqLoss, FixedPointAndZeroBeta) {
  std::mt19937_64 g(15);
  const auto e = mgqe::testing::random_matrix<float>(4, 6, g);
  const auto same = vq_loss(e, e, 0.25);
  EXPECT_EQ(same.loss, 0.0);
  EXPECT_TRUE(same.grad_raw.isZero(0.0f));
  EXPECT_TRUE(same.grad_q.isZero(0.0f));
  const auto q = mgqe::testing::random_matrix<float>(4, 6, g);
  const auto nob = vq_loss(e, q, 0.0);
  EXPECT_TRUE(nob.grad_raw.isZero(0.0f));
  EXPECT_FALSE(nob.grad_q.isZero(0.0f));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter<double> p("w", 1, 3);
  p.value << 1.0, -2.0, 0.5;
  p.grad << 0.3, -4.0, 0.0;
  ParameterList<double> ps{&p};
  Adam<double> adam(ps, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  adam.step();
  // Bias-corrected first step is lr * g / (|g| + eps').
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.1, 1e-6);
  EXPECT_NEAR(p.value(0, 1), -2.0 + 0.1, 1e-6);
  EXPECT_EQ(p.value(0, 2), 0.5);
  EXPECT_TRUE(p.grad.isZero(0.0));
}

TEST(Adam, SparseRowsUpdateOnlyWhenTouched) {
  Parameter<double> p("table", 3, 2, true);
  p.value.setOnes();
  ParameterList<double> ps{&p};
  Adam<double> adam(ps, AdamConfig{0.1});
  p.grad(1, 0) = 1.0;
  p.touch(1);
  adam.step();
  EXPECT_EQ(p.value(0, 0), 1.0);
  EXPECT_EQ(p.value(2, 1), 1.0);
  EXPECT_NE(p.value(1, 0), 1.0);
  // Row 1 has momentum but is not touched in step 2: it stays put.
  const double r1 = p.value(1, 0);
  p.grad(0, 0) = 1.0;
  p.touch(0);
  adam.step();
  EXPECT_EQ(p.value(1, 0), r1);
  EXPECT_NE(p.value(0, 0), 1.0);
}

TEST(EpochCsv, HeaderAndRow) {
  std::ostringstream out;
  write_epoch_header(out);
  write_epoch_row(out, EpochStats{3, 0.5, 0.25, 12.0});
  EXPECT_EQ(out.str(), "epoch,task_loss,vq_loss,wall_ms\n3,0.5,0.25,12\n");
}
