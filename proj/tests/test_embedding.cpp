#include "mgqe/embedding/dpq.hpp"
#include "mgqe/embedding/factory.hpp"
#include "mgqe/embedding/mgqe.hpp"
#include "mgqe/embedding/scalar_quantized.hpp"
#include "support.hpp"

#include <map>

using namespace mgqe;

namespace {

std::vector<Index> iota_ids(Index n) {
  std::vector<Index> ids(n);
  for (Index i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

TierPartition two_tiers(Index n, Index head, MgqeVariant v, std::vector<Index> K, std::vector<Index> D) {
  TierPartition p;
  p.bounds = {0, head, n};
  p.K = std::move(K);
  p.D = std::move(D);
  p.variant = v;
  return p;
}

}  // namespace

TEST(FullEmbedding, LookupAndSparseGradient) {
  Rng rng(1);
  FullEmbedding<float> e(10, 4, 0.01, rng);
  const std::vector<Index> ids{3, 7, 3};
  LookupContext<float> ctx;
  const auto out = e.forward(ids, ctx);
  for (int b = 0; b < 3; ++b) EXPECT_EQ(out.row(b), e.table().row(ids[b]));
  Matrix<float> up = Matrix<float>::Ones(3, 4);
  e.backward(ctx, up);
  ParameterList<float> ps;
  e.parameters(ps);
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0]->grad(3, 0), 2.0f);
  EXPECT_EQ(ps[0]->grad(7, 2), 1.0f);
  EXPECT_EQ(ps[0]->grad(0, 0), 0.0f);
  EXPECT_EQ(ps[0]->unique_touched(), (std::vector<Index>{3, 7}));
}

TEST(FullEmbedding, RejectsOutOfRangeIds) {
  FullEmbedding<float> e(5, 2);
  const std::vector<Index> bad{5};
  EXPECT_THROW(e.lookup(bad), DataError);
  const std::vector<Index> neg{-1};
  EXPECT_THROW(e.lookup(neg), DataError);
}

TEST(LowRank, IdentityFactorMatchesFullTable) {
  std::mt19937_64 g(3);
  const Matrix<float> p = mgqe::testing::random_matrix<float>(20, 6, g);
  LowRankEmbedding<float> lr(p, Matrix<float>::Identity(6, 6));
  FullEmbedding<float> full(p);
  const auto ids = iota_ids(20);
  EXPECT_EQ(lr.lookup(ids), full.lookup(ids));
}

TEST(LowRank, FreezeKeepsProduct) {
  Rng rng(4);
  LowRankEmbedding<float> lr(30, 8, 3, 0.01, rng);
  const auto ids = iota_ids(30);
  const Matrix<float> before = lr.lookup(ids);
  lr.freeze();
  EXPECT_TRUE(lr.frozen());
  EXPECT_EQ(lr.lookup(ids), before);
  LookupContext<float> ctx;
  lr.forward(ids, ctx);
  EXPECT_THROW(lr.backward(ctx, Matrix<float>::Zero(30, 8)), StateError);
}

TEST(Dpq, StraightThroughPassesUpstreamGradientUnchanged) {
  Rng rng(5);
  DpqEmbedding<float> dpq(12, 8, 4, 16, 0.01, rng);
  const std::vector<Index> ids{0, 5, 11};
  LookupContext<float> ctx;
  dpq.forward(ids, ctx);
  std::mt19937_64 g(6);
  const Matrix<float> up = mgqe::testing::random_matrix<float>(3, 8, g);
  dpq.backward(ctx, up);
  for (int b = 0; b < 3; ++b)
    for (int j = 0; j < 8; ++j) EXPECT_EQ(dpq.raw_parameter().grad(ids[b], j), up(b, j));
  // Codebooks only learn through the quantization loss.
  EXPECT_TRUE(dpq.codebook().parameter().grad.isZero(0.0f));
}

TEST(Dpq, ForwardIsNearestCentroidOfRawRow) {
  Rng rng(7);
  DpqEmbedding<double> dpq(40, 8, 4, 8, 0.01, rng);
  const auto ids = iota_ids(40);
  LookupContext<double> ctx;
  const auto out = dpq.forward(ids, ctx);
  const std::vector<Index> limit(4, 8);
  for (Index i = 0; i < 40; ++i) {
    const auto codes = quantize<double>({dpq.raw().data() + i * 8, 8}, dpq.codebook(), limit);
    for (Index s = 0; s < 4; ++s) EXPECT_EQ(ctx.codes[i * 4 + s], codes[s]);
    std::vector<double> dec(8);
    dpq.codebook().decode(codes, dec);
    for (Index j = 0; j < 8; ++j) EXPECT_EQ(out(i, j), dec[j]);
  }
}

TEST(Dpq, FreezeCachesCodesAndDropsRawTable) {
  Rng rng(8);
  DpqEmbedding<float> dpq(50, 16, 16, 32, 0.01, rng);
  const auto ids = iota_ids(50);
  const Matrix<float> training = dpq.lookup(ids);
  dpq.freeze();
  EXPECT_EQ(dpq.raw().size(), 0);
  EXPECT_EQ(dpq.codes().size(), 50u * 16u);
  EXPECT_EQ(dpq.lookup(ids), training);
  ParameterList<float> ps;
  dpq.parameters(ps);
  EXPECT_TRUE(ps.empty());
}

TEST(Mgqe, SingleTierIsCodeForCodeDpq) {
  for (Index D : {4, 16}) {
    Rng a(11), b(11);
    DpqEmbedding<float> dpq(60, 16, D, 32, 0.01, a);
    TierPartition one;
    one.bounds = {0, 60};
    one.K = {32};
    one.D = {D};
    MgqeEmbedding<float> mg(60, 16, one, 0.01, b);
    const auto ids = iota_ids(60);
    LookupContext<float> c1, c2;
    EXPECT_EQ(dpq.forward(ids, c1), mg.forward(ids, c2));
    EXPECT_EQ(c1.codes, c2.codes);
    dpq.freeze();
    mg.freeze();
    EXPECT_EQ(dpq.codes(), mg.codes());
    EXPECT_EQ(dpq.lookup(ids), mg.lookup(ids));
  }
}

TEST(Mgqe, TailTierUsesOnlyItsCentroidPrefix) {
  Rng rng(12);
  MgqeEmbedding<float> mg(100, 8, two_tiers(100, 10, MgqeVariant::SharedVarK, {16, 4}, {8, 8}), 0.01, rng);
  mg.freeze();
  for (Index i = 0; i < 100; ++i)
    for (Code c : mg.item_codes(i)) EXPECT_LT(c, i < 10 ? 16 : 4);
}

TEST(Mgqe, GroupWiseLookupMatchesPerItemMap) {
  const std::vector<std::pair<MgqeVariant, TierPartition>> cases{
      {MgqeVariant::SharedVarK, two_tiers(90, 20, MgqeVariant::SharedVarK, {16, 4}, {8, 8})},
      {MgqeVariant::UnsharedVarK, two_tiers(90, 20, MgqeVariant::UnsharedVarK, {16, 4}, {8, 8})},
      {MgqeVariant::UnsharedVarD, two_tiers(90, 20, MgqeVariant::UnsharedVarD, {16, 16}, {8, 2})}};
  for (const auto& [variant, part] : cases) {
    Rng rng(13);
    MgqeEmbedding<float> mg(90, 8, part, 0.01, rng);
    std::mt19937_64 g(14);
    std::uniform_int_distribution<Index> pick(0, 89);
    std::vector<Index> ids(200);
    for (auto& id : ids) id = pick(g);
    for (bool frozen : {false, true}) {
      if (frozen) mg.freeze();
      const Matrix<float> batch = mg.lookup(ids);
      // Per-item reference: one id at a time, cached in a map.
      std::map<Index, Matrix<float>> single;
      for (Index id : ids) {
        if (!single.count(id)) single[id] = mg.lookup(std::vector<Index>{id});
      }
      for (std::size_t b = 0; b < ids.size(); ++b)
        EXPECT_EQ(batch.row(b), single[ids[b]].row(0)) << to_string(variant) << " frozen=" << frozen;
      if (frozen) {
        for (Index id : ids) {
          const Index t = part.tier_of(id);
          std::vector<float> dec(8);
          mg.codebook(part.shared() ? 0 : t).decode(mg.item_codes(id), dec);
          for (Index j = 0; j < 8; ++j) EXPECT_EQ(single[id](0, j), dec[j]);
        }
      }
    }
  }
}

TEST(Mgqe, VariantValidation) {
  Rng rng(15);
  EXPECT_THROW(MgqeEmbedding<float>(10, 8, two_tiers(10, 2, MgqeVariant::SharedVarK, {4, 8}, {8, 8}), 0.01, rng),
               DataError);
  EXPECT_THROW(MgqeEmbedding<float>(10, 8, two_tiers(10, 2, MgqeVariant::UnsharedVarD, {4, 2}, {8, 4}), 0.01, rng),
               DataError);
  EXPECT_THROW(MgqeEmbedding<float>(10, 8, two_tiers(10, 2, MgqeVariant::SharedVarK, {4, 2}, {8, 3}), 0.01, rng),
               DataError);
}

TEST(Partition, FractionsRoundToNearest) {
  const std::vector<double> f{0.10};
  const auto p = TierPartition::from_fractions(3416, 64, f, {256, 64}, {64, 64}, MgqeVariant::SharedVarK);
  EXPECT_EQ(p.bounds, (std::vector<Index>{0, 342, 3416}));
  EXPECT_EQ(p.tier_of(341), 0);
  EXPECT_EQ(p.tier_of(342), 1);
  EXPECT_EQ(p.tier_of(3415), 1);
}

TEST(ScalarQuantizedEmbedding, FrozenLookupIsDequantizedTable) {
  Rng rng(16);
  ScalarQuantizedEmbedding<float> sq(40, 8, 4, 0.01, rng);
  const auto ids = iota_ids(40);
  const Matrix<float> raw = sq.lookup(ids);
  sq.freeze();
  const Matrix<float> deq = sq.lookup(ids);
  const auto& t = sq.table();
  for (Index i = 0; i < 40; ++i)
    for (Index j = 0; j < 8; ++j) {
      EXPECT_EQ(deq(i, j), static_cast<float>(t.dequantize(i, j)));
      EXPECT_LE(std::abs(t.dequantize(i, j) - static_cast<double>(raw(i, j))), t.error_bound(j) * (1 + 1e-6));
    }
}

TEST(Factory, BuildsEveryScheme) {
  Rng rng(17);
  SchemeConfig cfg;
  cfg.d = 16;
  cfg.num_subspaces = 4;
  cfg.num_centroids = 16;
  cfg.rank = 4;
  cfg.tier_centroids = {16, 4};
  for (auto kind : {SchemeKind::Full, SchemeKind::LowRank, SchemeKind::ScalarQuantized, SchemeKind::Dpq, SchemeKind::Mgqe}) {
    cfg.kind = kind;
    auto layer = make_embedding<float>(cfg, 50, rng);
    EXPECT_EQ(layer->kind(), kind);
    EXPECT_EQ(layer->vocab_size(), 50);
    EXPECT_EQ(layer->dim(), 16);
    layer->freeze();
    const EmbeddingBits a = layer->size_bits();
    const EmbeddingBits b = config_size_bits(cfg, 50);
    EXPECT_EQ(a.total_packed(), b.total_packed()) << to_string(kind);
    EXPECT_DOUBLE_EQ(a.total_exact(), b.total_exact()) << to_string(kind);
  }
}

TEST(Factory, CloneIsIndependent) {
  Rng rng(18);
  SchemeConfig cfg;
  cfg.kind = SchemeKind::Mgqe;
  cfg.d = 8;
  cfg.num_subspaces = 8;
  cfg.tier_centroids = {8, 4};
  auto layer = make_embedding<float>(cfg, 30, rng);
  auto copy = layer->clone();
  const auto ids = iota_ids(30);
  EXPECT_EQ(layer->lookup(ids), copy->lookup(ids));
  copy->freeze();
  EXPECT_FALSE(layer->frozen());
}
