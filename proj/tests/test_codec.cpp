#include "mgqe/codec/model_file.hpp"
#include "mgqe/embedding/factory.hpp"
#include "mgqe/eval/size.hpp"
#include "support.hpp"

#include <fstream>

using namespace mgqe;

namespace {

std::uint64_t le64(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}

SchemeConfig scheme(SchemeKind kind, MgqeVariant v = MgqeVariant::SharedVarK) {
  SchemeConfig sc;
  sc.kind = kind;
  sc.d = 8;
  sc.rank = 3;
  sc.bits = 5;
  sc.num_subspaces = 4;
  sc.num_centroids = 16;
  sc.variant = v;
  sc.tier_centroids = {16, 4};
  sc.tier_subspaces = {4, 2};
  sc.init_std = 0.1;
  return sc;
}

struct Case {
  std::string name;
  SchemeConfig sc;
};

std::vector<Case> all_schemes() {
  return {{"full", scheme(SchemeKind::Full)},
          {"lrf", scheme(SchemeKind::LowRank)},
          {"sq", scheme(SchemeKind::ScalarQuantized)},
          {"dpq", scheme(SchemeKind::Dpq)},
          {"mgqe_shared", scheme(SchemeKind::Mgqe, MgqeVariant::SharedVarK)},
          {"mgqe_varK", scheme(SchemeKind::Mgqe, MgqeVariant::UnsharedVarK)},
          {"mgqe_varD", scheme(SchemeKind::Mgqe, MgqeVariant::UnsharedVarD)}};
}

LoadedModel build(int kind, const SchemeConfig& sc, Rng& rng) {
  const Index users = 37, items = 53;
  switch (kind) {
    case 0:
      return GmfModel<float>(make_embedding<float>(sc, users, rng), make_embedding<float>(sc, items, rng), rng);
    case 1:
      return NeuMfModel<float>(make_embedding<float>(sc, users, rng), make_embedding<float>(sc, items, rng),
                               make_embedding<float>(sc, users, rng), make_embedding<float>(sc, items, rng), rng);
    default:
      return Item2ItemModel<float>(make_embedding<float>(sc, items, rng), rng);
  }
}

std::vector<std::uint8_t> encode_any(const LoadedModel& m) {
  return std::visit([](const auto& x) { return encode_model(x); }, m);
}

// 1000 random (left, right) id pairs, predicted in one call.
std::vector<float> probe(const LoadedModel& m) {
  return std::visit(
      [](const auto& x) {
        std::mt19937_64 g(77);
        const Index left = x.tables()[0]->vocab_size();
        const Index right = x.tables()[1 % x.tables().size()]->vocab_size();
        std::vector<Index> a(1000), b(1000);
        for (int i = 0; i < 1000; ++i) {
          a[i] = static_cast<Index>(g() % left);
          b[i] = static_cast<Index>(g() % right);
        }
        return x.predict(a, b);
      },
      m);
}

}  // namespace

TEST(BitStream, PacksLsbFirst) {
  BitWriter w;
  for (int c : {1, 2, 3, 4}) w.put(c, 4);
  EXPECT_EQ(w.bit_count(), 16u);
  EXPECT_EQ(w.bytes(), (std::vector<std::uint8_t>{0x21, 0x43}));
  BitWriter one;
  for (int c : {1, 0, 1, 1, 0, 0, 0, 0, 1}) one.put(c, 1);
  EXPECT_EQ(one.bytes(), (std::vector<std::uint8_t>{0x0D, 0x01}));
  BitReader r(w.bytes(), w.bit_count());
  EXPECT_EQ(r.get(4), 1u);
  EXPECT_EQ(r.get(8), 0x32u);
  EXPECT_EQ(r.get(4), 4u);
  EXPECT_THROW(r.get(1), CodecError);
}

TEST(BitStream, RandomWidthsRoundTrip) {
  std::mt19937_64 g(1);
  std::vector<std::pair<std::uint64_t, int>> fields;
  BitWriter w;
  for (int i = 0; i < 2000; ++i) {
    const int bits = static_cast<int>(g() % 17);
    const std::uint64_t v = bits ? g() & ((1ull << bits) - 1) : 0;
    fields.emplace_back(v, bits);
    w.put(v, bits);
  }
  BitReader r(w.bytes(), w.bit_count());
  for (const auto& [v, bits] : fields) EXPECT_EQ(r.get(bits), v);
}

TEST(ModelFile, DpqCodeStreamBytes) {
  // One item, D=4, K=16, codes (1,2,3,4).
  CodebookSet<float> cb(4, 4, 16);
  for (Index s = 0; s < 4; ++s)
    for (Index k = 0; k < 16; ++k) *cb.centroid(s, k) = static_cast<float>(k);
  Item2ItemModel<float> m(std::make_unique<DpqEmbedding<float>>(cb, std::vector<Code>{1, 2, 3, 4}, 1));
  m.freeze();
  ExportInfo info;
  const auto bytes = encode_model(m, &info);
  // header 16 | kind 1 | tables 4 | scheme 1 | n 8 | d 4 | D 4 | K 4 | 64 floats
  const std::size_t at = 16 + 1 + 4 + 1 + 8 + 4 + 4 + 4 + 64 * 4;
  EXPECT_EQ(le64(bytes, at), 16u);
  EXPECT_EQ(bytes[at + 8], 0x21);
  EXPECT_EQ(bytes[at + 9], 0x43);
  EXPECT_EQ(info.code_stream_bits, 16u);
  EXPECT_EQ(le64(bytes, 8), bytes.size());
}

TEST(ModelFile, OneBitCodesForTwoCentroids) {
  Rng rng(2);
  DpqEmbedding<float> dpq(10, 4, 2, 2, 0.1, rng);
  dpq.freeze();
  EXPECT_EQ(dpq.size_bits().code_bits_packed, 20u);
}

TEST(ModelFile, RoundTripAllSchemesAndModels) {
  for (int kind = 0; kind < 3; ++kind) {
    for (const auto& c : all_schemes()) {
      SCOPED_TRACE(c.name + " model " + std::to_string(kind));
      Rng rng(3);
      LoadedModel m = build(kind, c.sc, rng);
      std::visit([](auto& x) { x.freeze(); }, m);
      const auto first = encode_any(m);
      const LoadedModel back = decode_model(first);
      EXPECT_EQ(back.index(), m.index());
      EXPECT_EQ(encode_any(back), first);
      EXPECT_EQ(probe(back), probe(m));
      // Same state exported twice gives the same bytes.
      EXPECT_EQ(encode_any(m), first);
    }
  }
}

TEST(ModelFile, PackedSizeMatchesSizeReport) {
  for (const auto& c : all_schemes()) {
    SCOPED_TRACE(c.name);
    Rng rng(4);
    GmfModel<float> m(make_embedding<float>(c.sc, 37, rng), make_embedding<float>(c.sc, 53, rng), rng);
    m.freeze();
    ExportInfo info;
    const auto bytes = encode_model(m, &info);
    const auto report = size_report(m);
    EXPECT_EQ(packed_size_bits(m), report.total_packed());
    EXPECT_EQ(info.code_stream_bits, report.code_bits_packed());
    EXPECT_EQ(info.file_bytes, bytes.size());
    EXPECT_LT(info.payload_bits, 8 * bytes.size());
  }
}

TEST(ModelFile, ReferenceCodeStreams) {
  Rng rng(5);
  SchemeConfig sc;
  sc.kind = SchemeKind::Dpq;
  sc.d = 64;
  sc.num_subspaces = 8;
  sc.num_centroids = 256;
  Item2ItemModel<float> dpq(make_embedding<float>(sc, 1000, rng), rng);
  dpq.freeze();
  ExportInfo info;
  encode_model(dpq, &info);
  EXPECT_EQ(info.code_stream_bits, 64000u);

  sc.kind = SchemeKind::Mgqe;
  sc.tier_centroids = {256, 64};
  sc.tier_fractions = {0.1};
  Item2ItemModel<float> mg(make_embedding<float>(sc, 1000, rng), rng);
  mg.freeze();
  encode_model(mg, &info);
  EXPECT_EQ(info.code_stream_bits, 49600u);

  sc.kind = SchemeKind::Full;
  Item2ItemModel<float> full(make_embedding<float>(sc, 1000, rng), rng);
  full.freeze();
  encode_model(full, &info);
  EXPECT_EQ(info.payload_bits, 32u * 1000 * 64 + 32u * (64 + 1));
}

TEST(ModelFile, CorruptionIsDetected) {
  Rng rng(6);
  GmfModel<float> m(make_embedding<float>(scheme(SchemeKind::Mgqe), 20, rng),
                    make_embedding<float>(scheme(SchemeKind::Mgqe), 30, rng), rng);
  m.freeze();
  const auto good = encode_model(m);
  auto kind_of = [](std::vector<std::uint8_t> b) {
    try {
      decode_model(b);
    } catch (const CodecError& e) {
      return std::string(to_string(e.kind()));
    }
    return std::string("none");
  };
  EXPECT_EQ(kind_of(good), "none");
  auto bad = good;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), to_string(CodecErrorKind::BadMagic));
  bad = good;
  bad[4] = 9;
  EXPECT_EQ(kind_of(bad), to_string(CodecErrorKind::BadVersion));
  for (std::size_t pos : {std::size_t{20}, good.size() / 2, good.size() - 9, good.size() - 1}) {
    bad = good;
    bad[pos] ^= 0x10;
    EXPECT_EQ(kind_of(bad), to_string(CodecErrorKind::Checksum)) << pos;
  }
  bad.assign(good.begin(), good.end() - 5);
  EXPECT_EQ(kind_of(bad), to_string(CodecErrorKind::Truncated));
  bad.assign(good.begin(), good.begin() + 10);
  EXPECT_EQ(kind_of(bad), to_string(CodecErrorKind::Truncated));
  bad = good;
  bad.push_back(0);
  EXPECT_EQ(kind_of(bad), to_string(CodecErrorKind::Malformed));
}

TEST(ModelFile, ExportRequiresFrozenModel) {
  Rng rng(7);
  Item2ItemModel<float> m(make_embedding<float>(scheme(SchemeKind::Dpq), 10, rng), rng);
  EXPECT_THROW(encode_model(m), StateError);
}

TEST(ModelFile, FileRoundTripAndIoErrors) {
  mgqe::testing::TempDir dir("codec");
  Rng rng(8);
  Item2ItemModel<float> m(make_embedding<float>(scheme(SchemeKind::ScalarQuantized), 25, rng), rng);
  m.freeze();
  const auto path = dir.file("model.mgqe");
  const auto info = export_model(m, path);
  EXPECT_EQ(std::filesystem::file_size(path), info.file_bytes);
  const LoadedModel back = import_model(path);
  EXPECT_EQ(encode_any(back), encode_model(m));
  const auto again = dir.file("again.mgqe");
  std::visit([&](const auto& x) { export_model(x, again); }, back);
  EXPECT_EQ(read_file_bytes(path), read_file_bytes(again));
  try {
    import_model(dir.file("missing.mgqe"));
    FAIL();
  } catch (const CodecError& e) {
    EXPECT_EQ(e.kind(), CodecErrorKind::Io);
  }
  try {
    export_model(m, dir.file("no/such/dir/x.mgqe"));
    FAIL();
  } catch (const CodecError& e) {
    EXPECT_EQ(e.kind(), CodecErrorKind::Io);
  }
}

TEST(Checksum, Fnv1aKnownValues) {
  const std::string a = "a";
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(a.data()), 1)),
            0xaf63dc4c8601ec8cull);
}
