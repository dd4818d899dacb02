#pragma once

#include "mgqe/codec/bitstream.hpp"
#include "mgqe/embedding/dpq.hpp"
#include "mgqe/embedding/layer.hpp"
#include "mgqe/embedding/mgqe.hpp"
#include "mgqe/embedding/scalar_quantized.hpp"
#include "mgqe/models/gmf.hpp"
#include "mgqe/models/item2item.hpp"
#include "mgqe/models/neumf.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace mgqe {

// Serving file layout (all integers little-endian):
//   "MGQE" | u32 version | u64 file length | u8 model kind | u32 table count
//   per table: u8 scheme | u64 n | u32 d | scheme block
//     full:  f32[n*d]
//     lrf:   u32 r | f32[n*r] | f32[r*d]
//     sq:    u8 b | f32[d] min | f32[d] max | code stream (b-bit fields)
//     dpq:   u32 D | u32 K | f32[D*K*(d/D)] | code stream
//     mgqe:  u8 variant | u32 m | u64[m+1] bounds | u32[m] K | u32[m] D |
//            codebooks (1 if shared else m) | code stream
//   code stream: u64 bit count | ceil(bits/8) bytes, fields of
//                ceil(log2 K) bits, item-major then subspace-major, LSB-first
//   u32 dense count | per tensor: str name | u32 rows | u32 cols | f32[rows*cols]
//   u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t kModelFileVersion = 1;
inline constexpr std::array<std::uint8_t, 4> kModelMagic = {'M', 'G', 'Q', 'E'};

struct ExportInfo {
  std::uint64_t file_bytes = 0;
  std::uint64_t payload_bits = 0;  // tables, codes, codebooks, min/max, dense weights
  std::uint64_t code_stream_bits = 0;

  std::uint64_t overhead_bits() const { return 8 * file_bytes - payload_bits; }
};

namespace detail {

class ModelEncoder {
 public:
  ByteWriter out;
  ExportInfo info;

  template <typename Real>
  void floats(const Real* data, Index count) {
    for (Index i = 0; i < count; ++i) out.f32(static_cast<float>(data[i]));
    info.payload_bits += 32ull * static_cast<std::uint64_t>(count);
  }

  void stream(const BitWriter& bits) {
    out.u64(bits.bit_count());
    out.bytes(bits.bytes());
    info.payload_bits += bits.bit_count();
    info.code_stream_bits += bits.bit_count();
  }

  template <typename Real>
  void codebook(const CodebookSet<Real>& cb) {
    const auto& v = cb.parameter().value;
    floats(v.data(), v.size());
  }

  template <typename Real>
  void table(const EmbeddingLayer<Real>& layer) {
    if (!layer.frozen()) throw StateError("export requires a frozen model");
    out.u8(static_cast<std::uint8_t>(layer.kind()));
    out.u64(static_cast<std::uint64_t>(layer.vocab_size()));
    out.u32(static_cast<std::uint32_t>(layer.dim()));
    switch (layer.kind()) {
      case SchemeKind::Full: {
        const auto& t = dynamic_cast<const FullEmbedding<Real>&>(layer).table();
        floats(t.data(), t.size());
        break;
      }
      case SchemeKind::LowRank: {
        const auto& l = dynamic_cast<const LowRankEmbedding<Real>&>(layer);
        out.u32(static_cast<std::uint32_t>(l.rank()));
        floats(l.p().data(), l.p().size());
        floats(l.q().data(), l.q().size());
        break;
      }
      case SchemeKind::ScalarQuantized: {
        const auto& t = dynamic_cast<const ScalarQuantizedEmbedding<Real>&>(layer).table();
        out.u8(static_cast<std::uint8_t>(t.bits));
        floats(t.min.data(), static_cast<Index>(t.min.size()));
        floats(t.max.data(), static_cast<Index>(t.max.size()));
        BitWriter bits;
        for (std::uint16_t c : t.codes) bits.put(c, t.bits);
        stream(bits);
        break;
      }
      case SchemeKind::Dpq: {
        const auto& l = dynamic_cast<const DpqEmbedding<Real>&>(layer);
        const auto& cb = l.codebook();
        out.u32(static_cast<std::uint32_t>(cb.num_subspaces()));
        out.u32(static_cast<std::uint32_t>(cb.num_centroids()));
        codebook(cb);
        const int w = bits_for(static_cast<std::uint64_t>(cb.num_centroids()));
        BitWriter bits;
        for (Code c : l.codes()) bits.put(static_cast<std::uint64_t>(c), w);
        stream(bits);
        break;
      }
      case SchemeKind::Mgqe: {
        const auto& l = dynamic_cast<const MgqeEmbedding<Real>&>(layer);
        const TierPartition& p = l.partition();
        out.u8(static_cast<std::uint8_t>(p.variant));
        out.u32(static_cast<std::uint32_t>(p.num_tiers()));
        for (Index b : p.bounds) out.u64(static_cast<std::uint64_t>(b));
        for (Index k : p.K) out.u32(static_cast<std::uint32_t>(k));
        for (Index d : p.D) out.u32(static_cast<std::uint32_t>(d));
        for (Index c = 0; c < l.num_codebooks(); ++c) codebook(l.codebook(c));
        BitWriter bits;
        for (Index t = 0; t < p.num_tiers(); ++t) {
          const int w = bits_for(static_cast<std::uint64_t>(p.K[t]));
          for (Index i = p.begin(t); i < p.end(t); ++i)
            for (Code c : l.item_codes(i)) bits.put(static_cast<std::uint64_t>(c), w);
        }
        stream(bits);
        break;
      }
    }
  }
};

inline std::vector<float> read_floats(ByteReader& in, std::uint64_t count) {
  if (count > in.remaining() / 4) throw CodecError(CodecErrorKind::Malformed, "float block runs past end of payload");
  std::vector<float> v(count);
  for (float& x : v) x = in.f32();
  return v;
}

inline Matrix<float> read_matrix(ByteReader& in, Index rows, Index cols) {
  const auto v = read_floats(in, static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols));
  Matrix<float> m(rows, cols);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

inline CodebookSet<float> read_codebook(ByteReader& in, Index d, Index nsub, Index k) {
  if (nsub < 1 || k < 1 || d % nsub != 0) throw CodecError(CodecErrorKind::Malformed, "bad codebook shape");
  CodebookSet<float> cb(d, nsub, k);
  cb.parameter().value = read_matrix(in, nsub, k * (d / nsub));
  return cb;
}

inline std::unique_ptr<EmbeddingLayer<float>> read_table(ByteReader& in) {
  const std::uint8_t scheme = in.u8();
  const auto n = static_cast<Index>(in.u64());
  const auto d = static_cast<Index>(in.u32());
  if (n < 0 || d < 1) throw CodecError(CodecErrorKind::Malformed, "bad table shape");
  auto stream_bytes = [&](std::uint64_t expected_bits) {
    const std::uint64_t bits = in.u64();
    if (bits != expected_bits)
      throw CodecError(CodecErrorKind::Malformed, "code stream has " + std::to_string(bits) +
                                                      " bits, expected " + std::to_string(expected_bits));
    return std::make_pair(in.bytes((bits + 7) / 8), bits);
  };
  switch (scheme) {
    case static_cast<std::uint8_t>(SchemeKind::Full):
      return std::make_unique<FullEmbedding<float>>(read_matrix(in, n, d), true);
    case static_cast<std::uint8_t>(SchemeKind::LowRank): {
      const auto r = static_cast<Index>(in.u32());
      if (r < 1) throw CodecError(CodecErrorKind::Malformed, "bad rank");
      Matrix<float> p = read_matrix(in, n, r);
      Matrix<float> q = read_matrix(in, r, d);
      return std::make_unique<LowRankEmbedding<float>>(std::move(p), std::move(q), true);
    }
    case static_cast<std::uint8_t>(SchemeKind::ScalarQuantized): {
      ScalarQuantizedTable t;
      t.rows = n;
      t.cols = d;
      t.bits = in.u8();
      if (t.bits < 1 || t.bits > 16) throw CodecError(CodecErrorKind::Malformed, "bad bit width");
      t.min = read_floats(in, d);
      t.max = read_floats(in, d);
      const auto [bytes, bits] = stream_bytes(static_cast<std::uint64_t>(n * d) * t.bits);
      BitReader r(bytes, bits);
      t.codes.resize(static_cast<std::size_t>(n * d));
      for (auto& c : t.codes) c = static_cast<std::uint16_t>(r.get(t.bits));
      return std::make_unique<ScalarQuantizedEmbedding<float>>(std::move(t));
    }
    case static_cast<std::uint8_t>(SchemeKind::Dpq): {
      const auto nsub = static_cast<Index>(in.u32());
      const auto k = static_cast<Index>(in.u32());
      CodebookSet<float> cb = read_codebook(in, d, nsub, k);
      const int w = bits_for(static_cast<std::uint64_t>(k));
      const auto [bytes, bits] = stream_bytes(static_cast<std::uint64_t>(n * nsub) * w);
      BitReader r(bytes, bits);
      std::vector<Code> codes(static_cast<std::size_t>(n * nsub));
      for (Code& c : codes) {
        c = static_cast<Code>(r.get(w));
        if (c >= k) throw CodecError(CodecErrorKind::Malformed, "code exceeds centroid count");
      }
      return std::make_unique<DpqEmbedding<float>>(std::move(cb), std::move(codes), n);
    }
    case static_cast<std::uint8_t>(SchemeKind::Mgqe): {
      const std::uint8_t variant = in.u8();
      if (variant > 2) throw CodecError(CodecErrorKind::Malformed, "unknown MGQE variant");
      const auto m = static_cast<Index>(in.u32());
      if (m < 1 || static_cast<std::uint64_t>(m) > in.remaining()) throw CodecError(CodecErrorKind::Malformed, "bad tier count");
      TierPartition p;
      p.variant = static_cast<MgqeVariant>(variant);
      for (Index t = 0; t <= m; ++t) p.bounds.push_back(static_cast<Index>(in.u64()));
      for (Index t = 0; t < m; ++t) p.K.push_back(static_cast<Index>(in.u32()));
      for (Index t = 0; t < m; ++t) p.D.push_back(static_cast<Index>(in.u32()));
      try {
        p.validate(n, d);
      } catch (const DataError& e) {
        throw CodecError(CodecErrorKind::Malformed, e.what());
      }
      std::vector<CodebookSet<float>> books;
      const Index nbooks = p.shared() ? 1 : m;
      for (Index c = 0; c < nbooks; ++c) books.push_back(read_codebook(in, d, p.D[c], p.K[c]));
      std::uint64_t expected = 0;
      for (Index t = 0; t < m; ++t)
        expected += static_cast<std::uint64_t>(p.tier_size(t) * p.D[t]) * bits_for(static_cast<std::uint64_t>(p.K[t]));
      const auto [bytes, bits] = stream_bytes(expected);
      BitReader r(bytes, bits);
      std::vector<Code> codes;
      for (Index t = 0; t < m; ++t) {
        const int w = bits_for(static_cast<std::uint64_t>(p.K[t]));
        for (Index i = 0; i < p.tier_size(t) * p.D[t]; ++i) codes.push_back(static_cast<Code>(r.get(w)));
      }
      try {
        return std::make_unique<MgqeEmbedding<float>>(d, std::move(p), std::move(books), std::move(codes));
      } catch (const DataError& e) {
        throw CodecError(CodecErrorKind::Malformed, e.what());
      }
    }
    default:
      throw CodecError(CodecErrorKind::Malformed, "unknown scheme tag " + std::to_string(scheme));
  }
}

}  // namespace detail

/// Serializes a frozen model into the serving format.
template <typename Model>
std::vector<std::uint8_t> encode_model(const Model& model, ExportInfo* info = nullptr) {
  if (!model.frozen()) throw StateError("export requires a frozen model");
  detail::ModelEncoder enc;
  for (std::uint8_t b : kModelMagic) enc.out.u8(b);
  enc.out.u32(kModelFileVersion);
  const std::size_t length_at = enc.out.size();
  enc.out.u64(0);
  enc.out.u8(static_cast<std::uint8_t>(Model::kind));
  const auto tables = model.tables();
  enc.out.u32(static_cast<std::uint32_t>(tables.size()));
  for (const auto* t : tables) enc.table(*t);
  const auto dense = model.dense_parameters();
  enc.out.u32(static_cast<std::uint32_t>(dense.size()));
  for (const auto* p : dense) {
    enc.out.str(p->name);
    enc.out.u32(static_cast<std::uint32_t>(p->rows()));
    enc.out.u32(static_cast<std::uint32_t>(p->cols()));
    enc.floats(p->value.data(), p->value.size());
  }
  enc.out.patch_u64(length_at, enc.out.size() + 8);
  enc.out.u64(fnv1a64(enc.out.buffer()));
  enc.info.file_bytes = enc.out.size();
  if (info) *info = enc.info;
  return std::move(enc.out.buffer());
}

/// Payload bits of the serving file: everything except header fields, byte
/// padding of code streams and the checksum.
template <typename Model>
std::uint64_t packed_size_bits(const Model& model) {
  ExportInfo info;
  encode_model(model, &info);
  return info.payload_bits;
}

template <typename Model>
ExportInfo export_model(const Model& model, const std::filesystem::path& path) {
  ExportInfo info;
  const auto bytes = encode_model(model, &info);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CodecError(CodecErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CodecError(CodecErrorKind::Io, "failed writing '" + path.string() + "'");
  return info;
}

using LoadedModel = std::variant<GmfModel<float>, NeuMfModel<float>, Item2ItemModel<float>>;

/// Validates envelope fields (magic, version, length, checksum) in that order.
inline void check_envelope(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
    throw CodecError(CodecErrorKind::BadMagic, "not an MGQE model file");
  if (bytes.size() < 16) throw CodecError(CodecErrorKind::Truncated, "header incomplete");
  ByteReader head(bytes.subspan(4, 12));
  const std::uint32_t version = head.u32();
  if (version != kModelFileVersion)
    throw CodecError(CodecErrorKind::BadVersion, "file version " + std::to_string(version) + ", reader supports " +
                                                     std::to_string(kModelFileVersion));
  const std::uint64_t length = head.u64();
  if (bytes.size() < length || length < 24)
    throw CodecError(CodecErrorKind::Truncated,
                     "file has " + std::to_string(bytes.size()) + " bytes, header declares " + std::to_string(length));
  if (bytes.size() > length)
    throw CodecError(CodecErrorKind::Malformed, std::to_string(bytes.size() - length) + " trailing bytes");
  ByteReader tail(bytes.subspan(bytes.size() - 8));
  if (tail.u64() != fnv1a64(bytes.first(bytes.size() - 8)))
    throw CodecError(CodecErrorKind::Checksum, "content does not match stored checksum");
}

inline LoadedModel decode_model(std::span<const std::uint8_t> bytes) {
  check_envelope(bytes);
  ByteReader in(bytes.subspan(16, bytes.size() - 24));
  const std::uint8_t kind = in.u8();
  const std::uint32_t ntables = in.u32();
  const std::uint32_t expected_tables = kind == 0 ? 2 : kind == 1 ? 4 : kind == 2 ? 1 : 0;
  if (expected_tables == 0) throw CodecError(CodecErrorKind::Malformed, "unknown model kind");
  if (ntables != expected_tables) throw CodecError(CodecErrorKind::Malformed, "wrong table count for model kind");
  std::vector<std::unique_ptr<EmbeddingLayer<float>>> tables;
  for (std::uint32_t t = 0; t < ntables; ++t) tables.push_back(detail::read_table(in));

  auto fill_dense = [&](auto& model) {
    const auto params = model.dense_parameters();
    if (in.u32() != params.size()) throw CodecError(CodecErrorKind::Malformed, "dense tensor count mismatch");
    for (auto* p : params) {
      const std::string name = in.str();
      const auto rows = static_cast<Index>(in.u32());
      const auto cols = static_cast<Index>(in.u32());
      if (name != p->name || rows != p->rows() || cols != p->cols())
        throw CodecError(CodecErrorKind::Malformed, "dense tensor '" + name + "' does not fit the architecture");
      p->value = detail::read_matrix(in, rows, cols);
    }
    if (in.remaining() != 0) throw CodecError(CodecErrorKind::Malformed, "unexpected bytes after dense weights");
  };

  try {
    switch (kind) {
      case 0: {
        GmfModel<float> m(std::move(tables[0]), std::move(tables[1]));
        fill_dense(m);
        return m;
      }
      case 1: {
        NeuMfModel<float> m(std::move(tables[0]), std::move(tables[1]), std::move(tables[2]), std::move(tables[3]));
        fill_dense(m);
        return m;
      }
      default: {
        Item2ItemModel<float> m(std::move(tables[0]));
        fill_dense(m);
        return m;
      }
    }
  } catch (const DataError& e) {
    throw CodecError(CodecErrorKind::Malformed, e.what());
  }
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodecError(CodecErrorKind::Io, "cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline LoadedModel import_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

}  // namespace mgqe
