#pragma once

#include "mgqe/codec/model_file.hpp"
#include "mgqe/config.hpp"
#include "mgqe/data/interactions.hpp"
#include "mgqe/data/relevance.hpp"
#include "mgqe/embedding/factory.hpp"
#include "mgqe/eval/metrics.hpp"
#include "mgqe/eval/size.hpp"
#include "mgqe/models/gmf.hpp"
#include "mgqe/models/item2item.hpp"
#include "mgqe/models/neumf.hpp"
#include "mgqe/train/trainer.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace mgqe {

using AnyModel = LoadedModel;

/// Builds an untrained model. Embedding tables are initialised first (user
/// then item, GMF tower before MLP tower), then dense weights.
inline AnyModel build_model(const ExperimentConfig& cfg, Index num_users, Index num_items, Rng& rng) {
  cfg.validate();
  const SchemeConfig sc = cfg.scheme_config();
  if (cfg.model == "gmf") {
    auto u = make_embedding<float>(sc, num_users, rng);
    auto i = make_embedding<float>(sc, num_items, rng);
    return GmfModel<float>(std::move(u), std::move(i), rng);
  }
  if (cfg.model == "neumf") {
    auto gu = make_embedding<float>(sc, num_users, rng);
    auto gi = make_embedding<float>(sc, num_items, rng);
    auto mu = make_embedding<float>(sc, num_users, rng);
    auto mi = make_embedding<float>(sc, num_items, rng);
    return NeuMfModel<float>(std::move(gu), std::move(gi), std::move(mu), std::move(mi), rng);
  }
  auto items = make_embedding<float>(sc, num_items, rng);
  return Item2ItemModel<float>(std::move(items), rng);
}

/// Default data root: the config's data_dir, else $MGQE_DATA_DIR, else ./data.
inline std::filesystem::path data_root(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("MGQE_DATA_DIR"); env && *env) return env;
  return "data";
}

struct MovieLensPaths {
  std::filesystem::path ratings;
  std::filesystem::path movies;
};

/// Looks for `ratings.dat` and `movies.dat` under `dir` or `dir/ml-1m`.
inline std::optional<MovieLensPaths> find_movielens(const std::filesystem::path& dir) {
  for (const auto& base : {dir / "ml-1m", dir}) {
    MovieLensPaths p{base / "ratings.dat", base / "movies.dat"};
    if (std::filesystem::exists(p.ratings) && std::filesystem::exists(p.movies)) return p;
  }
  return std::nullopt;
}

inline MovieLensData load_movielens_dir(const std::filesystem::path& dir, Index min_item_count = 0) {
  const auto paths = find_movielens(dir);
  if (!paths)
    throw DataError("no ratings.dat/movies.dat under '" + dir.string() +
                    "' (or its ml-1m/ subdirectory); run prepare-data or synth-data first");
  LoadOptions opts;
  opts.min_item_count = min_item_count;
  return load_movielens(paths->ratings.string(), paths->movies.string(), opts);
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains a fresh model for `cfg.epochs` epochs on implicit feedback.
inline AnyModel train_item_rec(const ExperimentConfig& cfg, const InteractionDataset& ds,
                               const EpochCallback& on_epoch = {}) {
  Rng rng(cfg.seed);
  AnyModel model = build_model(cfg, ds.num_users, ds.num_items, rng);
  std::visit(
      [&](auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (M::kind == ModelKind::Item2Item) {
          throw UsageError("item-rec training needs a user-item model");
        } else {
          Trainer<M> trainer(m, cfg.train_config());
          for (Index e = 0; e < cfg.epochs; ++e) {
            const EpochStats s = trainer.train_epoch(ds, rng);
            if (on_epoch) on_epoch(s);
          }
        }
      },
      model);
  return model;
}

/// Trains an item-pair regressor; the output bias starts at the train mean.
inline AnyModel train_item2item(const ExperimentConfig& cfg, const RelevanceDataset& ds,
                                const EpochCallback& on_epoch = {}) {
  Rng rng(cfg.seed);
  AnyModel model = build_model(cfg, 0, ds.num_items, rng);
  auto* m = std::get_if<Item2ItemModel<float>>(&model);
  if (!m) throw UsageError("item2item training needs model i2i");
  m->bias() = static_cast<float>(ds.train_mean());
  Trainer<Item2ItemModel<float>> trainer(*m, cfg.train_config());
  for (Index e = 0; e < cfg.epochs; ++e) {
    const EpochStats s = trainer.train_epoch(ds, rng);
    if (on_epoch) on_epoch(s);
  }
  return model;
}

inline void freeze(AnyModel& m) {
  std::visit([](auto& x) { x.freeze(); }, m);
}
inline SizeReport size_report(const AnyModel& m) {
  return std::visit([](const auto& x) { return size_report(x); }, m);
}
inline std::vector<std::uint8_t> encode_model(const AnyModel& m, ExportInfo* info = nullptr) {
  return std::visit([&](const auto& x) { return encode_model(x, info); }, m);
}
inline ExportInfo export_model(const AnyModel& m, const std::filesystem::path& path) {
  return std::visit([&](const auto& x) { return export_model(x, path); }, m);
}
inline RankingReport evaluate_ranking(const AnyModel& m, const InteractionDataset& ds, Index k) {
  return std::visit(
      [&](const auto& x) -> RankingReport {
        using M = std::decay_t<decltype(x)>;
        if constexpr (M::kind == ModelKind::Item2Item) {
          throw UsageError("ranking evaluation needs a user-item model");
        } else {
          return evaluate_ranking(x, ds, k);
        }
      },
      m);
}
inline double evaluate_rmse(const AnyModel& m, const RelevanceDataset& ds) {
  const auto* x = std::get_if<Item2ItemModel<float>>(&m);
  if (!x) throw UsageError("RMSE evaluation needs an item2item model");
  return evaluate_rmse(*x, ds);
}
/// The item-side embedding table used for code analysis.
inline const EmbeddingLayer<float>& item_table(const AnyModel& m) {
  return std::visit(
      [](const auto& x) -> const EmbeddingLayer<float>& {
        using M = std::decay_t<decltype(x)>;
        if constexpr (M::kind == ModelKind::NeuMf) {
          return *x.tables()[1];
        } else {
          return x.item_embedding();
        }
      },
      m);
}

// Training checkpoint: "MGQT" | u32 version | str config | u64 users |
// u64 items | u32 tensor count | per tensor: str name | u32 rows | u32 cols |
// f32 values | u64 FNV-1a of everything before.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ExperimentConfig config;
  Index num_users = 0;
  Index num_items = 0;
  AnyModel model;
};

inline std::vector<std::uint8_t> encode_checkpoint(const ExperimentConfig& cfg, Index num_users, Index num_items,
                                                   AnyModel& model) {
  ParameterList<float> params;
  std::visit([&](auto& m) {
    if (m.frozen()) throw StateError("checkpoints hold training state; model is already frozen");
    m.parameters(params);
  }, model);
  ByteWriter out;
  for (char c : std::string("MGQT")) out.u8(static_cast<std::uint8_t>(c));
  out.u32(kCheckpointVersion);
  out.str(cfg.to_text());
  out.u64(static_cast<std::uint64_t>(num_users));
  out.u64(static_cast<std::uint64_t>(num_items));
  out.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    out.str(p->name);
    out.u32(static_cast<std::uint32_t>(p->rows()));
    out.u32(static_cast<std::uint32_t>(p->cols()));
    for (Index i = 0; i < p->value.size(); ++i) out.f32(p->value.data()[i]);
  }
  out.u64(fnv1a64(out.buffer()));
  return std::move(out.buffer());
}

inline void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg, Index num_users,
                            Index num_items, AnyModel& model) {
  const auto bytes = encode_checkpoint(cfg, num_users, num_items, model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CodecError(CodecErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CodecError(CodecErrorKind::Io, "failed writing '" + path.string() + "'");
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "MGQT")
    throw CodecError(CodecErrorKind::BadMagic, "not a training checkpoint");
  if (bytes.size() < 16) throw CodecError(CodecErrorKind::Truncated, "checkpoint header incomplete");
  ByteReader tail(bytes.subspan(bytes.size() - 8));
  ByteReader in(bytes.subspan(4, bytes.size() - 12));
  if (const auto v = in.u32(); v != kCheckpointVersion)
    throw CodecError(CodecErrorKind::BadVersion, "checkpoint version " + std::to_string(v));
  if (tail.u64() != fnv1a64(bytes.first(bytes.size() - 8)))
    throw CodecError(CodecErrorKind::Checksum, "checkpoint content does not match stored checksum");
  ExperimentConfig cfg = ExperimentConfig::from_text(in.str());
  const auto users = static_cast<Index>(in.u64());
  const auto items = static_cast<Index>(in.u64());
  Rng rng(cfg.seed);
  Checkpoint ck{cfg, users, items, build_model(cfg, users, items, rng)};
  ParameterList<float> params;
  std::visit([&](auto& m) { m.parameters(params); }, ck.model);
  if (in.u32() != params.size()) throw CodecError(CodecErrorKind::Malformed, "checkpoint tensor count mismatch");
  for (auto* p : params) {
    const std::string name = in.str();
    const auto rows = static_cast<Index>(in.u32());
    const auto cols = static_cast<Index>(in.u32());
    if (name != p->name || rows != p->rows() || cols != p->cols())
      throw CodecError(CodecErrorKind::Malformed, "checkpoint tensor '" + name + "' does not fit the model");
    p->value = detail::read_matrix(in, rows, cols);
  }
  if (in.remaining() != 0) throw CodecError(CodecErrorKind::Malformed, "unexpected bytes in checkpoint");
  std::visit([](auto& m) { m.after_update(); }, ck.model);
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace mgqe
