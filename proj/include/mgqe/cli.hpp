#pragma once

#include "mgqe/data/synthetic_interactions.hpp"
#include "mgqe/eval/similarity.hpp"
#include "mgqe/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mgqe::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

namespace fs = std::filesystem;

/// Config flags shared by the experiment subcommands. Values given on the
/// command line override those read from `--config`.
class ConfigFlags {
 public:
  void attach(CLI::App* app) {
    app->add_option("--config", config_file_, "key=value config file");
    app->add_option("--set", overrides_, "extra key=value override (repeatable)");
    add(app, "--task", "task", "item-rec | item2item");
    add(app, "--model", "model", "gmf | neumf | i2i");
    add(app, "--scheme", "scheme", "full | lrf | sq | dpq | mgqe");
    add(app, "--variant", "variant", "shared-vark | unshared-vark | unshared-vard");
    add(app, "--d", "d", "embedding dimension");
    add(app, "--D", "D", "number of subspaces");
    add(app, "--K", "K", "number of centroids");
    add(app, "--tier-K", "tier_K", "per-tier centroid counts, e.g. 256,64");
    add(app, "--tier-D", "tier_D", "per-tier subspace counts, e.g. 64,32");
    add(app, "--head-fraction", "head_fraction", "share of ids in the head tier");
    add(app, "--r", "r", "low-rank factorization rank");
    add(app, "--b", "b", "scalar quantization bits");
    add(app, "--epochs", "epochs", "training epochs");
    add(app, "--batch", "batch", "batch size");
    add(app, "--lr", "lr", "Adam learning rate");
    add(app, "--negatives", "negatives", "negatives per positive");
    add(app, "--vq-beta", "vq_beta", "commitment weight of the quantization loss");
    add(app, "--seed", "seed", "random seed");
    add(app, "--data-dir", "data_dir", "data root (default $MGQE_DATA_DIR)");
    add(app, "--min-item-count", "min_item_count", "drop items with fewer ratings");
    add(app, "--rel-items", "rel_items", "synthetic relevance: number of items");
    add(app, "--rel-pairs", "rel_pairs", "synthetic relevance: number of pairs");
    add(app, "--rel-zipf", "rel_zipf", "synthetic relevance: Zipf exponent");
    add(app, "--rel-seed", "rel_seed", "synthetic relevance: seed");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_file_.empty()) cfg.apply_file(config_file_);
    for (const auto& [key, value] : values_)
      if (!value.empty()) cfg.set(key, value);
    for (const auto& kv : overrides_) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    // A task implies its model unless one was chosen explicitly.
    if (cfg.task == "item2item" && values_.at("model").empty() && cfg.model == "gmf") cfg.model = "i2i";
    cfg.validate();
    return cfg;
  }

 private:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, values_[key], help);
  }
  std::string config_file_;
  std::vector<std::string> overrides_;
  std::map<std::string, std::string> values_;
};

inline RelevanceDataset load_relevance(const ExperimentConfig& cfg, const std::string& csv) {
  if (!csv.empty()) return read_relevance_csv(csv);
  return generate_synthetic_relevance(cfg.relevance_config());
}

inline void print_ranking(std::ostream& out, const RankingReport& r) {
  out << std::fixed << std::setprecision(4);
  out << "metric,value\n";
  out << "users," << r.users << "\nhr@" << r.k << ',' << r.hr << "\nndcg@" << r.k << ',' << r.ndcg << "\nrecall@"
      << r.k << ',' << r.recall << '\n';
  out.unsetf(std::ios::floatfield);
}

/// Loads either a training checkpoint (frozen on load) or a serving file.
inline AnyModel load_any(const std::string& checkpoint, const std::string& model_file, ExperimentConfig* cfg_out) {
  if (!checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(checkpoint);
    if (cfg_out) {
      // A data dir given on this command line wins over the one recorded at training time.
      const std::string dir = cfg_out->data_dir;
      *cfg_out = ck.config;
      if (!dir.empty()) cfg_out->data_dir = dir;
    }
    freeze(ck.model);
    return std::move(ck.model);
  }
  if (!model_file.empty()) return import_model(model_file);
  throw UsageError("need --checkpoint or --model-file");
}

struct TableRow {
  std::string model;
  std::string method;
  std::string scheme;
  std::string variant;
};

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-granular quantized embeddings for recommender models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "load MovieLens-1M, print split statistics and item counts");
  std::string prep_ratings, prep_movies, prep_out, prep_dir;
  Index prep_min = 0;
  prep->add_option("--ratings", prep_ratings, "ratings.dat path");
  prep->add_option("--movies", prep_movies, "movies.dat path");
  prep->add_option("--data-dir", prep_dir, "directory holding ratings.dat/movies.dat (default $MGQE_DATA_DIR)");
  prep->add_option("--min-item-count", prep_min, "drop items with fewer ratings");
  prep->add_option("--out", prep_out, "write item-count histogram CSV here");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "write a synthetic dataset");
  std::string synth_kind = "relevance", synth_out;
  SyntheticInteractionConfig synth_cfg;
  ConfigFlags synth_flags;
  synth->add_option("--kind", synth_kind, "relevance | interactions")->check(CLI::IsMember({"relevance", "interactions"}));
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--users", synth_cfg.num_users, "interactions: number of users");
  synth->add_option("--items", synth_cfg.num_items, "interactions: number of items");
  synth->add_option("--corpus-seed", synth_cfg.seed, "interactions: generator seed");
  synth_flags.attach(synth);

  // train
  auto* train = app.add_subcommand("train", "train a model; writes checkpoint.mgqt and epochs.csv");
  ConfigFlags train_flags;
  std::string train_out, train_rel;
  train_flags.attach(train);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--relevance", train_rel, "relevance CSV (default: synthetic data from rel_* keys)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "HR/NDCG or RMSE of a trained model");
  std::string ev_ck, ev_model, ev_rel, ev_dir;
  Index ev_k = 10;
  bool ev_validation = false;
  ConfigFlags ev_flags;
  evaluate->add_option("--checkpoint", ev_ck, "training checkpoint");
  evaluate->add_option("--model-file", ev_model, "serving file (.mgqe)");
  evaluate->add_option("--relevance", ev_rel, "relevance CSV for item2item models");
  evaluate->add_option("--k", ev_k, "cutoff");
  evaluate->add_flag("--validation", ev_validation, "rank validation instead of test items");
  ev_flags.attach(evaluate);

  // size-report
  auto* size = app.add_subcommand("size-report", "serving size of a configuration or a trained model");
  std::string sz_ck, sz_model;
  Index sz_n = 0, sz_users = 0, sz_items = 0;
  ConfigFlags sz_flags;
  size->add_option("--checkpoint", sz_ck, "training checkpoint");
  size->add_option("--model-file", sz_model, "serving file (.mgqe)");
  size->add_option("--n", sz_n, "size a single table with this vocabulary");
  size->add_option("--users", sz_users, "size GMF/NeuMF with this many users");
  size->add_option("--items", sz_items, "... and this many items");
  sz_flags.attach(size);

  // export
  auto* exp = app.add_subcommand("export", "freeze a checkpoint and write the packed serving file");
  std::string ex_ck, ex_out;
  exp->add_option("--checkpoint", ex_ck, "training checkpoint")->required();
  exp->add_option("--out", ex_out, "output .mgqe path")->required();

  // import-check
  auto* imp = app.add_subcommand("import-check", "re-read a serving file and verify it round-trips");
  std::string ic_model, ic_ck;
  Index ic_lookups = 1000;
  imp->add_option("--model-file", ic_model, "serving file (.mgqe)")->required();
  imp->add_option("--checkpoint", ic_ck, "compare lookups against this frozen checkpoint");
  imp->add_option("--lookups", ic_lookups, "number of random lookups to compare");

  // code-similarity
  auto* sim = app.add_subcommand("code-similarity", "mean code overlap between genre samples");
  std::string sim_ck, sim_model, sim_out;
  Index sim_sample = 200;
  std::uint64_t sim_seed = 7;
  std::vector<std::string> sim_cats = default_similarity_categories();
  ConfigFlags sim_flags;
  sim->add_option("--checkpoint", sim_ck, "training checkpoint");
  sim->add_option("--model-file", sim_model, "serving file (.mgqe)");
  sim->add_option("--sample-size", sim_sample, "items per sampled set");
  sim->add_option("--categories", sim_cats, "genres to compare")->delimiter(',');
  sim->add_option("--sample-seed", sim_seed, "sampling seed");
  sim->add_option("--out", sim_out, "also write the matrix CSV here");
  sim_flags.attach(sim);

  // repro-table
  auto* repro = app.add_subcommand("repro-table", "run every configuration of a results table");
  std::string rp_table, rp_out;
  Index rp_repeats = 10;
  ConfigFlags rp_flags;
  repro->add_option("table", rp_table, "table2 (item recommendation), table4 (item-to-item), table5 (MGQE variants)")
      ->required();
  repro->add_option("--repeats", rp_repeats, "runs per configuration (seeds seed, seed+1, ...)");
  repro->add_option("--out", rp_out, "also write the CSV here");
  rp_flags.attach(repro);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return kOk;
    } catch (const CLI::CallForAllHelp& e) {
      out << app.help("", CLI::AppFormatMode::All);
      return kOk;
    } catch (const CLI::ParseError& e) {
      err << "usage error: " << e.what() << "\n" << app.help();
      return kUsage;
    }

    if (*prep) {
      MovieLensData ml;
      if (!prep_ratings.empty() || !prep_movies.empty()) {
        if (prep_ratings.empty() || prep_movies.empty()) throw UsageError("--ratings and --movies go together");
        LoadOptions o;
        o.min_item_count = prep_min;
        ml = load_movielens(prep_ratings, prep_movies, o);
      } else {
        ExperimentConfig c;
        c.data_dir = prep_dir;
        ml = load_movielens_dir(data_root(c), prep_min);
      }
      const auto& ds = ml.dataset;
      out << "users," << ds.num_users << "\nitems," << ds.num_items << "\ninteractions," << ds.num_interactions()
          << "\ntrain," << ds.train.size() << "\nvalidation," << ds.validation.size() << "\ntest," << ds.test.size()
          << "\nsparsity_percent," << std::fixed << std::setprecision(2) << 100.0 * ds.sparsity() << '\n';
      out.unsetf(std::ios::floatfield);
      Index missing = 0;
      for (bool m : ml.genres.missing) missing += m ? 1 : 0;
      out << "items_without_genres," << missing << '\n';
      if (!prep_out.empty()) {
        std::ofstream f(prep_out, std::ios::binary);
        if (!f) throw DataError("cannot write '" + prep_out + "'");
        f << split_counts(ds);
      }
      return kOk;
    }

    if (*synth) {
      if (synth_kind == "interactions") {
        const auto data = generate_synthetic_interactions(synth_cfg);
        write_movielens_files(data, fs::path(synth_out) / "ml-1m");
        out << "wrote " << data.ratings.size() << " ratings for " << synth_cfg.num_users << " users and "
            << synth_cfg.num_items << " items to " << (fs::path(synth_out) / "ml-1m").string() << '\n';
      } else {
        const ExperimentConfig cfg = synth_flags.resolve();
        const auto ds = generate_synthetic_relevance(cfg.relevance_config());
        fs::create_directories(synth_out);
        write_relevance_csv(ds, (fs::path(synth_out) / "relevance.csv").string());
        std::ofstream hist(fs::path(synth_out) / "item_counts.csv", std::ios::binary);
        hist << split_counts(ds);
        out << "wrote " << ds.train.size() << " train and " << ds.eval.size() << " eval pairs over " << ds.num_items
            << " items to " << (fs::path(synth_out) / "relevance.csv").string() << '\n';
      }
      return kOk;
    }

    if (*train) {
      const ExperimentConfig cfg = train_flags.resolve();
      fs::create_directories(train_out);
      std::ofstream csv(fs::path(train_out) / "epochs.csv", std::ios::binary);
      if (!csv) throw DataError("cannot write under '" + train_out + "'");
      write_epoch_header(csv);
      write_epoch_header(out);
      auto log = [&](const EpochStats& s) {
        write_epoch_row(csv, s);
        write_epoch_row(out, s);
        csv.flush();
      };
      std::optional<AnyModel> model;
      Index users = 0, items = 0;
      if (cfg.task == "item-rec") {
        const auto ml = load_movielens_dir(data_root(cfg), cfg.min_item_count);
        model = train_item_rec(cfg, ml.dataset, log);
        users = ml.dataset.num_users;
        items = ml.dataset.num_items;
      } else {
        const auto ds = load_relevance(cfg, train_rel);
        model = train_item2item(cfg, ds, log);
        items = ds.num_items;
      }
      save_checkpoint(fs::path(train_out) / "checkpoint.mgqt", cfg, users, items, *model);
      std::ofstream(fs::path(train_out) / "config.txt", std::ios::binary) << cfg.to_text();
      return kOk;
    }

    if (*evaluate) {
      ExperimentConfig cfg = ev_flags.resolve();
      AnyModel model = load_any(ev_ck, ev_model, ev_ck.empty() ? nullptr : &cfg);
      if (std::holds_alternative<Item2ItemModel<float>>(model)) {
        const auto ds = load_relevance(cfg, ev_rel);
        out << "metric,value\nrmse," << std::setprecision(6) << evaluate_rmse(model, ds) << '\n';
      } else {
        const auto ml = load_movielens_dir(data_root(cfg), cfg.min_item_count);
        const auto r = std::visit(
            [&](const auto& m) -> RankingReport {
              using M = std::decay_t<decltype(m)>;
              if constexpr (M::kind == ModelKind::Item2Item) {
                return {};
              } else {
                return mgqe::evaluate_ranking(m, ml.dataset, ev_k, ev_validation);
              }
            },
            model);
        print_ranking(out, r);
      }
      return kOk;
    }

    if (*size) {
      SizeReport report;
      if (!sz_ck.empty() || !sz_model.empty()) {
        report = size_report(load_any(sz_ck, sz_model, nullptr));
      } else {
        const ExperimentConfig cfg = sz_flags.resolve();
        const SchemeConfig sc = cfg.scheme_config();
        if (sz_n > 0) {
          report = make_size_report({config_size_bits(sc, sz_n)}, {{sz_n, cfg.d}}, 0);
        } else if (sz_users > 0 && sz_items > 0) {
          // Dense weight counts come from a throwaway model with tiny tables.
          Rng rng(0);
          ExperimentConfig tiny = cfg;
          tiny.scheme = "full";
          const AnyModel probe = build_model(tiny, 1, 1, rng);
          std::uint64_t dense = 0;
          std::visit([&](const auto& m) {
            for (const auto* p : m.dense_parameters()) dense += static_cast<std::uint64_t>(p->value.size());
          }, probe);
          const int towers = cfg.model == "neumf" ? 2 : 1;
          std::vector<EmbeddingBits> tables;
          std::vector<std::pair<Index, Index>> shapes;
          for (int t = 0; t < towers; ++t) {
            tables.push_back(config_size_bits(sc, sz_users));
            tables.push_back(config_size_bits(sc, sz_items));
            shapes.emplace_back(sz_users, cfg.d);
            shapes.emplace_back(sz_items, cfg.d);
          }
          report = make_size_report(std::move(tables), shapes, dense);
        } else {
          throw UsageError("size-report needs --checkpoint, --model-file, --n, or --users with --items");
        }
      }
      write_size_csv(out, report);
      return kOk;
    }

    if (*exp) {
      AnyModel model = load_any(ex_ck, "", nullptr);
      const ExportInfo info = export_model(model, ex_out);
      out << "file_bytes," << info.file_bytes << "\npayload_bits," << info.payload_bits << "\ncode_stream_bits,"
          << info.code_stream_bits << "\noverhead_bits," << info.overhead_bits() << '\n';
      return kOk;
    }

    if (*imp) {
      const auto bytes = read_file_bytes(ic_model);
      const AnyModel model = decode_model(bytes);
      const bool same_bytes = encode_model(model) == bytes;
      out << "reexport_identical," << (same_bytes ? "yes" : "no") << '\n';
      bool same_lookups = true;
      if (!ic_ck.empty()) {
        const AnyModel ref = load_any(ic_ck, "", nullptr);
        const auto& a = item_table(model);
        const auto& b = item_table(ref);
        if (a.vocab_size() != b.vocab_size()) throw DataError("checkpoint and serving file differ in vocabulary");
        std::mt19937_64 rng(12345);
        std::uniform_int_distribution<Index> pick(0, a.vocab_size() - 1);
        std::vector<Index> ids(ic_lookups);
        for (auto& id : ids) id = pick(rng);
        same_lookups = a.lookup(ids) == b.lookup(ids);
        out << "lookups_identical," << (same_lookups ? "yes" : "no") << '\n';
      }
      return same_bytes && same_lookups ? kOk : kRuntime;
    }

    if (*sim) {
      ExperimentConfig cfg = sim_flags.resolve();
      const AnyModel model = load_any(sim_ck, sim_model, sim_ck.empty() ? nullptr : &cfg);
      const auto ml = load_movielens_dir(data_root(cfg), cfg.min_item_count);
      const CodeTable codes = code_table(item_table(model));
      const auto m = code_similarity_matrix(codes, ml.genres, sim_cats, sim_sample, sim_seed);
      write_similarity_csv(out, m);
      if (!sim_out.empty()) {
        std::ofstream f(sim_out, std::ios::binary);
        if (!f) throw DataError("cannot write '" + sim_out + "'");
        write_similarity_csv(f, m);
      }
      return kOk;
    }

    if (*repro) {
      const ExperimentConfig base = rp_flags.resolve();
      if (rp_repeats < 1) throw UsageError("--repeats must be positive");
      std::vector<TableRow> rows;
      bool relevance = false;
      if (rp_table == "table2") {
        for (const char* model : {"gmf", "neumf"})
          for (const auto& [method, scheme] : std::vector<std::pair<std::string, std::string>>{
                   {"FE", "full"}, {"LRF", "lrf"}, {"SQ", "sq"}, {"DPQ", "dpq"}, {"MGQE", "mgqe"}})
            rows.push_back({model, method, scheme, "shared-vark"});
      } else if (rp_table == "table4") {
        relevance = true;
        for (const auto& [method, scheme] : std::vector<std::pair<std::string, std::string>>{
                 {"FE", "full"}, {"SQ", "sq"}, {"DPQ", "dpq"}, {"MGQE", "mgqe"}})
          rows.push_back({"i2i", method, scheme, "shared-vark"});
      } else if (rp_table == "table5") {
        for (const char* model : {"gmf", "neumf"}) {
          rows.push_back({model, "FE", "full", "shared-vark"});
          for (const char* v : {"unshared-vark", "unshared-vard", "shared-vark"}) rows.push_back({model, v, "mgqe", v});
        }
      } else if (rp_table == "table3") {
        throw UsageError("table3 uses a self-attention sequential backbone, which is not implemented");
      } else {
        throw UsageError("unknown table '" + rp_table + "' (expected table2, table4 or table5)");
      }

      std::ostringstream csv;
      csv << std::fixed << std::setprecision(4);
      if (relevance) {
        csv << "table,model,method,repeats,rmse,size_percent\n";
      } else {
        csv << "table,model,method,repeats,hr@" << base.eval_k << ",ndcg@" << base.eval_k << ",size_percent\n";
      }
      std::optional<MovieLensData> ml;
      std::optional<RelevanceDataset> rel;
      if (relevance) {
        rel = generate_synthetic_relevance(base.relevance_config());
      } else {
        ml = load_movielens_dir(data_root(base), base.min_item_count);
      }
      for (const TableRow& row : rows) {
        ExperimentConfig cfg = base;
        cfg.task = relevance ? "item2item" : "item-rec";
        cfg.model = row.model;
        cfg.scheme = row.scheme;
        cfg.variant = row.variant;
        double m1 = 0, m2 = 0, ratio = 0;
        for (Index rep = 0; rep < rp_repeats; ++rep) {
          cfg.seed = base.seed + static_cast<std::uint64_t>(rep);
          AnyModel model = relevance ? train_item2item(cfg, *rel) : train_item_rec(cfg, ml->dataset);
          freeze(model);
          if (relevance) {
            m1 += evaluate_rmse(model, *rel);
          } else {
            const RankingReport r = evaluate_ranking(model, ml->dataset, cfg.eval_k);
            m1 += r.hr;
            m2 += r.ndcg;
          }
          ratio = 100.0 * size_report(model).ratio_exact();
          err << rp_table << ' ' << row.model << ' ' << row.method << " run " << rep + 1 << '/' << rp_repeats << " done\n";
        }
        const double n = static_cast<double>(rp_repeats);
        csv << rp_table << ',' << row.model << ',' << row.method << ',' << rp_repeats << ',' << m1 / n;
        if (!relevance) csv << ',' << m2 / n;
        csv << ',' << ratio << '\n';
        out << csv.str().substr(csv.str().rfind('\n', csv.str().size() - 2) + 1);
        out.flush();
      }
      if (!rp_out.empty()) {
        std::ofstream f(rp_out, std::ios::binary);
        if (!f) throw DataError("cannot write '" + rp_out + "'");
        f << csv.str();
      }
      return kOk;
    }
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace mgqe::cli
