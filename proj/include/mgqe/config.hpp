#pragma once

#include "mgqe/common.hpp"
#include "mgqe/data/relevance.hpp"
#include "mgqe/embedding/factory.hpp"
#include "mgqe/train/trainer.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mgqe {

/// Bad flags, bad config keys, or inconsistent option combinations.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Everything that defines one experiment run. Serialized as flat
/// `key=value` lines; `#` starts a comment.
struct ExperimentConfig {
  std::string task = "item-rec";  // item-rec | item2item
  std::string model = "gmf";      // gmf | neumf | i2i
  std::string scheme = "full";    // full | lrf | sq | dpq | mgqe
  std::string variant = "shared-vark";
  Index d = 64;
  Index D = 64;
  Index K = 256;
  std::vector<Index> tier_K{256, 64};
  std::vector<Index> tier_D{64, 32};
  double head_fraction = 0.10;
  Index r = 48;
  Index b = 8;
  double init_std = 0.01;
  Index epochs = 20;
  Index batch = 256;
  double lr = 0.001;
  Index negatives = 4;
  double vq_beta = 0.25;
  std::uint64_t seed = 1;
  Index eval_k = 10;
  Index min_item_count = 0;
  std::string data_dir;  // defaults to $MGQE_DATA_DIR
  Index rel_items = 10000;
  Index rel_pairs = 500000;
  double rel_zipf = 1.0;
  std::uint64_t rel_seed = 42;

  SchemeConfig scheme_config() const {
    SchemeConfig s;
    s.kind = parse_scheme(scheme);
    s.d = d;
    s.rank = r;
    s.bits = static_cast<int>(b);
    s.num_subspaces = D;
    s.num_centroids = K;
    s.variant = parse_variant(variant);
    s.tier_centroids = tier_K;
    s.tier_subspaces = tier_D;
    s.tier_fractions = {head_fraction};
    s.init_std = init_std;
    return s;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch;
    t.learning_rate = lr;
    t.negatives_per_positive = negatives;
    t.vq_beta = vq_beta;
    t.seed = seed;
    return t;
  }

  RelevanceConfig relevance_config() const {
    RelevanceConfig c;
    c.num_items = rel_items;
    c.num_pairs = rel_pairs;
    c.zipf_exponent = rel_zipf;
    c.seed = rel_seed;
    return c;
  }

  /// Checks value ranges and option combinations.
  void validate() const {
    auto fail = [](const std::string& m) { throw UsageError(m); };
    if (task != "item-rec" && task != "item2item") fail("task must be item-rec or item2item");
    if (task == "item-rec" && model != "gmf" && model != "neumf") fail("task item-rec needs model gmf or neumf");
    if (task == "item2item" && model != "i2i") fail("task item2item needs model i2i");
    try {
      parse_scheme(scheme);
      parse_variant(variant);
    } catch (const DataError& e) {
      fail(e.what());
    }
    if (d < 1) fail("d must be positive");
    if (model == "neumf" && d % 4 != 0) fail("neumf needs d divisible by 4");
    if ((scheme == "dpq" || scheme == "mgqe") && (D < 1 || d % D != 0)) fail("D must divide d");
    if (K < 1) fail("K must be positive");
    if (tier_K.size() != 2 || tier_D.size() != 2) fail("tier_K and tier_D need exactly two values (head, tail)");
    if (scheme == "mgqe" && variant == "unshared-vard")
      for (Index t : tier_D)
        if (t < 1 || d % t != 0) fail("every tier_D value must divide d");
    if (!(head_fraction > 0.0 && head_fraction < 1.0)) fail("head_fraction must be in (0, 1)");
    if (r < 1) fail("r must be positive");
    if (b < 1 || b > 16) fail("b must be in [1, 16]");
    if (epochs < 0 || batch < 1 || negatives < 0) fail("epochs, batch and negatives must be non-negative (batch positive)");
    if (lr < 0 || vq_beta < 0 || init_std <= 0) fail("lr and vq_beta must be non-negative, init_std positive");
    if (eval_k < 1) fail("eval_k must be positive");
    if (rel_items < 2 || rel_pairs < 1) fail("relevance generator needs rel_items >= 2 and rel_pairs >= 1");
  }

  void set(const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw UsageError("unknown config key '" + key + "'");
    try {
      it->second(*this, value);
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError("invalid value '" + value + "' for '" + key + "'");
    }
  }

  /// Canonical key=value text, one key per line in a fixed order.
  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    auto list = [](const std::vector<Index>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    out << "task=" << task << "\nmodel=" << model << "\nscheme=" << scheme << "\nvariant=" << variant
        << "\nd=" << d << "\nD=" << D << "\nK=" << K << "\ntier_K=" << list(tier_K) << "\ntier_D=" << list(tier_D)
        << "\nhead_fraction=" << head_fraction << "\nr=" << r << "\nb=" << b << "\ninit_std=" << init_std
        << "\nepochs=" << epochs << "\nbatch=" << batch << "\nlr=" << lr << "\nnegatives=" << negatives
        << "\nvq_beta=" << vq_beta << "\nseed=" << seed << "\neval_k=" << eval_k
        << "\nmin_item_count=" << min_item_count << "\ndata_dir=" << data_dir << "\nrel_items=" << rel_items
        << "\nrel_pairs=" << rel_pairs << "\nrel_zipf=" << rel_zipf << "\nrel_seed=" << rel_seed << '\n';
    return out.str();
  }

  void apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  static ExperimentConfig from_text(const std::string& text) {
    ExperimentConfig c;
    c.apply_text(text);
    return c;
  }

  void apply_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_text(ss.str());
  }

 private:
  using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto z = s.find_last_not_of(" \t\r");
    return s.substr(a, z - a + 1);
  }

  static Index to_index(const std::string& v) {
    Index x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw std::invalid_argument(v);
    return x;
  }
  static std::uint64_t to_u64(const std::string& v) {
    std::uint64_t x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw std::invalid_argument(v);
    return x;
  }
  static double to_double(const std::string& v) {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  }
  static std::vector<Index> to_list(const std::string& v) {
    std::vector<Index> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(to_index(trim(part)));
    if (out.empty()) throw std::invalid_argument(v);
    return out;
  }

  static const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> s = {
        {"task", [](ExperimentConfig& c, const std::string& v) { c.task = v; }},
        {"model", [](ExperimentConfig& c, const std::string& v) { c.model = v; }},
        {"scheme", [](ExperimentConfig& c, const std::string& v) { c.scheme = v; }},
        {"variant", [](ExperimentConfig& c, const std::string& v) { c.variant = v; }},
        {"d", [](ExperimentConfig& c, const std::string& v) { c.d = to_index(v); }},
        {"D", [](ExperimentConfig& c, const std::string& v) { c.D = to_index(v); }},
        {"K", [](ExperimentConfig& c, const std::string& v) { c.K = to_index(v); }},
        {"tier_K", [](ExperimentConfig& c, const std::string& v) { c.tier_K = to_list(v); }},
        {"tier_D", [](ExperimentConfig& c, const std::string& v) { c.tier_D = to_list(v); }},
        {"head_fraction", [](ExperimentConfig& c, const std::string& v) { c.head_fraction = to_double(v); }},
        {"r", [](ExperimentConfig& c, const std::string& v) { c.r = to_index(v); }},
        {"b", [](ExperimentConfig& c, const std::string& v) { c.b = to_index(v); }},
        {"init_std", [](ExperimentConfig& c, const std::string& v) { c.init_std = to_double(v); }},
        {"epochs", [](ExperimentConfig& c, const std::string& v) { c.epochs = to_index(v); }},
        {"batch", [](ExperimentConfig& c, const std::string& v) { c.batch = to_index(v); }},
        {"lr", [](ExperimentConfig& c, const std::string& v) { c.lr = to_double(v); }},
        {"negatives", [](ExperimentConfig& c, const std::string& v) { c.negatives = to_index(v); }},
        {"vq_beta", [](ExperimentConfig& c, const std::string& v) { c.vq_beta = to_double(v); }},
        {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); }},
        {"eval_k", [](ExperimentConfig& c, const std::string& v) { c.eval_k = to_index(v); }},
        {"min_item_count", [](ExperimentConfig& c, const std::string& v) { c.min_item_count = to_index(v); }},
        {"data_dir", [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; }},
        {"rel_items", [](ExperimentConfig& c, const std::string& v) { c.rel_items = to_index(v); }},
        {"rel_pairs", [](ExperimentConfig& c, const std::string& v) { c.rel_pairs = to_index(v); }},
        {"rel_zipf", [](ExperimentConfig& c, const std::string& v) { c.rel_zipf = to_double(v); }},
        {"rel_seed", [](ExperimentConfig& c, const std::string& v) { c.rel_seed = to_u64(v); }},
    };
    return s;
  }
};

}  // namespace mgqe
