#pragma once

#include "mgqe/common.hpp"
#include "mgqe/data/interactions.hpp"
#include "mgqe/data/relevance.hpp"
#include "mgqe/train/adam.hpp"
#include "mgqe/train/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ostream>
#include <random>
#include <vector>

namespace mgqe {

struct TrainConfig {
  Index epochs = 20;
  Index batch_size = 256;
  double learning_rate = 0.001;
  Index negatives_per_positive = 4;
  double vq_beta = 0.25;
  std::uint64_t seed = 1;

  void validate() const {
    require(epochs >= 0, "epochs must be non-negative");
    require(batch_size > 0, "batch size must be positive");
    require(learning_rate >= 0.0, "learning rate must be non-negative");
    require(negatives_per_positive >= 0, "negatives per positive must be non-negative");
    require(vq_beta >= 0.0, "vq beta must be non-negative");
  }
};

struct EpochStats {
  Index epoch = 0;
  double task_loss = 0;  // mean over training instances
  double vq_loss = 0;    // mean over batches
  double wall_ms = 0;
};

inline void write_epoch_header(std::ostream& out) { out << "epoch,task_loss,vq_loss,wall_ms\n"; }
inline void write_epoch_row(std::ostream& out, const EpochStats& s) {
  out << s.epoch << ',' << s.task_loss << ',' << s.vq_loss << ',' << s.wall_ms << '\n';
}

/// One labelled training instance: (left id, right id, target).
struct Instance {
  Index left = 0;
  Index right = 0;
  float target = 0;
};

/// Draws `count` items uniformly from those not in `seen` (sorted). Returns
/// fewer when the user has interacted with everything.
template <typename Rng>
void sample_negatives(const std::vector<Index>& seen, Index num_items, Index count, Rng& rng,
                      std::vector<Index>& out) {
  out.clear();
  const Index free = num_items - static_cast<Index>(seen.size());
  if (free <= 0 || count <= 0) return;
  std::uniform_int_distribution<Index> pick(0, num_items - 1);
  if (free * 4 >= num_items) {
    while (static_cast<Index>(out.size()) < count) {
      const Index j = pick(rng);
      if (!std::binary_search(seen.begin(), seen.end(), j)) out.push_back(j);
    }
    return;
  }
  // Dense users: draw the rank among unseen items directly.
  std::uniform_int_distribution<Index> rank(0, free - 1);
  for (Index c = 0; c < count; ++c) {
    Index r = rank(rng);
    // Smallest j with j - |seen <= j| == r.
    Index lo = r, hi = num_items - 1;
    while (lo < hi) {
      const Index mid = lo + (hi - lo) / 2;
      const Index unseen = mid + 1 - static_cast<Index>(std::upper_bound(seen.begin(), seen.end(), mid) - seen.begin());
      if (unseen > r) hi = mid; else lo = mid + 1;
    }
    out.push_back(lo);
  }
}

/// Mini-batch Adam training for any of the models. The optimizer state lives
/// as long as the trainer, so one trainer should drive all epochs of a run.
template <typename Model>
class Trainer {
 public:
  using Real = typename Model::real_type;

  Trainer(Model& model, TrainConfig cfg) : model_(&model), cfg_(cfg), optimizer_(collect(model), adam_config(cfg)) {
    cfg_.validate();
  }

  const TrainConfig& config() const { return cfg_; }
  const Adam<Real>& optimizer() const { return optimizer_; }

  /// One pass over shuffled positives, each with freshly sampled negatives.
  template <typename Rng>
  EpochStats train_epoch(const InteractionDataset& ds, Rng& rng) {
    if (seen_.size() != static_cast<std::size_t>(ds.num_users)) seen_ = ds.user_train_items();
    std::vector<Instance> instances;
    instances.reserve(ds.train.size() * static_cast<std::size_t>(1 + cfg_.negatives_per_positive));
    std::vector<Index> negatives;
    for (const Interaction& x : ds.train) {
      instances.push_back({x.user, x.item, 1.0f});
      sample_negatives(seen_[x.user], ds.num_items, cfg_.negatives_per_positive, rng, negatives);
      for (Index j : negatives) instances.push_back({x.user, j, 0.0f});
    }
    return run(instances, rng, /*regression=*/false);
  }

  /// One pass over the shuffled train pairs with a squared loss.
  template <typename Rng>
  EpochStats train_epoch(const RelevanceDataset& ds, Rng& rng) {
    std::vector<Instance> instances;
    instances.reserve(ds.train.size());
    for (const RelevancePair& p : ds.train) instances.push_back({p.a, p.b, p.score});
    return run(instances, rng, /*regression=*/true);
  }

  /// Trains on explicit instances (used by tests and toy problems).
  template <typename Rng>
  EpochStats train_instances(std::vector<Instance> instances, Rng& rng, bool regression) {
    return run(instances, rng, regression);
  }

 private:
  static ParameterList<Real> collect(Model& m) {
    ParameterList<Real> params;
    m.parameters(params);
    return params;
  }
  static AdamConfig adam_config(const TrainConfig& c) {
    AdamConfig a;
    a.learning_rate = c.learning_rate;
    return a;
  }

  template <typename Rng>
  EpochStats run(std::vector<Instance>& instances, Rng& rng, bool regression) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(instances.begin(), instances.end(), rng);
    EpochStats stats;
    stats.epoch = ++epoch_;
    double task_sum = 0;
    double vq_sum = 0;
    Index batches = 0;
    std::vector<Index> left, right;
    std::vector<Real> target;
    typename Model::Context ctx;
    for (std::size_t begin = 0; begin < instances.size(); begin += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(instances.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
      left.clear();
      right.clear();
      target.clear();
      for (std::size_t k = begin; k < end; ++k) {
        left.push_back(instances[k].left);
        right.push_back(instances[k].right);
        target.push_back(static_cast<Real>(instances[k].target));
      }
      const std::vector<Real> out = model_->forward(left, right, ctx);
      const LossResult<Real> loss = regression ? squared_loss<Real>(out, target) : bce_loss<Real>(out, target);
      model_->backward(ctx, loss.grad);
      vq_sum += model_->backward_vq(ctx, cfg_.vq_beta);
      optimizer_.step();
      model_->after_update();
      task_sum += loss.loss * static_cast<double>(end - begin);
      ++batches;
    }
    if (!instances.empty()) stats.task_loss = task_sum / static_cast<double>(instances.size());
    if (batches > 0) stats.vq_loss = vq_sum / static_cast<double>(batches);
    stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return stats;
  }

  Model* model_;
  TrainConfig cfg_;
  Adam<Real> optimizer_;
  std::vector<std::vector<Index>> seen_;
  Index epoch_ = 0;
};

}  // namespace mgqe
