#pragma once

#include "mgqe/embedding/layer.hpp"
#include "mgqe/models/init.hpp"
#include "mgqe/parameter.hpp"
#include "mgqe/train/losses.hpp"

#include <memory>
#include <span>
#include <vector>

namespace mgqe {

enum class ModelKind { Gmf = 0, NeuMf = 1, Item2Item = 2 };

/// Generalized matrix factorization: logit = h^T (e_u * e_i) + bias.
template <typename Real>
class GmfModel {
 public:
  using real_type = Real;
  static constexpr ModelKind kind = ModelKind::Gmf;

  struct Context {
    LookupContext<Real> user;
    LookupContext<Real> item;
    Matrix<Real> u;
    Matrix<Real> i;
  };

  GmfModel(std::unique_ptr<EmbeddingLayer<Real>> user, std::unique_ptr<EmbeddingLayer<Real>> item)
      : user_(std::move(user)), item_(std::move(item)), h_("h", 1, user_->dim()), bias_("bias", 1, 1) {
    require(user_->dim() == item_->dim(), "GMF user and item embeddings differ in dimension");
  }
  /// h ~ LeCun-uniform, bias = 0.
  GmfModel(std::unique_ptr<EmbeddingLayer<Real>> user, std::unique_ptr<EmbeddingLayer<Real>> item,
           Rng& rng)
      : GmfModel(std::move(user), std::move(item)) {
    lecun_uniform(h_.value, user_->dim(), rng);
  }
  GmfModel(const GmfModel& o)
      : user_(o.user_->clone()), item_(o.item_->clone()), h_(o.h_), bias_(o.bias_) {}
  GmfModel(GmfModel&&) noexcept = default;
  GmfModel& operator=(GmfModel&&) noexcept = default;

  Index dim() const { return user_->dim(); }
  Index num_users() const { return user_->vocab_size(); }
  Index num_items() const { return item_->vocab_size(); }
  EmbeddingLayer<Real>& user_embedding() { return *user_; }
  EmbeddingLayer<Real>& item_embedding() { return *item_; }
  const EmbeddingLayer<Real>& user_embedding() const { return *user_; }
  const EmbeddingLayer<Real>& item_embedding() const { return *item_; }
  Matrix<Real>& h() { return h_.value; }
  Real& bias() { return bias_.value(0, 0); }
  const Matrix<Real>& h() const { return h_.value; }
  Real bias() const { return bias_.value(0, 0); }

  std::vector<Real> forward(std::span<const Index> users, std::span<const Index> items,
                            Context& ctx) const {
    require(users.size() == items.size(), "GMF batch: user and item counts differ");
    ctx.u = user_->forward(users, ctx.user);
    ctx.i = item_->forward(items, ctx.item);
    return score_rows(ctx.u, ctx.i);
  }

  std::vector<Real> predict(std::span<const Index> users, std::span<const Index> items) const {
    require(users.size() == items.size(), "GMF batch: user and item counts differ");
    return score_rows(user_->lookup(users), item_->lookup(items));
  }

  void backward(const Context& ctx, std::span<const Real> dlogits) {
    const Index batch = ctx.u.rows();
    const Index d = dim();
    Matrix<Real> du(batch, d);
    Matrix<Real> di(batch, d);
    for (Index b = 0; b < batch; ++b) {
      const Real g = dlogits[b];
      bias_.grad(0, 0) += g;
      for (Index j = 0; j < d; ++j) {
        h_.grad(0, j) += g * ctx.u(b, j) * ctx.i(b, j);
        du(b, j) = g * h_.value(0, j) * ctx.i(b, j);
        di(b, j) = g * h_.value(0, j) * ctx.u(b, j);
      }
    }
    user_->backward(ctx.user, du);
    item_->backward(ctx.item, di);
  }

  double backward_vq(const Context& ctx, double beta) {
    return apply_vq_loss(*user_, ctx.user, beta) + apply_vq_loss(*item_, ctx.item, beta);
  }

  void parameters(ParameterList<Real>& out) {
    user_->parameters(out);
    item_->parameters(out);
    out.push_back(&h_);
    out.push_back(&bias_);
  }
  /// Non-embedding weights in serialization order.
  std::vector<const Parameter<Real>*> dense_parameters() const { return {&h_, &bias_}; }
  std::vector<Parameter<Real>*> dense_parameters() { return {&h_, &bias_}; }
  std::vector<const EmbeddingLayer<Real>*> tables() const { return {user_.get(), item_.get()}; }

  void after_update() {
    user_->after_update();
    item_->after_update();
  }

  void freeze() {
    user_->freeze();
    item_->freeze();
  }
  bool frozen() const { return user_->frozen() && item_->frozen(); }

  /// Scores every item for one user; item embeddings are looked up once.
  class Scorer {
   public:
    explicit Scorer(const GmfModel& m) : model_(&m) {
      std::vector<Index> all(m.num_items());
      for (Index i = 0; i < m.num_items(); ++i) all[i] = i;
      items_ = m.item_->lookup(all);
    }
    void score(Index user, std::span<Real> out) const {
      const Index id[1] = {user};
      const Matrix<Real> u = model_->user_->lookup(id);
      const Vector<Real> w = (u.row(0).array() * model_->h_.value.row(0).array()).transpose();
      Eigen::Map<Vector<Real>> scores(out.data(), static_cast<Index>(out.size()));
      scores.noalias() = items_ * w;
      scores.array() += model_->bias();
    }

   private:
    const GmfModel* model_;
    Matrix<Real> items_;
  };
  Scorer scorer() const { return Scorer(*this); }

 private:
  std::vector<Real> score_rows(const Matrix<Real>& u, const Matrix<Real>& i) const {
    std::vector<Real> logits(u.rows());
    for (Index b = 0; b < u.rows(); ++b) {
      Real s = 0;
      for (Index j = 0; j < u.cols(); ++j) s += h_.value(0, j) * u(b, j) * i(b, j);
      logits[b] = s + bias_.value(0, 0);
    }
    return logits;
  }

  std::unique_ptr<EmbeddingLayer<Real>> user_;
  std::unique_ptr<EmbeddingLayer<Real>> item_;
  Parameter<Real> h_;
  Parameter<Real> bias_;
};

}  // namespace mgqe
