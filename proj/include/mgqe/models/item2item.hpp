#pragma once

#include "mgqe/embedding/layer.hpp"
#include "mgqe/models/gmf.hpp"
#include "mgqe/models/init.hpp"
#include "mgqe/parameter.hpp"
#include "mgqe/train/losses.hpp"

#include <memory>
#include <span>
#include <vector>

namespace mgqe {

/// GMF adapted to item pairs: score(a, b) = h^T (e_a * e_b) + bias, with a
/// single item table and a raw (unsquashed) real-valued output.
template <typename Real>
class Item2ItemModel {
 public:
  using real_type = Real;
  static constexpr ModelKind kind = ModelKind::Item2Item;

  struct Context {
    LookupContext<Real> left;
    LookupContext<Real> right;
    Matrix<Real> a;
    Matrix<Real> b;
  };

  explicit Item2ItemModel(std::unique_ptr<EmbeddingLayer<Real>> items)
      : items_(std::move(items)), h_("h", 1, items_->dim()), bias_("bias", 1, 1) {}
  Item2ItemModel(std::unique_ptr<EmbeddingLayer<Real>> items, Rng& rng)
      : Item2ItemModel(std::move(items)) {
    lecun_uniform(h_.value, items_->dim(), rng);
  }
  Item2ItemModel(const Item2ItemModel& o) : items_(o.items_->clone()), h_(o.h_), bias_(o.bias_) {}
  Item2ItemModel(Item2ItemModel&&) noexcept = default;
  Item2ItemModel& operator=(Item2ItemModel&&) noexcept = default;

  Index dim() const { return items_->dim(); }
  Index num_items() const { return items_->vocab_size(); }
  EmbeddingLayer<Real>& item_embedding() { return *items_; }
  const EmbeddingLayer<Real>& item_embedding() const { return *items_; }
  Matrix<Real>& h() { return h_.value; }
  Real& bias() { return bias_.value(0, 0); }
  Real bias() const { return bias_.value(0, 0); }

  std::vector<Real> forward(std::span<const Index> left, std::span<const Index> right,
                            Context& ctx) const {
    require(left.size() == right.size(), "item pair batch: side lengths differ");
    ctx.a = items_->forward(left, ctx.left);
    ctx.b = items_->forward(right, ctx.right);
    return score_rows(ctx.a, ctx.b);
  }

  std::vector<Real> predict(std::span<const Index> left, std::span<const Index> right) const {
    require(left.size() == right.size(), "item pair batch: side lengths differ");
    return score_rows(items_->lookup(left), items_->lookup(right));
  }

  void backward(const Context& ctx, std::span<const Real> dpreds) {
    const Index batch = ctx.a.rows();
    const Index d = dim();
    Matrix<Real> da(batch, d);
    Matrix<Real> db(batch, d);
    for (Index r = 0; r < batch; ++r) {
      const Real g = dpreds[r];
      bias_.grad(0, 0) += g;
      for (Index j = 0; j < d; ++j) {
        h_.grad(0, j) += g * ctx.a(r, j) * ctx.b(r, j);
        da(r, j) = g * h_.value(0, j) * ctx.b(r, j);
        db(r, j) = g * h_.value(0, j) * ctx.a(r, j);
      }
    }
    items_->backward(ctx.left, da);
    items_->backward(ctx.right, db);
  }

  double backward_vq(const Context& ctx, double beta) {
    return apply_vq_loss(*items_, ctx.left, beta) + apply_vq_loss(*items_, ctx.right, beta);
  }

  void parameters(ParameterList<Real>& out) {
    items_->parameters(out);
    out.push_back(&h_);
    out.push_back(&bias_);
  }
  std::vector<const Parameter<Real>*> dense_parameters() const { return {&h_, &bias_}; }
  std::vector<Parameter<Real>*> dense_parameters() { return {&h_, &bias_}; }
  std::vector<const EmbeddingLayer<Real>*> tables() const { return {items_.get()}; }

  void after_update() { items_->after_update(); }
  void freeze() { items_->freeze(); }
  bool frozen() const { return items_->frozen(); }

 private:
  std::vector<Real> score_rows(const Matrix<Real>& a, const Matrix<Real>& b) const {
    std::vector<Real> out(a.rows());
    for (Index r = 0; r < a.rows(); ++r) {
      Real s = 0;
      for (Index j = 0; j < a.cols(); ++j) s += h_.value(0, j) * a(r, j) * b(r, j);
      out[r] = s + bias_.value(0, 0);
    }
    return out;
  }

  std::unique_ptr<EmbeddingLayer<Real>> items_;
  Parameter<Real> h_;
  Parameter<Real> bias_;
};

}  // namespace mgqe
