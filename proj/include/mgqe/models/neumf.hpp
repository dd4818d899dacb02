#pragma once

#include "mgqe/embedding/layer.hpp"
#include "mgqe/models/gmf.hpp"
#include "mgqe/models/init.hpp"
#include "mgqe/parameter.hpp"
#include "mgqe/train/losses.hpp"

#include <array>
#include <memory>
#include <span>
#include <vector>

namespace mgqe {

/// Neural matrix factorization: a GMF tower and an MLP tower over separate
/// embedding tables, fused by a final linear layer.
///
/// MLP: concat(e_u, e_i) (2d) -> d -> d/2 -> d/4 with ReLU. The fused logit is
/// [e_u * e_i ; mlp_out] . w + bias.
template <typename Real>
class NeuMfModel {
 public:
  using real_type = Real;
  static constexpr ModelKind kind = ModelKind::NeuMf;
  static constexpr int kHidden = 3;

  struct Context {
    LookupContext<Real> gmf_user, gmf_item, mlp_user, mlp_item;
    Matrix<Real> ug, ig, um, im;
    Matrix<Real> x;  // MLP input
    std::array<Matrix<Real>, kHidden> z;  // pre-activations
    std::array<Matrix<Real>, kHidden> a;  // activations
  };

  NeuMfModel(std::unique_ptr<EmbeddingLayer<Real>> gmf_user, std::unique_ptr<EmbeddingLayer<Real>> gmf_item,
             std::unique_ptr<EmbeddingLayer<Real>> mlp_user, std::unique_ptr<EmbeddingLayer<Real>> mlp_item)
      : gmf_user_(std::move(gmf_user)), gmf_item_(std::move(gmf_item)),
        mlp_user_(std::move(mlp_user)), mlp_item_(std::move(mlp_item)) {
    const Index d = gmf_user_->dim();
    require(gmf_item_->dim() == d && mlp_user_->dim() == d && mlp_item_->dim() == d,
            "NeuMF embeddings must share one dimension");
    require(d % 4 == 0, "NeuMF needs an embedding dimension divisible by 4");
    Index in = 2 * d;
    for (int l = 0; l < kHidden; ++l) {
      const Index out = in / 2;
      weights_[l] = Parameter<Real>("mlp_w" + std::to_string(l), out, in);
      biases_[l] = Parameter<Real>("mlp_b" + std::to_string(l), 1, out);
      in = out;
    }
    fusion_gmf_ = Parameter<Real>("fusion_gmf", 1, d);
    fusion_mlp_ = Parameter<Real>("fusion_mlp", 1, in);
    bias_ = Parameter<Real>("bias", 1, 1);
  }

  /// MLP weights Glorot-uniform, fusion weights LeCun-uniform, biases zero.
  NeuMfModel(std::unique_ptr<EmbeddingLayer<Real>> gmf_user, std::unique_ptr<EmbeddingLayer<Real>> gmf_item,
             std::unique_ptr<EmbeddingLayer<Real>> mlp_user, std::unique_ptr<EmbeddingLayer<Real>> mlp_item,
             Rng& rng)
      : NeuMfModel(std::move(gmf_user), std::move(gmf_item), std::move(mlp_user), std::move(mlp_item)) {
    for (int l = 0; l < kHidden; ++l)
      glorot_uniform(weights_[l].value, weights_[l].cols(), weights_[l].rows(), rng);
    const Index fan_in = fusion_gmf_.cols() + fusion_mlp_.cols();
    lecun_uniform(fusion_gmf_.value, fan_in, rng);
    lecun_uniform(fusion_mlp_.value, fan_in, rng);
  }

  NeuMfModel(const NeuMfModel& o)
      : gmf_user_(o.gmf_user_->clone()), gmf_item_(o.gmf_item_->clone()),
        mlp_user_(o.mlp_user_->clone()), mlp_item_(o.mlp_item_->clone()), weights_(o.weights_),
        biases_(o.biases_), fusion_gmf_(o.fusion_gmf_), fusion_mlp_(o.fusion_mlp_), bias_(o.bias_) {}
  NeuMfModel(NeuMfModel&&) noexcept = default;
  NeuMfModel& operator=(NeuMfModel&&) noexcept = default;

  Index dim() const { return gmf_user_->dim(); }
  Index num_users() const { return gmf_user_->vocab_size(); }
  Index num_items() const { return gmf_item_->vocab_size(); }

  EmbeddingLayer<Real>& gmf_user_embedding() { return *gmf_user_; }
  EmbeddingLayer<Real>& gmf_item_embedding() { return *gmf_item_; }
  EmbeddingLayer<Real>& mlp_user_embedding() { return *mlp_user_; }
  EmbeddingLayer<Real>& mlp_item_embedding() { return *mlp_item_; }
  Matrix<Real>& weight(int l) { return weights_[l].value; }
  Matrix<Real>& layer_bias(int l) { return biases_[l].value; }
  Matrix<Real>& fusion_gmf() { return fusion_gmf_.value; }
  Matrix<Real>& fusion_mlp() { return fusion_mlp_.value; }
  Real& bias() { return bias_.value(0, 0); }
  Real bias() const { return bias_.value(0, 0); }

  std::vector<Real> forward(std::span<const Index> users, std::span<const Index> items,
                            Context& ctx) const {
    require(users.size() == items.size(), "NeuMF batch: user and item counts differ");
    ctx.ug = gmf_user_->forward(users, ctx.gmf_user);
    ctx.ig = gmf_item_->forward(items, ctx.gmf_item);
    ctx.um = mlp_user_->forward(users, ctx.mlp_user);
    ctx.im = mlp_item_->forward(items, ctx.mlp_item);
    return fuse(ctx);
  }

  std::vector<Real> predict(std::span<const Index> users, std::span<const Index> items) const {
    Context ctx;
    require(users.size() == items.size(), "NeuMF batch: user and item counts differ");
    ctx.ug = gmf_user_->lookup(users);
    ctx.ig = gmf_item_->lookup(items);
    ctx.um = mlp_user_->lookup(users);
    ctx.im = mlp_item_->lookup(items);
    return fuse(ctx);
  }

  void backward(const Context& ctx, std::span<const Real> dlogits) {
    const Index batch = ctx.ug.rows();
    const Index d = dim();
    const Eigen::Map<const Vector<Real>> dl(dlogits.data(), batch);

    bias_.grad(0, 0) += dl.sum();
    const Matrix<Real> g = ctx.ug.cwiseProduct(ctx.ig);
    fusion_gmf_.grad.noalias() += dl.transpose() * g;
    fusion_mlp_.grad.noalias() += dl.transpose() * ctx.a[kHidden - 1];

    const Matrix<Real> dg = dl * fusion_gmf_.value;  // B x d
    gmf_user_->backward(ctx.gmf_user, dg.cwiseProduct(ctx.ig));
    gmf_item_->backward(ctx.gmf_item, dg.cwiseProduct(ctx.ug));

    Matrix<Real> da = dl * fusion_mlp_.value;
    for (int l = kHidden - 1; l >= 0; --l) {
      const Matrix<Real> dz = da.cwiseProduct(
          ctx.z[l].unaryExpr([](Real v) { return v > 0 ? Real(1) : Real(0); }));
      const Matrix<Real>& input = l == 0 ? ctx.x : ctx.a[l - 1];
      weights_[l].grad.noalias() += dz.transpose() * input;
      biases_[l].grad += dz.colwise().sum();
      da = dz * weights_[l].value;
    }
    mlp_user_->backward(ctx.mlp_user, da.leftCols(d));
    mlp_item_->backward(ctx.mlp_item, da.rightCols(d));
  }

  double backward_vq(const Context& ctx, double beta) {
    return apply_vq_loss(*gmf_user_, ctx.gmf_user, beta) + apply_vq_loss(*gmf_item_, ctx.gmf_item, beta) +
           apply_vq_loss(*mlp_user_, ctx.mlp_user, beta) + apply_vq_loss(*mlp_item_, ctx.mlp_item, beta);
  }

  void parameters(ParameterList<Real>& out) {
    gmf_user_->parameters(out);
    gmf_item_->parameters(out);
    mlp_user_->parameters(out);
    mlp_item_->parameters(out);
    for (auto* p : dense_parameters()) out.push_back(p);
  }

  /// Non-embedding weights in serialization order.
  std::vector<Parameter<Real>*> dense_parameters() {
    std::vector<Parameter<Real>*> out;
    for (int l = 0; l < kHidden; ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    out.push_back(&fusion_gmf_);
    out.push_back(&fusion_mlp_);
    out.push_back(&bias_);
    return out;
  }
  std::vector<const Parameter<Real>*> dense_parameters() const {
    auto mut = const_cast<NeuMfModel*>(this)->dense_parameters();
    return {mut.begin(), mut.end()};
  }

  std::vector<const EmbeddingLayer<Real>*> tables() const {
    return {gmf_user_.get(), gmf_item_.get(), mlp_user_.get(), mlp_item_.get()};
  }

  void after_update() {
    gmf_user_->after_update();
    gmf_item_->after_update();
    mlp_user_->after_update();
    mlp_item_->after_update();
  }

  void freeze() {
    gmf_user_->freeze();
    gmf_item_->freeze();
    mlp_user_->freeze();
    mlp_item_->freeze();
  }
  bool frozen() const {
    return gmf_user_->frozen() && gmf_item_->frozen() && mlp_user_->frozen() && mlp_item_->frozen();
  }

  class Scorer {
   public:
    explicit Scorer(const NeuMfModel& m) : model_(&m) {
      std::vector<Index> all(m.num_items());
      for (Index i = 0; i < m.num_items(); ++i) all[i] = i;
      items_gmf_ = m.gmf_item_->lookup(all);
      const Index d = m.dim();
      // First MLP layer split into its user and item halves.
      items_hidden_ = m.mlp_item_->lookup(all) * m.weights_[0].value.rightCols(d).transpose();
    }
    void score(Index user, std::span<Real> out) const {
      const NeuMfModel& m = *model_;
      const Index d = m.dim();
      const Index id[1] = {user};
      const Matrix<Real> ug = m.gmf_user_->lookup(id);
      const Matrix<Real> um = m.mlp_user_->lookup(id);
      const Matrix<Real> user_part =
          um * m.weights_[0].value.leftCols(d).transpose() + m.biases_[0].value;
      Matrix<Real> a = (items_hidden_.rowwise() + user_part.row(0)).cwiseMax(Real(0));
      for (int l = 1; l < kHidden; ++l) {
        Matrix<Real> z = a * m.weights_[l].value.transpose();
        z.rowwise() += m.biases_[l].value.row(0);
        a = z.cwiseMax(Real(0));
      }
      const Vector<Real> wg = (ug.row(0).array() * m.fusion_gmf_.value.row(0).array()).transpose();
      Eigen::Map<Vector<Real>> scores(out.data(), static_cast<Index>(out.size()));
      scores.noalias() = items_gmf_ * wg;
      scores.noalias() += a * m.fusion_mlp_.value.row(0).transpose();
      scores.array() += m.bias();
    }

   private:
    const NeuMfModel* model_;
    Matrix<Real> items_gmf_;
    Matrix<Real> items_hidden_;
  };
  Scorer scorer() const { return Scorer(*this); }

 private:
  std::vector<Real> fuse(Context& ctx) const {
    const Index batch = ctx.ug.rows();
    const Index d = dim();
    ctx.x.resize(batch, 2 * d);
    ctx.x.leftCols(d) = ctx.um;
    ctx.x.rightCols(d) = ctx.im;
    for (int l = 0; l < kHidden; ++l) {
      const Matrix<Real>& input = l == 0 ? ctx.x : ctx.a[l - 1];
      ctx.z[l] = input * weights_[l].value.transpose();
      ctx.z[l].rowwise() += biases_[l].value.row(0);
      ctx.a[l] = ctx.z[l].cwiseMax(Real(0));
    }
    const Vector<Real> logits = ctx.ug.cwiseProduct(ctx.ig) * fusion_gmf_.value.row(0).transpose() +
                                ctx.a[kHidden - 1] * fusion_mlp_.value.row(0).transpose();
    std::vector<Real> out(batch);
    for (Index b = 0; b < batch; ++b) out[b] = logits(b) + bias_.value(0, 0);
    return out;
  }

  std::unique_ptr<EmbeddingLayer<Real>> gmf_user_, gmf_item_, mlp_user_, mlp_item_;
  std::array<Parameter<Real>, kHidden> weights_;
  std::array<Parameter<Real>, kHidden> biases_;
  Parameter<Real> fusion_gmf_;
  Parameter<Real> fusion_mlp_;
  Parameter<Real> bias_;
};

}  // namespace mgqe
