#pragma once

#include "mgqe/parameter.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace mgqe {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam. Dense parameters are updated every step; row-sparse parameters
/// (embedding tables) only on the rows that received gradient in this step,
/// with bias correction from the global step counter.
template <typename Real>
class Adam {
 public:
  Adam(ParameterList<Real> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (const Parameter<Real>* p : params_) {
      first_.push_back(Matrix<Real>::Zero(p->rows(), p->cols()));
      second_.push_back(Matrix<Real>::Zero(p->rows(), p->cols()));
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }
  const Matrix<Real>& first_moment(std::size_t i) const { return first_[i]; }
  const Matrix<Real>& second_moment(std::size_t i) const { return second_[i]; }

  /// Applies one update from the accumulated gradients, then clears them.
  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const Real b1 = static_cast<Real>(cfg_.beta1);
    const Real b2 = static_cast<Real>(cfg_.beta2);
    const Real step_size = static_cast<Real>(cfg_.learning_rate / bc1);
    const Real inv_sqrt_bc2 = static_cast<Real>(1.0 / std::sqrt(bc2));
    const Real eps = static_cast<Real>(cfg_.epsilon);

    auto update = [&](Real* value, const Real* grad, Real* m, Real* v, Index count) {
      for (Index i = 0; i < count; ++i) {
        const Real g = grad[i];
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      }
    };

    for (std::size_t p = 0; p < params_.size(); ++p) {
      Parameter<Real>& param = *params_[p];
      if (param.row_sparse) {
        const Index cols = param.cols();
        for (Index r : param.unique_touched())
          update(param.value.data() + r * cols, param.grad.data() + r * cols,
                 first_[p].data() + r * cols, second_[p].data() + r * cols, cols);
      } else {
        update(param.value.data(), param.grad.data(), first_[p].data(), second_[p].data(),
               param.value.size());
      }
      param.zero_grad();
    }
  }

 private:
  ParameterList<Real> params_;
  AdamConfig cfg_;
  std::vector<Matrix<Real>> first_;
  std::vector<Matrix<Real>> second_;
  std::int64_t step_ = 0;
};

}  // namespace mgqe
