#pragma once

#include "mgqe/common.hpp"

#include <cmath>
#include <random>

namespace mgqe {

template <typename Real, typename Rng>
void uniform_fill(Matrix<Real>& m, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng));
}

template <typename Real, typename Rng>
void lecun_uniform(Matrix<Real>& m, Index fan_in, Rng& rng) {
  uniform_fill(m, std::sqrt(3.0 / static_cast<double>(fan_in)), rng);
}

template <typename Real, typename Rng>
void glorot_uniform(Matrix<Real>& m, Index fan_in, Index fan_out, Rng& rng) {
  uniform_fill(m, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

}  // namespace mgqe
