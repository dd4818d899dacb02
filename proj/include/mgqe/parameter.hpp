#pragma once

#include "mgqe/common.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace mgqe {

/// A learnable tensor with its gradient accumulator.
///
/// Row-sparse parameters (embedding tables) record which rows received
/// gradient so the optimizer can update only those rows.
template <typename Real>
struct Parameter {
  std::string name;
  Matrix<Real> value;
  Matrix<Real> grad;
  bool row_sparse = false;
  std::vector<Index> touched_rows;

  Parameter() = default;
  Parameter(std::string n, Index rows, Index cols, bool sparse = false)
      : name(std::move(n)),
        value(Matrix<Real>::Zero(rows, cols)),
        grad(Matrix<Real>::Zero(rows, cols)),
        row_sparse(sparse) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }

  void touch(Index row) {
    if (row_sparse) touched_rows.push_back(row);
  }

  /// Sorted, de-duplicated touched rows.
  std::vector<Index> unique_touched() const {
    std::vector<Index> rows = touched_rows;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return rows;
  }

  void zero_grad() {
    if (row_sparse) {
      for (Index r : unique_touched()) grad.row(r).setZero();
      touched_rows.clear();
    } else {
      grad.setZero();
    }
  }

  /// Drops storage (used when raw training tables are discarded at freeze time).
  void release() {
    value.resize(0, 0);
    grad.resize(0, 0);
    touched_rows.clear();
    touched_rows.shrink_to_fit();
  }
};

template <typename Real>
using ParameterList = std::vector<Parameter<Real>*>;

}  // namespace mgqe
