#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgqe {

using Index = std::int64_t;

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Invalid data or arguments that are well-formed but unusable.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Operation not valid in the object's current state (e.g. backward on a frozen layer).
class StateError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

/// Number of bits needed to store an index in [0, k); 0 when k <= 1.
inline int bits_for(std::uint64_t k) {
  int bits = 0;
  while (bits < 64 && (std::uint64_t{1} << bits) < k) ++bits;
  return bits;
}

}  // namespace mgqe
