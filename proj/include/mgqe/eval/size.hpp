#pragma once

#include "mgqe/common.hpp"
#include "mgqe/embedding/layer.hpp"

#include <cstdint>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace mgqe {

/// Serving size of a model: embedding components from the analytic formulas
/// plus dense weights at 32 bits per value. Ratios compare against the same
/// model with float (Full) embedding tables.
struct SizeReport {
  std::vector<EmbeddingBits> tables;
  std::uint64_t dense_bits = 0;
  std::uint64_t full_bits = 0;  // same architecture with Full tables

  std::uint64_t table_bits() const { return sum([](const EmbeddingBits& b) { return b.table_bits; }); }
  std::uint64_t codebook_bits() const { return sum([](const EmbeddingBits& b) { return b.codebook_bits; }); }
  std::uint64_t overhead_bits() const { return sum([](const EmbeddingBits& b) { return b.overhead_bits; }); }
  std::uint64_t code_bits_packed() const { return sum([](const EmbeddingBits& b) { return b.code_bits_packed; }); }
  double code_bits_exact() const {
    double s = 0;
    for (const auto& b : tables) s += b.code_bits_exact;
    return s;
  }
  double embedding_exact() const {
    double s = 0;
    for (const auto& b : tables) s += b.total_exact();
    return s;
  }
  std::uint64_t embedding_packed() const { return sum([](const EmbeddingBits& b) { return b.total_packed(); }); }
  double total_exact() const { return embedding_exact() + static_cast<double>(dense_bits); }
  std::uint64_t total_packed() const { return embedding_packed() + dense_bits; }
  double ratio_exact() const { return full_bits ? total_exact() / static_cast<double>(full_bits) : 0.0; }
  double ratio_packed() const {
    return full_bits ? static_cast<double>(total_packed()) / static_cast<double>(full_bits) : 0.0;
  }

 private:
  template <typename F>
  std::uint64_t sum(F f) const {
    std::uint64_t s = 0;
    for (const auto& b : tables) s += f(b);
    return s;
  }
};

/// Builds a report from table breakdowns, their (n, d) shapes and the dense
/// parameter count.
inline SizeReport make_size_report(std::vector<EmbeddingBits> tables,
                                   const std::vector<std::pair<Index, Index>>& shapes,
                                   std::uint64_t dense_values) {
  SizeReport r;
  r.tables = std::move(tables);
  r.dense_bits = 32ull * dense_values;
  r.full_bits = r.dense_bits;
  for (const auto& [n, d] : shapes) r.full_bits += 32ull * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(d);
  return r;
}

template <typename Model>
SizeReport size_report(const Model& model) {
  std::vector<EmbeddingBits> tables;
  std::vector<std::pair<Index, Index>> shapes;
  for (const auto* layer : model.tables()) {
    tables.push_back(layer->size_bits());
    shapes.emplace_back(layer->vocab_size(), layer->dim());
  }
  std::uint64_t dense = 0;
  for (const auto* p : model.dense_parameters()) dense += static_cast<std::uint64_t>(p->value.size());
  return make_size_report(std::move(tables), shapes, dense);
}

inline void write_size_csv(std::ostream& out, const SizeReport& r) {
  out << "component,bits\n";
  out << std::setprecision(12);
  out << "embedding_tables," << r.table_bits() << '\n';
  out << "codes_exact," << r.code_bits_exact() << '\n';
  out << "codes_packed," << r.code_bits_packed() << '\n';
  out << "codebooks," << r.codebook_bits() << '\n';
  out << "sq_minmax_overhead," << r.overhead_bits() << '\n';
  out << "dense_weights," << r.dense_bits << '\n';
  out << "total_exact," << r.total_exact() << '\n';
  out << "total_packed," << r.total_packed() << '\n';
  out << "full_baseline," << r.full_bits << '\n';
  out << "ratio_exact," << r.ratio_exact() << '\n';
  out << "ratio_packed," << r.ratio_packed() << '\n';
}

}  // namespace mgqe
