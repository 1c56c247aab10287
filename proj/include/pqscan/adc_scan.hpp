#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pqscan/code_list.hpp"
#include "pqscan/neighbor_set.hpp"
#include "pqscan/product_quantizer.hpp"

namespace pqscan {

/// m tables of ksub floats; entry (j, i) is the squared distance between the
/// j-th query sub-vector and centroid i of codebook j.
class LookupTables {
 public:
  LookupTables() = default;
  LookupTables(std::size_t m, std::size_t ksub) : m_(m), ksub_(ksub), values_(m * ksub, 0.0f) {}

  std::size_t m() const noexcept { return m_; }
  std::size_t ksub() const noexcept { return ksub_; }

  std::span<const float> table(std::size_t j) const { return {values_.data() + j * ksub_, ksub_}; }
  std::span<float> table(std::size_t j) { return {values_.data() + j * ksub_, ksub_}; }
  float at(std::size_t j, std::size_t i) const { return values_[j * ksub_ + i]; }
  const std::vector<float>& values() const noexcept { return values_; }

  float min_value() const;
  std::size_t byte_size() const noexcept { return values_.size() * sizeof(float); }

 private:
  std::size_t m_ = 0;
  std::size_t ksub_ = 0;
  std::vector<float> values_;
};

/// Tables for query y (rotated first when the quantizer carries a rotation).
LookupTables compute_tables(const ProductQuantizer& pq, std::span<const float> y);

/// Tables against arbitrary per-sub-space codebooks for an already rotated
/// query; shared by the derived-quantizer compact tables.
LookupTables compute_tables(std::span<const Codebook> codebooks, std::span<const float> y_rotated);

/// Sum over j = 0..m-1 of table j at c[j], accumulated in that order.
float adc_distance(const LookupTables& tables, std::span<const std::uint16_t> code);

/// Same sum read straight from position i of a list.
float adc_distance(const LookupTables& tables, const CodeList& list, std::size_t i);

/// The r codes with the smallest ADC distance (ties: smaller id). r > n
/// returns every code.
NeighborSet scan(const CodeList& list, const LookupTables& tables, std::size_t r);

/// Scans into an existing set (used to merge several inverted lists).
void scan_into(const CodeList& list, const LookupTables& tables, NeighborSet& out);

/// Blocks of 16 codes, each stored component-major. For b = 8 a block holds m
/// rows of 16 bytes (row j = component j of the 16 codes). For b = 4 a block
/// holds ceil(m/2) rows; byte t of row j packs component 2j of code t in its
/// low nibble and component 2j+1 in its high nibble. The tail block is zero
/// padded.
class TransposedCodeList {
 public:
  static constexpr std::size_t kBlock = 16;

  TransposedCodeList() = default;

  std::size_t size() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t bits() const noexcept { return b_; }
  std::size_t block_count() const noexcept { return (n_ + kBlock - 1) / kBlock; }
  std::size_t rows_per_block() const noexcept { return b_ == 4 ? (m_ + 1) / 2 : m_; }
  std::size_t block_bytes() const noexcept { return rows_per_block() * kBlock; }

  std::span<const std::uint8_t> block(std::size_t blk) const {
    return {bytes_.data() + blk * block_bytes(), block_bytes()};
  }
  /// Number of real (non-padding) codes in a block.
  std::size_t valid(std::size_t blk) const {
    return std::min(kBlock, n_ - blk * kBlock);
  }
  std::int64_t id(std::size_t i) const {
    return ids_.empty() ? static_cast<std::int64_t>(i) : ids_[i];
  }
  std::uint16_t component(std::size_t i, std::size_t j) const;

  friend TransposedCodeList transpose_blocks(const CodeList& list);
  friend CodeList detranspose(const TransposedCodeList& tlist);

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t b_ = 0;
  std::vector<std::uint8_t> bytes_;
  std::vector<std::int64_t> ids_;
};

TransposedCodeList transpose_blocks(const CodeList& list);
CodeList detranspose(const TransposedCodeList& tlist);

}  // namespace pqscan
