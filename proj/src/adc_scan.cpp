#include "pqscan/adc_scan.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace pqscan {

float LookupTables::min_value() const {
  if (values_.empty()) return 0.0f;
  return *std::min_element(values_.begin(), values_.end());
}

LookupTables compute_tables(std::span<const Codebook> codebooks, std::span<const float> y_rotated) {
  const std::size_t m = codebooks.size();
  if (m == 0) throw InvalidArgument("compute_tables: no codebooks");
  const std::size_t ds = codebooks[0].dim();
  if (y_rotated.size() != m * ds) {
    throw InvalidArgument("compute_tables: query has " + std::to_string(y_rotated.size()) +
                          " dims, codebooks cover " + std::to_string(m * ds));
  }
  const std::size_t k = codebooks[0].size();
  LookupTables tables(m, k);
  for (std::size_t j = 0; j < m; ++j) {
    auto sub = y_rotated.subspan(j * ds, ds);
    auto t = tables.table(j);
    for (std::size_t i = 0; i < k; ++i) t[i] = squared_l2(sub, codebooks[j].centroid(i));
  }
  return tables;
}

LookupTables compute_tables(const ProductQuantizer& pq, std::span<const float> y) {
  if (y.size() != pq.dim()) {
    throw InvalidArgument("compute_tables: query has " + std::to_string(y.size()) +
                          " dims, quantizer expects " + std::to_string(pq.dim()));
  }
  const auto yr = pq.rotate(y);
  return compute_tables(std::span<const Codebook>(pq.codebooks()), yr);
}

float adc_distance(const LookupTables& tables, std::span<const std::uint16_t> code) {
  if (code.size() != tables.m()) throw InvalidArgument("adc_distance: code length differs from m");
  float d = 0.0f;
  for (std::size_t j = 0; j < code.size(); ++j) {
    if (code[j] >= tables.ksub()) throw InvalidArgument("adc_distance: sub-index out of range");
    d += tables.at(j, code[j]);
  }
  return d;
}

float adc_distance(const LookupTables& tables, const CodeList& list, std::size_t i) {
  float d = 0.0f;
  for (std::size_t j = 0; j < list.m(); ++j) d += tables.at(j, list.component(i, j));
  return d;
}

namespace {

void check_shape(const CodeList& list, const LookupTables& tables) {
  if (list.m() != tables.m() || (std::size_t{1} << list.bits()) != tables.ksub()) {
    throw InvalidArgument("scan: code list shape does not match lookup tables");
  }
}

template <typename DistanceAt>
void scan_loop(const CodeList& list, NeighborSet& out, DistanceAt&& distance_at) {
  const std::size_t n = list.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float d = distance_at(i);
    if (out.full() && d > out.worst().distance) continue;
    out.add(list.id(i), d);
  }
}

}  // namespace

void scan_into(const CodeList& list, const LookupTables& tables, NeighborSet& out) {
  check_shape(list, tables);
  const std::size_t m = list.m();
  const std::size_t k = tables.ksub();
  const float* t = tables.values().data();
  const std::uint8_t* codes = list.bytes().data();
  const std::size_t cs = list.code_size();

  if (list.bits() == 8 && m == 8) {
    scan_loop(list, out, [&](std::size_t i) {
      const std::uint8_t* c = codes + i * 8;
      float d = t[c[0]];
      d += t[256 + c[1]];
      d += t[512 + c[2]];
      d += t[768 + c[3]];
      d += t[1024 + c[4]];
      d += t[1280 + c[5]];
      d += t[1536 + c[6]];
      d += t[1792 + c[7]];
      return d;
    });
  } else if (list.bits() == 8) {
    scan_loop(list, out, [&](std::size_t i) {
      const std::uint8_t* c = codes + i * cs;
      float d = 0.0f;
      for (std::size_t j = 0; j < m; ++j) d += t[j * k + c[j]];
      return d;
    });
  } else if (list.bits() == 4) {
    scan_loop(list, out, [&](std::size_t i) {
      const std::uint8_t* c = codes + i * cs;
      float d = 0.0f;
      const float* tj = t;
      for (std::size_t h = 0; h < m / 2; ++h, tj += 32) {
        d += tj[c[h] & 0x0f];
        d += tj[16 + (c[h] >> 4)];
      }
      if (m & 1) d += tj[c[m / 2] & 0x0f];
      return d;
    });
  } else {
    scan_loop(list, out, [&](std::size_t i) {
      const std::uint8_t* c = codes + i * cs;
      float d = 0.0f;
      for (std::size_t j = 0; j < m; ++j) d += t[j * k + (c[2 * j] | (c[2 * j + 1] << 8))];
      return d;
    });
  }
}

NeighborSet scan(const CodeList& list, const LookupTables& tables, std::size_t r) {
  if (r == 0) throw InvalidArgument("scan: r must be >= 1");
  NeighborSet out(std::min(r, list.size()));
  scan_into(list, tables, out);
  return out;
}

// ---------------------------------------------------------------------------

std::uint16_t TransposedCodeList::component(std::size_t i, std::size_t j) const {
  const std::uint8_t* blk = bytes_.data() + (i / kBlock) * block_bytes();
  const std::size_t lane = i % kBlock;
  if (b_ == 4) return static_cast<std::uint16_t>((blk[(j / 2) * kBlock + lane] >> ((j & 1) * 4)) & 0x0f);
  return blk[j * kBlock + lane];
}

TransposedCodeList transpose_blocks(const CodeList& list) {
  if (list.bits() != 4 && list.bits() != 8) {
    throw InvalidArgument("transpose_blocks: only b=4 and b=8 lists can be block-transposed");
  }
  TransposedCodeList out;
  out.n_ = list.size();
  out.m_ = list.m();
  out.b_ = list.bits();
  out.bytes_.assign(out.block_count() * out.block_bytes(), 0);
  constexpr std::size_t B = TransposedCodeList::kBlock;
  for (std::size_t i = 0; i < list.size(); ++i) {
    std::uint8_t* blk = out.bytes_.data() + (i / B) * out.block_bytes();
    const std::size_t lane = i % B;
    auto packed = list.packed(i);
    if (out.b_ == 4) {
      // The nibble-packed code already has components (2j, 2j+1) in byte j.
      for (std::size_t row = 0; row < out.rows_per_block(); ++row) blk[row * B + lane] = packed[row];
    } else {
      for (std::size_t j = 0; j < out.m_; ++j) blk[j * B + lane] = packed[j];
    }
  }
  if (list.has_explicit_ids()) {
    out.ids_.resize(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) out.ids_[i] = list.id(i);
  }
  return out;
}

CodeList detranspose(const TransposedCodeList& tlist) {
  CodeList out(tlist.m_, tlist.b_);
  out.reserve(tlist.n_);
  Code code(tlist.m_);
  for (std::size_t i = 0; i < tlist.n_; ++i) {
    for (std::size_t j = 0; j < tlist.m_; ++j) code[j] = tlist.component(i, j);
    out.append(code, tlist.id(i));
  }
  return out;
}

}  // namespace pqscan
