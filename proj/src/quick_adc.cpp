#include "pqscan/quick_adc.hpp"

#include <algorithm>
#include <string>

#if defined(__SSSE3__)
#include <immintrin.h>
#define PQSCAN_HAVE_SSSE3 1
#endif

namespace pqscan {

QuantizedTables4 quantize_tables_4bit(const LookupTables& tables, const QuantParams& params) {
  if (tables.ksub() != 16) {
    throw InvalidArgument("quantize_tables_4bit: tables have " + std::to_string(tables.ksub()) +
                          " entries, need 16 (b=4)");
  }
  QuantizedTables4 qt;
  qt.params = params;
  qt.t.resize(tables.m());
  for (std::size_t j = 0; j < tables.m(); ++j) {
    for (std::size_t i = 0; i < 16; ++i) qt.t[j][i] = params.quantize(tables.at(j, i));
  }
  return qt;
}

namespace {

void check_block(std::span<const std::uint8_t> block, const QuantizedTables4& qt) {
  if (qt.m() % 2 != 0) throw InvalidArgument("qadc_block: m must be even");
  if (block.size() != qt.m() / 2 * 16) throw InvalidArgument("qadc_block: block size does not match m");
}

void block_scalar(const std::uint8_t* block, const QuantizedTables4& qt, std::uint8_t* out) {
  for (std::size_t lane = 0; lane < 16; ++lane) {
    int acc = 0;
    for (std::size_t j = 0; j < qt.m(); ++j) {
      const std::uint8_t byte = block[(j / 2) * 16 + lane];
      const std::uint8_t c = (j & 1) ? (byte >> 4) : (byte & 15);
      acc = std::min(127, acc + qt.t[j][c]);
    }
    out[lane] = static_cast<std::uint8_t>(acc);
  }
}

#if PQSCAN_HAVE_SSSE3
void block_ssse3(const std::uint8_t* block, const QuantizedTables4& qt, std::uint8_t* out) {
  const __m128i low_mask = _mm_set1_epi8(0x0f);
  __m128i acc = _mm_setzero_si128();
  for (std::size_t j = 0; j < qt.m(); j += 2) {
    const __m128i comps = _mm_loadu_si128(reinterpret_cast<const __m128i*>(block + (j / 2) * 16));
    const __m128i even = _mm_and_si128(comps, low_mask);
    const __m128i t0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(qt.t[j].data()));
    acc = _mm_adds_epi8(acc, _mm_shuffle_epi8(t0, even));
    const __m128i odd = _mm_and_si128(_mm_srli_epi16(comps, 4), low_mask);
    const __m128i t1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(qt.t[j + 1].data()));
    acc = _mm_adds_epi8(acc, _mm_shuffle_epi8(t1, odd));
  }
  _mm_storeu_si128(reinterpret_cast<__m128i*>(out), acc);
}
#endif

void block_kernel(const std::uint8_t* block, const QuantizedTables4& qt, std::uint8_t* out) {
#if PQSCAN_HAVE_SSSE3
  block_ssse3(block, qt, out);
#else
  block_scalar(block, qt, out);
#endif
}

}  // namespace

std::array<std::uint8_t, 16> qadc_block(std::span<const std::uint8_t> block, const QuantizedTables4& qt) {
  check_block(block, qt);
  std::array<std::uint8_t, 16> out{};
  block_kernel(block.data(), qt, out.data());
  return out;
}

std::array<std::uint8_t, 16> qadc_block_scalar(std::span<const std::uint8_t> block,
                                               const QuantizedTables4& qt) {
  check_block(block, qt);
  std::array<std::uint8_t, 16> out{};
  block_scalar(block.data(), qt, out.data());
  return out;
}

QuantParams qadc_params(const TransposedCodeList& tlist, const LookupTables& tables,
                        std::size_t init_count, std::size_t r) {
  if (tlist.size() == 0) throw InvalidArgument("qadc: empty list");
  if (r == 0) throw InvalidArgument("qadc: r must be >= 1");
  if (tlist.m() != tables.m() || tables.ksub() != 16 || tlist.bits() != 4) {
    throw InvalidArgument("qadc: list and tables must both be m x 4");
  }
  const std::size_t count = std::clamp<std::size_t>(init_count, 1, tlist.size());
  NeighborSet tmp(std::min(r, count));
  for (std::size_t i = 0; i < count; ++i) {
    float d = 0.0f;
    for (std::size_t j = 0; j < tlist.m(); ++j) d += tables.at(j, tlist.component(i, j));
    tmp.add(static_cast<std::int64_t>(i), d);
  }
  QuantParams p;
  p.qmin = tables.min_value();
  p.qmax = tmp.worst().distance;
  p.bins = 127;
  return p;
}

void qadc_scan_into(const TransposedCodeList& tlist, const QuantizedTables4& qt, NeighborSet& out) {
  if (tlist.bits() != 4) throw InvalidArgument("qadc_scan: list must have b=4");
  if (tlist.m() != qt.m()) throw InvalidArgument("qadc_scan: list and tables disagree on m");
  if (qt.m() % 2 != 0) throw InvalidArgument("qadc_scan: m must be even");
  alignas(16) std::uint8_t dist[16];
  for (std::size_t blk = 0; blk < tlist.block_count(); ++blk) {
    block_kernel(tlist.block(blk).data(), qt, dist);
    const std::size_t valid = tlist.valid(blk);
    for (std::size_t lane = 0; lane < valid; ++lane) {
      const float d = dist[lane];
      if (out.full() && d > out.worst().distance) continue;
      out.add(tlist.id(blk * 16 + lane), d);
    }
  }
}

QadcResult qadc_scan(const TransposedCodeList& tlist, const LookupTables& tables,
                     std::size_t init_count, std::size_t r) {
  QadcResult res{NeighborSet(std::min(r, tlist.size())), qadc_params(tlist, tables, init_count, r)};
  qadc_scan_into(tlist, quantize_tables_4bit(tables, res.params), res.neighbors);
  return res;
}

}  // namespace pqscan
