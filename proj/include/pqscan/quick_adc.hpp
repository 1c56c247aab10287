#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pqscan/adc_scan.hpp"
#include "pqscan/table_quantization.hpp"

namespace pqscan {

// Quick ADC for m x 4 codes: 16-entry tables quantized to 8 bits are held in
// registers and indexed by in-register shuffles over transposed blocks of 16
// codes. Distances are sums of quantized entries, saturated at 127.

struct QuantizedTables4 {
  QuantParams params;
  std::vector<std::array<std::uint8_t, 16>> t;  // one per sub-quantizer

  std::size_t m() const noexcept { return t.size(); }
};

/// Entry (j, i) = params.quantize(tables(j, i)). Requires 16-entry tables.
QuantizedTables4 quantize_tables_4bit(const LookupTables& tables, const QuantParams& params);

/// Distances of the 16 codes of one transposed b=4 block (m even). Uses the
/// 16-byte shuffle kernel when available.
std::array<std::uint8_t, 16> qadc_block(std::span<const std::uint8_t> block,
                                        const QuantizedTables4& qt);

/// Plain per-code loop with the same clamping; reference for qadc_block.
std::array<std::uint8_t, 16> qadc_block_scalar(std::span<const std::uint8_t> block,
                                               const QuantizedTables4& qt);

/// QuantParams from the first init_count codes (float ADC): qmin = table
/// minimum, qmax = r-th best distance among them (largest if fewer).
QuantParams qadc_params(const TransposedCodeList& tlist, const LookupTables& tables,
                        std::size_t init_count, std::size_t r);

/// Adds every code of the list with its quantized distance (as a float bin
/// number) to `out`. Padding lanes are ignored.
void qadc_scan_into(const TransposedCodeList& tlist, const QuantizedTables4& qt, NeighborSet& out);

struct QadcResult {
  NeighborSet neighbors;  // distances are bin numbers 0..127
  QuantParams params;
};

/// Full Quick ADC scan: parameters from the first init_count codes, then all
/// blocks. Use params.rescale() to turn the bin numbers back into distances.
QadcResult qadc_scan(const TransposedCodeList& tlist, const LookupTables& tables,
                     std::size_t init_count, std::size_t r);

}  // namespace pqscan
