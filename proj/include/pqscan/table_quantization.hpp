#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "pqscan/adc_scan.hpp"

namespace pqscan {

/// Uniform quantization of distances in [qmin, qmax) into `bins` bins
/// (0..bins-1); anything at or above qmax maps to `bins` itself.
/// Fast Scan and Quick ADC use 127 bins (signed 8-bit positive range);
/// derived quantizers use 255.
struct QuantParams {
  float qmin = 0.0f;
  float qmax = 0.0f;
  int bins = 127;

  std::uint8_t quantize(float v) const {
    if (!(qmax > qmin)) return v <= qmin ? 0 : static_cast<std::uint8_t>(bins);
    if (v >= qmax) return static_cast<std::uint8_t>(bins);
    const double scale = static_cast<double>(bins) / (static_cast<double>(qmax) - qmin);
    const double q = std::floor((static_cast<double>(v) - qmin) * scale);
    if (q <= 0.0) return 0;
    if (q >= bins - 1) return static_cast<std::uint8_t>(bins - 1);
    return static_cast<std::uint8_t>(q);
  }

  /// Representative float of a bin, for human-readable output.
  float rescale(std::uint32_t bin) const {
    return qmin + static_cast<float>(bin) * (qmax - qmin) / static_cast<float>(bins);
  }
};

/// Distance of the r-th nearest code among the first `count` codes of the list
/// (the largest of them when fewer than r are scanned), by float ADC.
float temporary_neighbor_distance(const LookupTables& tables, const CodeList& list,
                                  std::size_t count, std::size_t r);

/// qmin = smallest table entry; qmax = temporary_neighbor_distance over the
/// first ceil(init * n) codes. 127 bins.
QuantParams compute_quant_params(const LookupTables& tables, const CodeList& list, double init,
                                 std::size_t r);

}  // namespace pqscan
