#include "pqscan/table_quantization.hpp"

#include <algorithm>

namespace pqscan {

float temporary_neighbor_distance(const LookupTables& tables, const CodeList& list,
                                  std::size_t count, std::size_t r) {
  if (list.empty()) throw InvalidArgument("temporary neighbor search over an empty list");
  count = std::clamp<std::size_t>(count, 1, list.size());
  NeighborSet tmp(std::max<std::size_t>(1, std::min(r, count)));
  for (std::size_t i = 0; i < count; ++i) tmp.add(static_cast<std::int64_t>(i), adc_distance(tables, list, i));
  return tmp.worst().distance;
}

QuantParams compute_quant_params(const LookupTables& tables, const CodeList& list, double init,
                                 std::size_t r) {
  if (!(init > 0.0 && init <= 1.0)) throw InvalidArgument("compute_quant_params: init must be in (0, 1]");
  if (list.empty()) throw InvalidArgument("compute_quant_params: empty list");
  if (r == 0) throw InvalidArgument("compute_quant_params: r must be >= 1");
  const auto count = static_cast<std::size_t>(std::ceil(init * static_cast<double>(list.size()) - 1e-9));
  QuantParams p;
  p.qmin = tables.min_value();
  p.qmax = temporary_neighbor_distance(tables, list, count, r);
  p.bins = 127;
  return p;
}

}  // namespace pqscan
