#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pqscan {

struct BenchRow {
  std::string method;
  std::size_t m = 0;
  std::size_t b = 0;
  std::size_t K = 0;   // 0 for exhaustive scans
  std::size_t ma = 0;  // 0 for exhaustive scans
  std::size_t r = 0;
  std::size_t r2 = 0;  // 0 unless derived
  double recall = 0.0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double mcodes_per_s = 0.0;
  std::optional<double> pruned_fraction;

  bool operator==(const BenchRow&) const = default;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  static constexpr const char* kHeader =
      "method,m,b,K,ma,r,r2,recall,ms_per_query,median_ms,mcodes_per_s,pruned_fraction";
  static constexpr const char* kRecallHeader = "method,m,b,r,recall,ms_per_query";

  /// Full report, one row per configuration.
  void write_csv(std::ostream& out) const;
  /// Short recall table.
  void write_recall_csv(std::ostream& out) const;
  /// Parses write_csv output; throws FormatError on malformed input.
  static BenchReport parse_csv(std::istream& in);
};

/// Mean and median of per-query times in milliseconds.
struct Timing {
  double mean_ms = 0.0;
  double median_ms = 0.0;
};
Timing summarize_times(std::vector<double> ms);

}  // namespace pqscan
