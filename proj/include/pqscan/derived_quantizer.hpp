#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pqscan/adc_scan.hpp"
#include "pqscan/table_quantization.hpp"

namespace pqscan {

// Derived quantizers: every sub-space has a fine codebook of 2^b centroids
// and a coarse one of 2^bbar centroids such that fine centroid i belongs to
// coarse cluster (i mod 2^bbar). Codes are stored once, with b-bit
// sub-indexes; the low bbar bits address the coarse codebook. A search first
// ranks codes with small 8-bit tables over the coarse codebooks, keeps about
// r2 candidates, then reranks them with exact fine-codebook distances.

struct DerivedCodebooks {
  Codebook full;     // 2^b centroids, ordered so that low bits give the cluster
  Codebook derived;  // 2^bbar centroids (cluster means)
};

/// kmeans(k) on the sub-vectors, same_size_kmeans(kbar) on the resulting
/// centroids, then member t of cluster l gets index t * kbar + l.
/// k and kbar must be powers of two with kbar <= k.
DerivedCodebooks build_derived_quantizers(const DenseMatrix& training_sub, std::size_t kbar,
                                          std::size_t k, const TrainConfig& cfg);

class DerivedPQ {
 public:
  DerivedPQ() = default;
  DerivedPQ(ProductQuantizer full, std::size_t bbar, std::vector<Codebook> derived);

  const ProductQuantizer& full() const noexcept { return full_; }
  std::size_t bbar() const noexcept { return bbar_; }
  std::size_t kbar() const noexcept { return std::size_t{1} << bbar_; }
  const std::vector<Codebook>& derived() const noexcept { return derived_; }
  const Codebook& derived(std::size_t j) const { return derived_.at(j); }

  std::uint32_t low_bits(std::uint32_t i) const noexcept {
    return i & static_cast<std::uint32_t>(kbar() - 1);
  }

  bool operator==(const DerivedPQ&) const = default;

  // PQZ1 with flag bit 1 set, followed by u32 bbar and m derived codebooks of
  // 2^bbar x d/m f32. A plain ProductQuantizer::load skips the trailer.
  void save(std::ostream& out) const;
  static DerivedPQ load(std::istream& in, std::uint64_t base_offset = 0);
  void save(const std::filesystem::path& path) const;
  static DerivedPQ load(const std::filesystem::path& path);

 private:
  ProductQuantizer full_;
  std::size_t bbar_ = 0;
  std::vector<Codebook> derived_;
};

/// One build_derived_quantizers per sub-space (seed + j).
DerivedPQ train_derived_pq(const DenseMatrix& training, std::size_t m, std::size_t b,
                           std::size_t bbar, const TrainConfig& cfg);

/// m tables of 2^bbar floats against the derived codebooks.
LookupTables compute_compact_tables(const DerivedPQ& dpq, std::span<const float> y);

struct QuantizedCompactTables {
  QuantParams params;  // 255 bins
  std::size_t m = 0;
  std::size_t kbar = 0;
  std::vector<std::uint8_t> values;  // m x kbar

  std::uint8_t at(std::size_t j, std::size_t l) const { return values[j * kbar + l]; }
};

/// qmin = table minimum; qmax = largest approximate distance over the first
/// min(r2, n) codes. Entries quantized into 255 bins.
QuantizedCompactTables quantize_compact_tables(const LookupTables& compact, const CodeList& db,
                                               std::size_t r2);

/// Approximate distance of code i: sum of qt(j, low bits of c[j]), saturated at 255.
std::uint8_t approximate_distance(const QuantizedCompactTables& qt, const CodeList& db, std::size_t i);

/// Candidate store indexed by 8-bit approximate distance. Buckets 0..254 hold
/// in-range distances, bucket 255 everything at or above qmax. A bucket is
/// dropped once the buckets below it already hold at least r2 candidates.
class CappedBuckets {
 public:
  static constexpr std::size_t kBuckets = 256;

  explicit CappedBuckets(std::size_t r2);

  /// Inserts position `pos` with distance `q`; false when rejected.
  bool put(std::uint32_t pos, std::uint8_t q);

  std::size_t r2() const noexcept { return r2_; }
  std::size_t size() const noexcept { return count_; }
  /// Highest distance still admitted.
  std::size_t upper_bound() const noexcept { return upper_; }
  std::span<const std::uint32_t> bucket(std::size_t q) const { return buckets_[q]; }

 private:
  std::size_t r2_;
  std::size_t count_ = 0;
  std::size_t upper_ = kBuckets - 1;
  std::array<std::vector<std::uint32_t>, kBuckets> buckets_;
};

CappedBuckets scan_candidates(const CodeList& db, const QuantizedCompactTables& qt, std::size_t r2);

struct RerankStats {
  std::size_t candidates = 0;      // codes reranked
  std::size_t table_entries = 0;   // lazily computed fine-table entries
};

/// Exact ADC over the candidates of whole buckets, lowest first, until at
/// least r2 have been processed. Fine-table entries are computed on first use.
NeighborSet rerank(const CodeList& db, const CappedBuckets& cand, const ProductQuantizer& full,
                   std::span<const float> y, std::size_t r, std::size_t r2,
                   RerankStats* stats = nullptr);

/// Compact tables, quantization, candidate scan, rerank.
NeighborSet search_two_pass(const DerivedPQ& dpq, const CodeList& db, std::span<const float> y,
                            std::size_t r, std::size_t r2, RerankStats* stats = nullptr);

}  // namespace pqscan
