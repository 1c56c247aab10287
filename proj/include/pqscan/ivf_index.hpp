#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pqscan/adc_scan.hpp"
#include "pqscan/derived_quantizer.hpp"
#include "pqscan/quick_adc.hpp"

namespace pqscan {

struct IvfConfig {
  std::size_t K = 256;
  std::size_t m = 8;
  std::size_t b = 8;
  std::size_t bbar = 0;  // > 0 trains derived quantizers for the derived kernel
  bool opq = false;
  TrainConfig train;
};

enum class IvfKernel { Adc, QuickAdc, Derived };

IvfKernel parse_ivf_kernel(const std::string& name);
std::string to_string(IvfKernel k);

struct IvfQueryOptions {
  IvfKernel kernel = IvfKernel::Adc;
  std::size_t init_count = 200;  // quick_adc: codes used to pick qmax
  std::size_t r2 = 9000;         // derived: candidates kept over all scanned lists
};

struct IvfQueryStats {
  std::size_t lists = 0;
  std::size_t scanned = 0;  // codes visited
  std::optional<QuantParams> params;  // quick-adc only
};

/// Coarse quantizer over the full space; each base vector's residual to its
/// nearest coarse centroid is PQ-encoded into that centroid's list.
class IvfIndex {
 public:
  IvfIndex() = default;
  IvfIndex(Codebook coarse, ProductQuantizer pq, std::vector<CodeList> lists,
           std::optional<DerivedPQ> derived = std::nullopt);

  std::size_t K() const noexcept { return coarse_.size(); }
  std::size_t dim() const noexcept { return coarse_.dim(); }
  std::size_t size() const noexcept;
  const Codebook& coarse() const noexcept { return coarse_; }
  const ProductQuantizer& pq() const noexcept { return pq_; }
  const std::optional<DerivedPQ>& derived() const noexcept { return derived_; }
  const CodeList& list(std::size_t i) const { return lists_.at(i); }
  const std::vector<CodeList>& lists() const noexcept { return lists_; }

  /// The ma nearest coarse centroids (ties: lower index), nearest first.
  std::vector<std::uint32_t> nearest_lists(std::span<const float> y, std::size_t ma) const;

  bool operator==(const IvfIndex& o) const {
    return coarse_ == o.coarse_ && pq_ == o.pq_ && lists_ == o.lists_ && derived_ == o.derived_;
  }

  // "IVF1", u32 K, u32 d, K x d f32 coarse centroids, PQZ1 blob (with the
  // derived section when present), K PQL1 blobs with ids.
  void save(std::ostream& out) const;
  static IvfIndex load(std::istream& in, std::uint64_t base_offset = 0);
  void save(const std::filesystem::path& path) const;
  static IvfIndex load(const std::filesystem::path& path);

  friend NeighborSet query_ivf(const IvfIndex&, std::span<const float>, std::size_t, std::size_t,
                               const IvfQueryOptions&, IvfQueryStats*);

 private:
  void build_transposed();

  Codebook coarse_;
  ProductQuantizer pq_;
  std::vector<CodeList> lists_;
  std::optional<DerivedPQ> derived_;
  std::vector<TransposedCodeList> transposed_;  // b = 4 only
};

/// Residual of x to coarse centroid c.
std::vector<float> residual(std::span<const float> x, std::span<const float> c);

IvfIndex build_ivf(const DenseMatrix& base, const IvfConfig& cfg);

/// Scans the ma nearest lists with the chosen kernel and merges the results.
/// Quick ADC distances are bin numbers (one parameter set for all lists);
/// the other kernels return float distances.
NeighborSet query_ivf(const IvfIndex& index, std::span<const float> y, std::size_t ma,
                      std::size_t r, const IvfQueryOptions& opt = {},
                      IvfQueryStats* stats = nullptr);

}  // namespace pqscan
