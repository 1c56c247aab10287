#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pqscan/dense_matrix.hpp"

namespace pqscan {

// Record layouts (all little-endian, one shared d per file):
//   fvecs: [int32 d][d x float32]
//   bvecs: [int32 d][d x uint8]
//   ivecs: [int32 d][d x int32]
// An empty file decodes to a 0 x 0 matrix.

DenseMatrix read_fvecs(const std::filesystem::path& path);
/// bvecs components are widened to float without scaling.
DenseMatrix read_bvecs(const std::filesystem::path& path);
IntMatrix read_ivecs(const std::filesystem::path& path);

void write_fvecs(const std::filesystem::path& path, const DenseMatrix& m);
/// Components must be integral values in [0, 255].
void write_bvecs(const std::filesystem::path& path, const DenseMatrix& m);
void write_ivecs(const std::filesystem::path& path, const IntMatrix& m);

/// Gaussian blobs: `clusters` centers uniform in [0,255]^d, per-axis standard
/// deviation 20. Each row picks a center uniformly. Deterministic for a seed.
DenseMatrix generate_synthetic(std::size_t n, std::size_t d, std::size_t clusters,
                               std::uint64_t seed);

/// Per-query true neighbors in ascending (squared distance, id) order.
struct GroundTruth {
  std::size_t k = 0;
  std::vector<std::int64_t> ids;    // queries x k
  std::vector<float> distances;     // queries x k, empty when loaded from ivecs

  std::size_t queries() const noexcept { return k == 0 ? 0 : ids.size() / k; }
  std::span<const std::int64_t> row(std::size_t q) const { return {ids.data() + q * k, k}; }

  static GroundTruth from_ivecs(const IntMatrix& m);
  IntMatrix to_ivecs() const;
};

/// Brute-force k nearest neighbors under squared Euclidean distance; ties are
/// broken by smaller id. `threads` > 1 splits the queries; the result does not
/// depend on it.
GroundTruth exact_knn(const DenseMatrix& base, const DenseMatrix& queries, std::size_t k,
                      unsigned threads = 1);

/// Fraction of queries whose true nearest neighbor appears among the first R
/// returned ids.
double recall_at_r(std::span<const std::vector<std::int64_t>> results, const GroundTruth& truth,
                   std::size_t R);

}  // namespace pqscan
