#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "pqscan/dense_matrix.hpp"

namespace pqscan {

/// k centroids of equal dimensionality; centroid i is row i. The ordering is
/// arbitrary but fixed once trained, and codes refer to it.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(DenseMatrix centroids) : centroids_(std::move(centroids)) {
    if (centroids_.rows() == 0) throw InvalidArgument("Codebook: needs at least one centroid");
  }

  std::size_t size() const noexcept { return centroids_.rows(); }
  std::size_t dim() const noexcept { return centroids_.dim(); }
  std::span<const float> centroid(std::size_t i) const { return centroids_.row(i); }
  const DenseMatrix& matrix() const noexcept { return centroids_; }

  /// Index of the closest centroid (lowest index on ties) and its squared distance.
  std::pair<std::uint32_t, float> nearest(std::span<const float> x) const;

  /// Same codebook with rows reordered: new row i is old row order[i].
  Codebook permuted(std::span<const std::uint32_t> order) const;

  bool operator==(const Codebook&) const = default;

 private:
  DenseMatrix centroids_;
};

struct TrainConfig {
  int kmeans_iters = 25;
  int opq_iters = 50;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Codebook codebook;
  std::vector<std::uint32_t> assignments;  // nearest centroid of each point
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded from
/// the point farthest from its current centroid.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, const TrainConfig& cfg);

struct SameSizeResult {
  Codebook codebook;                              // group means
  std::vector<std::vector<std::uint32_t>> groups;  // point indices, ascending
};

/// Partition into k groups of exactly points.rows()/k members each. Runs plain
/// k-means, then repeatedly moves the member of an oversized group with the
/// smallest distance increase into an undersized group.
SameSizeResult same_size_kmeans(const DenseMatrix& points, std::size_t k,
                                const TrainConfig& cfg = {});

}  // namespace pqscan
