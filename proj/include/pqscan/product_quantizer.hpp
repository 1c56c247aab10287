#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pqscan/code_list.hpp"
#include "pqscan/dense_matrix.hpp"
#include "pqscan/kmeans.hpp"

namespace pqscan {

/// m sub-quantizers of 2^b centroids over consecutive d/m-dimensional slices,
/// optionally preceded by an orthonormal rotation (OPQ).
class ProductQuantizer {
 public:
  ProductQuantizer() = default;
  /// `rotation` is d x d row-major; the quantized vector is rotation * x.
  ProductQuantizer(std::size_t d, std::size_t b, std::vector<Codebook> codebooks,
                   std::optional<std::vector<float>> rotation = std::nullopt);

  std::size_t m() const noexcept { return codebooks_.size(); }
  std::size_t bits() const noexcept { return b_; }
  std::size_t ksub() const noexcept { return std::size_t{1} << b_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t dsub() const noexcept { return m() == 0 ? 0 : d_ / m(); }
  std::size_t code_size() const { return packed_code_size(m(), b_); }

  const Codebook& codebook(std::size_t j) const { return codebooks_.at(j); }
  const std::vector<Codebook>& codebooks() const noexcept { return codebooks_; }
  bool has_rotation() const noexcept { return rotation_.has_value(); }
  const std::optional<std::vector<float>>& rotation() const noexcept { return rotation_; }

  /// rotation * x, or x itself when no rotation is present.
  std::vector<float> rotate(std::span<const float> x) const;
  /// rotation^T * x, or x itself.
  std::vector<float> unrotate(std::span<const float> x) const;

  Code encode(std::span<const float> x) const;
  /// Reconstruction in the input space (rotation transpose applied).
  std::vector<float> decode(std::span<const std::uint16_t> code) const;
  /// Reconstruction in the rotated space.
  std::vector<float> decode_unrotated(std::span<const std::uint16_t> code) const;

  CodeList encode_all(const DenseMatrix& x) const;
  /// Mean of ||x - decode(encode(x))||^2 over the rows.
  double quantization_error(const DenseMatrix& x) const;

  /// Copy with codebook j reordered (new centroid i is old centroid order[i]).
  ProductQuantizer with_permuted_codebook(std::size_t j, std::span<const std::uint32_t> order) const;

  bool operator==(const ProductQuantizer&) const = default;

  // Persistence: "PQZ1", u32 m, u32 b, u32 d, u8 flags (bit 0: rotation),
  // rotation (d*d f32) when present, then m codebooks of 2^b x d/m f32.
  void save(std::ostream& out) const;
  static ProductQuantizer load(std::istream& in, std::uint64_t base_offset = 0);
  void save(const std::filesystem::path& path) const;
  static ProductQuantizer load(const std::filesystem::path& path);

 private:
  std::size_t d_ = 0;
  std::size_t b_ = 8;
  std::vector<Codebook> codebooks_;
  std::optional<std::vector<float>> rotation_;
};

/// One k-means per sub-space over the matching slice of the training rows.
ProductQuantizer train_pq(const DenseMatrix& training, std::size_t m, std::size_t b,
                          const TrainConfig& cfg);

/// Per-iteration training error of OPQ (mean squared reconstruction error with
/// the codes of that iteration, after the rotation update).
struct OpqTrace {
  double initial_error = 0.0;
  std::vector<double> errors;
};

/// Alternates one k-means step per sub-space (fixed rotation) with the
/// closed-form Procrustes rotation update (fixed codebooks), starting from the
/// plain PQ solution with an identity rotation.
ProductQuantizer train_opq(const DenseMatrix& training, std::size_t m, std::size_t b,
                           const TrainConfig& cfg, OpqTrace* trace = nullptr);

}  // namespace pqscan
