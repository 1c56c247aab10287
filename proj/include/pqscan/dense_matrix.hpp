#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pqscan/error.hpp"

namespace pqscan {

/// n rows of d float components, row-major.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t n, std::size_t d) : n_(n), d_(d), data_(n * d, 0.0f) {}
  DenseMatrix(std::size_t n, std::size_t d, std::vector<float> data)
      : n_(n), d_(d), data_(std::move(data)) {
    if (data_.size() != n_ * d_) {
      throw InvalidArgument("DenseMatrix: data length does not equal n*d");
    }
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }
  bool empty() const noexcept { return n_ == 0; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * d_, d_};
  }
  std::span<float> row(std::size_t i) { return {data_.data() + i * d_, d_}; }

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  /// Copy of rows [begin, end).
  DenseMatrix slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > n_) throw InvalidArgument("DenseMatrix::slice: bad range");
    return DenseMatrix(end - begin, d_,
                       std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * d_),
                                          data_.begin() + static_cast<std::ptrdiff_t>(end * d_)));
  }

  /// Columns [begin, begin + width) of every row.
  DenseMatrix columns(std::size_t begin, std::size_t width) const {
    if (begin + width > d_) throw InvalidArgument("DenseMatrix::columns: bad range");
    DenseMatrix out(n_, width);
    for (std::size_t i = 0; i < n_; ++i) {
      auto src = row(i).subspan(begin, width);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<float> data_;
};

/// n rows of k signed 32-bit integers (ivecs payloads, ground truth).
class IntMatrix {
 public:
  IntMatrix() = default;
  IntMatrix(std::size_t n, std::size_t k) : n_(n), k_(k), data_(n * k, 0) {}
  IntMatrix(std::size_t n, std::size_t k, std::vector<std::int32_t> data)
      : n_(n), k_(k), data_(std::move(data)) {
    if (data_.size() != n_ * k_) {
      throw InvalidArgument("IntMatrix: data length does not equal n*k");
    }
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return k_; }

  std::span<const std::int32_t> row(std::size_t i) const {
    return {data_.data() + i * k_, k_};
  }
  std::span<std::int32_t> row(std::size_t i) { return {data_.data() + i * k_, k_}; }

  const std::vector<std::int32_t>& data() const noexcept { return data_; }

  bool operator==(const IntMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<std::int32_t> data_;
};

/// Squared Euclidean distance. Eight fixed partial sums keep the result
/// independent of how the compiler vectorizes the loop.
inline float squared_l2(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const float diff = a[i + l] - b[i + l];
      lanes[l] += diff * diff;
    }
  }
  for (std::size_t l = 0; i < n; ++i, ++l) {
    const float diff = a[i] - b[i];
    lanes[l] += diff * diff;
  }
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

}  // namespace pqscan
