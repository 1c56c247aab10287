#pragma once

// Shared fixtures and independent reference computations for the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "pqscan/adc_scan.hpp"
#include "pqscan/code_list.hpp"
#include "pqscan/dense_matrix.hpp"
#include "pqscan/product_quantizer.hpp"

namespace testing_support {

using namespace pqscan;

inline DenseMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, float lo = 0.0f,
                                 float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  DenseMatrix x(n, d);
  for (auto& v : x.data()) v = u(rng);
  return x;
}

/// Untrained quantizer with uniformly random centroids; enough for anything
/// that does not depend on training quality.
inline ProductQuantizer random_pq(std::size_t d, std::size_t m, std::size_t b, std::uint64_t seed,
                                  float hi = 100.0f) {
  std::vector<Codebook> cbs;
  for (std::size_t j = 0; j < m; ++j) {
    cbs.emplace_back(random_matrix(std::size_t{1} << b, d / m, seed * 1000 + j, 0.0f, hi));
  }
  return ProductQuantizer(d, b, std::move(cbs));
}

inline CodeList random_codes(std::size_t n, std::size_t m, std::size_t b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> u(0, (1u << b) - 1);
  CodeList list(m, b);
  Code c(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : c) v = static_cast<std::uint16_t>(u(rng));
    list.append(c);
  }
  return list;
}

/// Lookup tables computed from scratch in double, one entry at a time.
inline std::vector<std::vector<double>> reference_tables(const ProductQuantizer& pq,
                                                         std::span<const float> y) {
  const std::size_t d = pq.dim();
  std::vector<double> yr(d);
  if (pq.has_rotation()) {
    const auto& R = *pq.rotation();
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += static_cast<double>(R[i * d + t]) * y[t];
      yr[i] = s;
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) yr[i] = y[i];
  }
  std::vector<std::vector<double>> t(pq.m(), std::vector<double>(pq.ksub()));
  const std::size_t ds = pq.dsub();
  for (std::size_t j = 0; j < pq.m(); ++j) {
    for (std::size_t i = 0; i < pq.ksub(); ++i) {
      const auto c = pq.codebook(j).centroid(i);
      double s = 0.0;
      for (std::size_t u = 0; u < ds; ++u) {
        const double diff = yr[j * ds + u] - c[u];
        s += diff * diff;
      }
      t[j][i] = s;
    }
  }
  return t;
}

/// Uniform bin quantizer written independently of QuantParams: exact
/// rational comparison instead of a floating-point floor.
inline int reference_quantize(double v, double qmin, double qmax, int bins) {
  if (!(qmax > qmin)) return v <= qmin ? 0 : bins;
  if (v >= qmax) return bins;
  if (v <= qmin) return 0;
  // largest q with q * (qmax - qmin) <= (v - qmin) * bins
  const long double num = (static_cast<long double>(v) - qmin) * bins;
  const long double den = static_cast<long double>(qmax) - qmin;
  int q = static_cast<int>(num / den);
  while (q > 0 && q * den > num) --q;
  while ((q + 1) * den <= num) ++q;
  return std::min(q, bins - 1);
}

/// (distance, id) pairs of a full scan, computed with a plain loop and a full
/// sort, truncated to r.
inline std::vector<Neighbor> sorted_oracle(const CodeList& list, const LookupTables& t, std::size_t r) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < list.size(); ++i) {
    float d = 0.0f;
    for (std::size_t j = 0; j < list.m(); ++j) d += t.at(j, list.component(i, j));
    all.push_back({list.id(i), d});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  if (all.size() > r) all.resize(r);
  return all;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pqscan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
