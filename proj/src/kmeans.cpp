#include "pqscan/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace pqscan {

std::pair<std::uint32_t, float> Codebook::nearest(std::span<const float> x) const {
  std::uint32_t best = 0;
  float best_dist = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < size(); ++i) {
    const float dist = squared_l2(x, centroid(i));
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<std::uint32_t>(i);
    }
  }
  return {best, best_dist};
}

Codebook Codebook::permuted(std::span<const std::uint32_t> order) const {
  if (order.size() != size()) throw InvalidArgument("Codebook::permuted: bad order length");
  DenseMatrix out(size(), dim());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto src = centroid(order[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return Codebook(std::move(out));
}

namespace {

DenseMatrix plus_plus_seeding(const DenseMatrix& points, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = points.rows();
  DenseMatrix centers(k, points.dim());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    auto src = points.row(chosen);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
    if (c + 1 == k) break;

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], static_cast<double>(squared_l2(points.row(i), centers.row(c))));
      total += d2[i];
    }
    if (total <= 0.0) {
      // Every point coincides with a chosen center; any pick is as good.
      chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      continue;
    }
    double target = std::uniform_real_distribution<double>(0.0, total)(rng);
    chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
  }
  return centers;
}

// Returns the number of points whose assignment changed.
std::size_t assign(const DenseMatrix& points, const Codebook& codebook,
                   std::vector<std::uint32_t>& assignments, std::vector<float>& dists) {
  std::size_t changed = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto [best, dist] = codebook.nearest(points.row(i));
    if (assignments[i] != best) ++changed;
    assignments[i] = best;
    dists[i] = dist;
  }
  return changed;
}

DenseMatrix update_means(const DenseMatrix& points, std::size_t k,
                         std::span<const std::uint32_t> assignments, std::vector<float>& dists,
                         const DenseMatrix& previous) {
  const std::size_t d = points.dim();
  std::vector<double> sums(k * d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const std::size_t c = assignments[i];
    ++counts[c];
    auto x = points.row(i);
    for (std::size_t t = 0; t < d; ++t) sums[c * d + t] += x[t];
  }
  DenseMatrix centers(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    auto dst = centers.row(c);
    if (counts[c] == 0) {
      // Re-seed from the point farthest from its centroid (lowest index on ties).
      std::size_t far = 0;
      for (std::size_t i = 1; i < dists.size(); ++i) {
        if (dists[i] > dists[far]) far = i;
      }
      if (dists.empty() || dists[far] <= 0.0f) {
        auto src = previous.row(c);
        std::copy(src.begin(), src.end(), dst.begin());
      } else {
        auto src = points.row(far);
        std::copy(src.begin(), src.end(), dst.begin());
        dists[far] = 0.0f;
      }
      continue;
    }
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t t = 0; t < d; ++t) dst[t] = static_cast<float>(sums[c * d + t] * inv);
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, const TrainConfig& cfg) {
  if (k == 0) throw InvalidArgument("kmeans: k must be positive");
  if (points.rows() < k) {
    throw InvalidArgument("kmeans: " + std::to_string(points.rows()) +
                          " points cannot form " + std::to_string(k) + " clusters");
  }
  if (cfg.kmeans_iters < 1) throw InvalidArgument("kmeans: kmeans_iters must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  Codebook codebook(plus_plus_seeding(points, k, rng));
  std::vector<std::uint32_t> assignments(points.rows(), std::numeric_limits<std::uint32_t>::max());
  std::vector<float> dists(points.rows(), 0.0f);

  for (int it = 0; it < cfg.kmeans_iters; ++it) {
    const std::size_t changed = assign(points, codebook, assignments, dists);
    if (it > 0 && changed == 0) break;
    codebook = Codebook(update_means(points, k, assignments, dists, codebook.matrix()));
  }
  assign(points, codebook, assignments, dists);
  return {std::move(codebook), std::move(assignments)};
}

SameSizeResult same_size_kmeans(const DenseMatrix& points, std::size_t k,
                                const TrainConfig& cfg) {
  const std::size_t n = points.rows();
  if (k == 0 || n % k != 0) {
    throw InvalidArgument("same_size_kmeans: " + std::to_string(n) +
                          " points are not divisible into " + std::to_string(k) + " groups");
  }
  const std::size_t target = n / k;
  KMeansResult base = kmeans(points, k, cfg);

  std::vector<float> dist(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      dist[i * k + c] = squared_l2(points.row(i), base.codebook.centroid(c));
    }
  }
  std::vector<std::uint32_t> owner = base.assignments;
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : owner) ++sizes[c];

  for (;;) {
    float best_delta = std::numeric_limits<float>::infinity();
    std::size_t best_point = n;
    std::size_t best_target = k;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t from = owner[i];
      if (sizes[from] <= target) continue;
      for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] >= target) continue;
        const float delta = dist[i * k + c] - dist[i * k + from];
        if (delta < best_delta) {
          best_delta = delta;
          best_point = i;
          best_target = c;
        }
      }
    }
    if (best_point == n) break;
    --sizes[owner[best_point]];
    ++sizes[best_target];
    owner[best_point] = static_cast<std::uint32_t>(best_target);
  }

  SameSizeResult out;
  out.groups.resize(k);
  for (std::size_t i = 0; i < n; ++i) out.groups[owner[i]].push_back(static_cast<std::uint32_t>(i));
  DenseMatrix means(k, points.dim());
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> acc(points.dim(), 0.0);
    for (auto i : out.groups[c]) {
      auto x = points.row(i);
      for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += x[t];
    }
    auto dst = means.row(c);
    for (std::size_t t = 0; t < acc.size(); ++t) {
      dst[t] = static_cast<float>(acc[t] / static_cast<double>(target));
    }
  }
  out.codebook = Codebook(std::move(means));
  return out;
}

}  // namespace pqscan
