#include "pqscan/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "pqscan/binary_io.hpp"

namespace pqscan {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  return out;
}

// Reads the shared vecs framing; `read_payload` decodes d components of one
// record into the output buffer.
template <typename Component, typename Out>
std::pair<std::size_t, std::size_t> read_records(const std::filesystem::path& path,
                                                 std::vector<Out>& data) {
  auto in = open_input(path);
  io::BinaryReader reader(in);
  std::size_t n = 0;
  std::int32_t dim = 0;
  std::vector<Component> buf;
  while (!reader.at_end()) {
    const std::uint64_t header_at = reader.offset();
    const auto d = reader.get<std::int32_t>();
    if (d <= 0) throw FormatError("non-positive dimension in record header", header_at);
    if (n == 0) {
      dim = d;
      buf.resize(static_cast<std::size_t>(d));
    } else if (d != dim) {
      throw FormatError("dimension mismatch: record has d=" + std::to_string(d) +
                            ", file started with d=" + std::to_string(dim),
                        header_at);
    }
    reader.get_array(std::span<Component>(buf));
    data.insert(data.end(), buf.begin(), buf.end());
    ++n;
  }
  return {n, static_cast<std::size_t>(dim)};
}

template <typename Component, typename Row>
void write_records(const std::filesystem::path& path, std::size_t n, std::size_t d,
                   Row&& row_at) {
  auto out = open_output(path);
  io::BinaryWriter writer(out);
  std::vector<Component> buf(d);
  for (std::size_t i = 0; i < n; ++i) {
    writer.put(static_cast<std::int32_t>(d));
    row_at(i, buf);
    writer.put_array(std::span<const Component>(buf));
  }
}

}  // namespace

DenseMatrix read_fvecs(const std::filesystem::path& path) {
  std::vector<float> data;
  auto [n, d] = read_records<float>(path, data);
  return DenseMatrix(n, d, std::move(data));
}

DenseMatrix read_bvecs(const std::filesystem::path& path) {
  std::vector<float> data;
  auto [n, d] = read_records<std::uint8_t>(path, data);
  return DenseMatrix(n, d, std::move(data));
}

IntMatrix read_ivecs(const std::filesystem::path& path) {
  std::vector<std::int32_t> data;
  auto [n, d] = read_records<std::int32_t>(path, data);
  return IntMatrix(n, d, std::move(data));
}

void write_fvecs(const std::filesystem::path& path, const DenseMatrix& m) {
  write_records<float>(path, m.rows(), m.dim(), [&](std::size_t i, std::vector<float>& buf) {
    auto r = m.row(i);
    std::copy(r.begin(), r.end(), buf.begin());
  });
}

void write_bvecs(const std::filesystem::path& path, const DenseMatrix& m) {
  write_records<std::uint8_t>(path, m.rows(), m.dim(),
                              [&](std::size_t i, std::vector<std::uint8_t>& buf) {
                                auto r = m.row(i);
                                for (std::size_t j = 0; j < r.size(); ++j) {
                                  const float v = r[j];
                                  if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v)) {
                                    throw InvalidArgument(
                                        "write_bvecs: component is not a byte value");
                                  }
                                  buf[j] = static_cast<std::uint8_t>(v);
                                }
                              });
}

void write_ivecs(const std::filesystem::path& path, const IntMatrix& m) {
  write_records<std::int32_t>(path, m.rows(), m.cols(),
                              [&](std::size_t i, std::vector<std::int32_t>& buf) {
                                auto r = m.row(i);
                                std::copy(r.begin(), r.end(), buf.begin());
                              });
}

DenseMatrix generate_synthetic(std::size_t n, std::size_t d, std::size_t clusters,
                               std::uint64_t seed) {
  if (d == 0 || clusters == 0) {
    throw InvalidArgument("generate_synthetic: d and clusters must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> center_dist(0.0f, 255.0f);
  std::normal_distribution<float> noise(0.0f, 20.0f);

  std::vector<float> centers(clusters * d);
  for (auto& c : centers) c = center_dist(rng);

  std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
  DenseMatrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const float* center = centers.data() + pick(rng) * d;
    auto row = out.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = center[j] + noise(rng);
  }
  return out;
}

GroundTruth GroundTruth::from_ivecs(const IntMatrix& m) {
  GroundTruth gt;
  gt.k = m.cols();
  gt.ids.assign(m.data().begin(), m.data().end());
  return gt;
}

IntMatrix GroundTruth::to_ivecs() const {
  std::vector<std::int32_t> data(ids.begin(), ids.end());
  return IntMatrix(queries(), k, std::move(data));
}

GroundTruth exact_knn(const DenseMatrix& base, const DenseMatrix& queries, std::size_t k,
                      unsigned threads) {
  if (k > base.rows()) throw InvalidArgument("exact_knn: k exceeds base size");
  if (!queries.empty() && base.dim() != queries.dim()) {
    throw InvalidArgument("exact_knn: base and query dimensionality differ");
  }
  GroundTruth gt;
  gt.k = k;
  gt.ids.resize(queries.rows() * k);
  gt.distances.resize(queries.rows() * k);
  if (k == 0) return gt;

  auto worker = [&](std::size_t q_begin, std::size_t q_end) {
    std::vector<std::pair<float, std::int64_t>> scored(base.rows());
    for (std::size_t q = q_begin; q < q_end; ++q) {
      auto y = queries.row(q);
      for (std::size_t i = 0; i < base.rows(); ++i) {
        scored[i] = {squared_l2(y, base.row(i)), static_cast<std::int64_t>(i)};
      }
      std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                        scored.end());
      for (std::size_t t = 0; t < k; ++t) {
        gt.distances[q * k + t] = scored[t].first;
        gt.ids[q * k + t] = scored[t].second;
      }
    }
  };

  threads = std::max(1u, threads);
  if (threads == 1 || queries.rows() < 2) {
    worker(0, queries.rows());
    return gt;
  }
  std::vector<std::thread> pool;
  const std::size_t per = (queries.rows() + threads - 1) / threads;
  for (std::size_t begin = 0; begin < queries.rows(); begin += per) {
    pool.emplace_back(worker, begin, std::min(queries.rows(), begin + per));
  }
  for (auto& t : pool) t.join();
  return gt;
}

double recall_at_r(std::span<const std::vector<std::int64_t>> results, const GroundTruth& truth,
                   std::size_t R) {
  if (results.size() != truth.queries()) {
    throw InvalidArgument("recall_at_r: result count differs from ground-truth query count");
  }
  if (truth.k == 0) throw InvalidArgument("recall_at_r: ground truth has no neighbors");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& res = results[q];
    if (res.size() < R) throw InvalidArgument("recall_at_r: result list shorter than R");
    const std::int64_t nn = truth.row(q)[0];
    if (std::find(res.begin(), res.begin() + static_cast<std::ptrdiff_t>(R), nn) !=
        res.begin() + static_cast<std::ptrdiff_t>(R)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

}  // namespace pqscan
