#include "pqscan/derived_quantizer.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <string>

#include "pqscan/binary_io.hpp"
#include "pqscan/detail/pqz_codec.hpp"

namespace pqscan {

DerivedCodebooks build_derived_quantizers(const DenseMatrix& training_sub, std::size_t kbar,
                                          std::size_t k, const TrainConfig& cfg) {
  if (!std::has_single_bit(k) || !std::has_single_bit(kbar)) {
    throw InvalidArgument("build_derived_quantizers: k and kbar must be powers of two");
  }
  if (kbar > k || k % kbar != 0) {
    throw InvalidArgument("build_derived_quantizers: k must be divisible by kbar");
  }
  const auto temp = kmeans(training_sub, k, cfg);
  const auto ss = same_size_kmeans(temp.codebook.matrix(), kbar, cfg);

  std::vector<std::uint32_t> order(k);
  for (std::size_t l = 0; l < kbar; ++l) {
    const auto& g = ss.groups[l];
    for (std::size_t t = 0; t < g.size(); ++t) order[t * kbar + l] = g[t];
  }
  return {temp.codebook.permuted(order), ss.codebook};
}

DerivedPQ::DerivedPQ(ProductQuantizer full, std::size_t bbar, std::vector<Codebook> derived)
    : full_(std::move(full)), bbar_(bbar), derived_(std::move(derived)) {
  if (bbar_ == 0 || bbar_ > full_.bits()) throw InvalidArgument("DerivedPQ: need 0 < bbar <= b");
  if (derived_.size() != full_.m()) throw InvalidArgument("DerivedPQ: one derived codebook per sub-space");
  for (const auto& cb : derived_) {
    if (cb.size() != kbar() || cb.dim() != full_.dsub()) {
      throw InvalidArgument("DerivedPQ: derived codebook shape mismatch");
    }
  }
}

DerivedPQ train_derived_pq(const DenseMatrix& training, std::size_t m, std::size_t b,
                           std::size_t bbar, const TrainConfig& cfg) {
  if (m == 0 || training.dim() % m != 0) {
    throw InvalidArgument("train_derived_pq: d must be divisible by m");
  }
  check_bits(b);
  if (bbar == 0 || bbar > b) throw InvalidArgument("train_derived_pq: need 0 < bbar <= b");
  const std::size_t k = std::size_t{1} << b;
  if (training.rows() < k) {
    throw InvalidArgument("train_derived_pq: " + std::to_string(training.rows()) +
                          " training points for " + std::to_string(k) + " centroids");
  }
  const std::size_t ds = training.dim() / m;
  std::vector<Codebook> full;
  std::vector<Codebook> derived;
  for (std::size_t j = 0; j < m; ++j) {
    TrainConfig sub = cfg;
    sub.seed = cfg.seed + j;
    auto cbs = build_derived_quantizers(training.columns(j * ds, ds), std::size_t{1} << bbar, k, sub);
    full.push_back(std::move(cbs.full));
    derived.push_back(std::move(cbs.derived));
  }
  return DerivedPQ(ProductQuantizer(training.dim(), b, std::move(full)), bbar, std::move(derived));
}

void DerivedPQ::save(std::ostream& out) const {
  io::BinaryWriter w(out);
  detail::write_pqz(w, full_, detail::kPqzDerived);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bbar_));
  for (const auto& cb : derived_) w.put_array(std::span<const float>(cb.matrix().data()));
}

DerivedPQ DerivedPQ::load(std::istream& in, std::uint64_t base_offset) {
  io::BinaryReader r(in, base_offset);
  std::uint8_t flags = 0;
  auto pq = detail::read_pqz(r, flags);
  if (!(flags & detail::kPqzDerived)) r.fail("PQZ1: no derived quantizer section");
  auto [bbar, derived] = detail::read_derived_trailer(r, pq.m(), pq.dsub());
  if (bbar > pq.bits()) r.fail("PQZ1: derived width exceeds b");
  return DerivedPQ(std::move(pq), bbar, std::move(derived));
}

void DerivedPQ::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  save(out);
}

DerivedPQ DerivedPQ::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

LookupTables compute_compact_tables(const DerivedPQ& dpq, std::span<const float> y) {
  if (y.size() != dpq.full().dim()) throw InvalidArgument("compute_compact_tables: dimensionality mismatch");
  const auto yr = dpq.full().rotate(y);
  return compute_tables(std::span<const Codebook>(dpq.derived()), yr);
}

namespace {

float approximate_float(const LookupTables& compact, const CodeList& db, std::size_t i) {
  const std::size_t mask = compact.ksub() - 1;
  float d = 0.0f;
  for (std::size_t j = 0; j < db.m(); ++j) d += compact.at(j, db.component(i, j) & mask);
  return d;
}

}  // namespace

QuantizedCompactTables quantize_compact_tables(const LookupTables& compact, const CodeList& db,
                                               std::size_t r2) {
  if (db.empty()) throw InvalidArgument("quantize_compact_tables: empty database");
  if (db.m() != compact.m()) throw InvalidArgument("quantize_compact_tables: m mismatch");
  if (!std::has_single_bit(compact.ksub()) || compact.ksub() > (std::size_t{1} << db.bits())) {
    throw InvalidArgument("quantize_compact_tables: compact tables wider than the codes");
  }
  QuantizedCompactTables qt;
  qt.m = compact.m();
  qt.kbar = compact.ksub();
  qt.params.bins = 255;
  qt.params.qmin = compact.min_value();
  const std::size_t count = std::clamp<std::size_t>(r2, 1, db.size());
  float qmax = 0.0f;
  for (std::size_t i = 0; i < count; ++i) qmax = std::max(qmax, approximate_float(compact, db, i));
  qt.params.qmax = qmax;
  qt.values.resize(qt.m * qt.kbar);
  for (std::size_t j = 0; j < qt.m; ++j) {
    for (std::size_t l = 0; l < qt.kbar; ++l) qt.values[j * qt.kbar + l] = qt.params.quantize(compact.at(j, l));
  }
  return qt;
}

std::uint8_t approximate_distance(const QuantizedCompactTables& qt, const CodeList& db, std::size_t i) {
  const std::size_t mask = qt.kbar - 1;
  unsigned acc = 0;
  for (std::size_t j = 0; j < qt.m; ++j) acc = std::min(255u, acc + qt.at(j, db.component(i, j) & mask));
  return static_cast<std::uint8_t>(acc);
}

// ---------------------------------------------------------------------------

CappedBuckets::CappedBuckets(std::size_t r2) : r2_(r2) {
  if (r2 == 0) throw InvalidArgument("CappedBuckets: r2 must be >= 1");
}

bool CappedBuckets::put(std::uint32_t pos, std::uint8_t q) {
  if (q > upper_) return false;
  if (q == kBuckets - 1 && count_ >= r2_) return false;
  buckets_[q].push_back(pos);
  ++count_;
  // Drop the top bucket while the ones below it still hold r2 candidates.
  while (upper_ > 0 && count_ - buckets_[upper_].size() >= r2_) {
    count_ -= buckets_[upper_].size();
    buckets_[upper_].clear();
    --upper_;
  }
  return true;
}

CappedBuckets scan_candidates(const CodeList& db, const QuantizedCompactTables& qt, std::size_t r2) {
  if (db.m() != qt.m) throw InvalidArgument("scan_candidates: m mismatch");
  CappedBuckets out(r2);
  const std::size_t n = db.size();
  const std::size_t m = db.m();
  const std::size_t mask = qt.kbar - 1;
  const std::uint8_t* t = qt.values.data();
  const std::size_t kbar = qt.kbar;
  auto run = [&](auto&& component) {
    for (std::size_t i = 0; i < n; ++i) {
      unsigned acc = 0;
      for (std::size_t j = 0; j < m; ++j) acc += t[j * kbar + (component(i, j) & mask)];
      const auto q = static_cast<std::uint8_t>(std::min(255u, acc));
      if (q <= out.upper_bound()) out.put(static_cast<std::uint32_t>(i), q);
    }
  };
  if (db.bits() > 8) {
    const std::uint8_t* codes = db.bytes().data();
    const std::size_t cs = db.code_size();
    run([&](std::size_t i, std::size_t j) {
      const std::uint8_t* c = codes + i * cs + 2 * j;
      return static_cast<std::size_t>(c[0] | (c[1] << 8));
    });
  } else {
    run([&](std::size_t i, std::size_t j) { return static_cast<std::size_t>(db.component(i, j)); });
  }
  return out;
}

NeighborSet rerank(const CodeList& db, const CappedBuckets& cand, const ProductQuantizer& full,
                   std::span<const float> y, std::size_t r, std::size_t r2, RerankStats* stats) {
  if (r == 0) throw InvalidArgument("rerank: r must be >= 1");
  if (db.m() != full.m() || db.bits() != full.bits()) throw InvalidArgument("rerank: code shape mismatch");
  if (y.size() != full.dim()) throw InvalidArgument("rerank: dimensionality mismatch");
  const auto yr = full.rotate(y);
  const std::size_t m = full.m();
  const std::size_t k = full.ksub();
  const std::size_t ds = full.dsub();
  std::vector<float> lazy(m * k, -1.0f);
  RerankStats local;
  NeighborSet out(std::min(r, db.size()));
  std::size_t processed = 0;
  for (std::size_t q = 0; q < CappedBuckets::kBuckets && processed < r2; ++q) {
    for (auto pos : cand.bucket(q)) {
      float d = 0.0f;
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = db.component(pos, j);
        float& e = lazy[j * k + i];
        if (e < 0.0f) {
          e = squared_l2(std::span<const float>(yr).subspan(j * ds, ds), full.codebook(j).centroid(i));
          ++local.table_entries;
        }
        d += e;
      }
      out.add(db.id(pos), d);
      ++processed;
    }
  }
  local.candidates = processed;
  if (stats) *stats = local;
  return out;
}

NeighborSet search_two_pass(const DerivedPQ& dpq, const CodeList& db, std::span<const float> y,
                            std::size_t r, std::size_t r2, RerankStats* stats) {
  const auto compact = compute_compact_tables(dpq, y);
  const auto qt = quantize_compact_tables(compact, db, r2);
  const auto cand = scan_candidates(db, qt, r2);
  return rerank(db, cand, dpq.full(), y, r, r2, stats);
}

}  // namespace pqscan
