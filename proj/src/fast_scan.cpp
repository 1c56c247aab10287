#include "pqscan/fast_scan.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "pqscan/binary_io.hpp"

#if defined(__SSSE3__)
#include <immintrin.h>
#define PQSCAN_HAVE_SSSE3 1
#endif

namespace pqscan {

namespace {

void require_8x8(std::size_t m, std::size_t b, const char* who) {
  if (m != 8 || b != 8) {
    throw InvalidArgument(std::string(who) + ": requires m=8, b=8 (got m=" + std::to_string(m) +
                          ", b=" + std::to_string(b) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// centroid relabeling

std::vector<std::uint32_t> clustered_centroid_order(const Codebook& codebook, const TrainConfig& cfg) {
  const std::size_t k = codebook.size();
  if (k != 256) throw InvalidArgument("clustered_centroid_order: codebook must have 256 centroids");
  const std::size_t ds = codebook.dim();

  // Sorting first makes the clustering blind to the current labels, so a
  // second application finds the same groups and returns the identity.
  std::vector<std::uint32_t> sorted(k);
  std::iota(sorted.begin(), sorted.end(), 0u);
  std::stable_sort(sorted.begin(), sorted.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ca = codebook.centroid(a);
    const auto cb = codebook.centroid(b);
    return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
  });
  DenseMatrix pts(k, ds);
  for (std::size_t i = 0; i < k; ++i) {
    std::copy_n(codebook.centroid(sorted[i]).data(), ds, pts.row(i).data());
  }
  const auto ss = same_size_kmeans(pts, 16, cfg);

  std::vector<std::vector<std::uint32_t>> blocks;
  for (const auto& g : ss.groups) {
    auto& members = blocks.emplace_back();
    for (auto p : g) members.push_back(sorted[p]);
    std::sort(members.begin(), members.end());
  }
  // blocks ordered by their smallest current label
  std::sort(blocks.begin(), blocks.end());
  std::vector<std::uint32_t> order;
  order.reserve(k);
  for (const auto& b : blocks) order.insert(order.end(), b.begin(), b.end());
  return order;
}

ProductQuantizer optimize_centroid_assignment(const ProductQuantizer& pq, const TrainConfig& cfg) {
  require_8x8(pq.m(), pq.bits(), "optimize_centroid_assignment");
  ProductQuantizer out = pq;
  for (std::size_t j = 4; j < 8; ++j) {
    out = out.with_permuted_codebook(j, clustered_centroid_order(out.codebook(j), cfg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// grouping

PackedCode6 pack6(std::span<const std::uint16_t> code) {
  if (code.size() != 8) throw InvalidArgument("pack6: code must have 8 components");
  PackedCode6 p{};
  p[0] = static_cast<std::uint8_t>((code[0] & 15) | ((code[1] & 15) << 4));
  p[1] = static_cast<std::uint8_t>((code[2] & 15) | ((code[3] & 15) << 4));
  for (std::size_t j = 4; j < 8; ++j) p[j - 2] = static_cast<std::uint8_t>(code[j]);
  return p;
}

Code unpack6(const PackedCode6& p, GroupKey key) {
  Code c(8);
  c[0] = static_cast<std::uint16_t>(((key >> 12) & 15) << 4 | (p[0] & 15));
  c[1] = static_cast<std::uint16_t>(((key >> 8) & 15) << 4 | (p[0] >> 4));
  c[2] = static_cast<std::uint16_t>(((key >> 4) & 15) << 4 | (p[1] & 15));
  c[3] = static_cast<std::uint16_t>((key & 15) << 4 | (p[1] >> 4));
  for (std::size_t j = 4; j < 8; ++j) c[j] = p[j - 2];
  return c;
}

PackedCode6 GroupedDatabase::packed(const Group& g, std::size_t t) const {
  const std::uint8_t* blk = block(g.first_block + t / kBlock);
  PackedCode6 p{};
  for (std::size_t r = 0; r < kRows; ++r) p[r] = blk[r * kBlock + t % kBlock];
  return p;
}

GroupedDatabase group_codes(const CodeList& list) {
  require_8x8(list.m(), list.bits(), "group_codes");
  constexpr std::size_t kKeys = 1 << 16;
  std::vector<std::uint32_t> counts(kKeys, 0);
  std::vector<GroupKey> keys(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto* c = list.packed(i).data();
    keys[i] = static_cast<GroupKey>(((c[0] >> 4) << 12) | ((c[1] >> 4) << 8) | ((c[2] >> 4) << 4) | (c[3] >> 4));
    ++counts[keys[i]];
  }

  GroupedDatabase db;
  db.n_ = list.size();
  std::vector<std::size_t> first(kKeys, 0);
  std::size_t blocks = 0;
  for (std::size_t key = 0; key < kKeys; ++key) {
    if (counts[key] == 0) continue;
    first[key] = blocks;
    db.groups_.push_back({static_cast<GroupKey>(key), blocks, counts[key]});
    blocks += (counts[key] + GroupedDatabase::kBlock - 1) / GroupedDatabase::kBlock;
  }
  db.bytes_.assign(blocks * GroupedDatabase::kBlockBytes, 0);
  db.ids_.assign(blocks * GroupedDatabase::kBlock, -1);

  std::vector<std::uint32_t> fill(kKeys, 0);
  for (std::size_t i = 0; i < list.size(); ++i) {
    const GroupKey key = keys[i];
    const std::size_t t = fill[key]++;
    const std::size_t slot = first[key] * GroupedDatabase::kBlock + t;
    std::uint8_t* blk = db.bytes_.data() + (slot / GroupedDatabase::kBlock) * GroupedDatabase::kBlockBytes;
    const auto* c = list.packed(i).data();
    const std::size_t lane = slot % GroupedDatabase::kBlock;
    blk[0 * 16 + lane] = static_cast<std::uint8_t>((c[0] & 15) | ((c[1] & 15) << 4));
    blk[1 * 16 + lane] = static_cast<std::uint8_t>((c[2] & 15) | ((c[3] & 15) << 4));
    for (std::size_t j = 4; j < 8; ++j) blk[(j - 2) * 16 + lane] = c[j];
    db.ids_[slot] = list.id(i);
  }
  return db;
}

CodeList GroupedDatabase::ungroup() const {
  CodeList out(8, 8);
  out.reserve(n_);
  for (const auto& g : groups_) {
    for (std::size_t t = 0; t < g.count; ++t) out.append(code(g, t), id(g, t));
  }
  return out;
}

void GroupedDatabase::save(std::ostream& out) const {
  io::BinaryWriter w(out);
  w.magic("PQG1");
  w.put<std::uint64_t>(n_);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(groups_.size()));
  for (const auto& g : groups_) {
    w.put<std::uint16_t>(g.key);
    w.put<std::uint64_t>(g.first_block);
    w.put<std::uint64_t>(g.count);
  }
  w.put<std::uint64_t>(block_count());
  w.put_array(std::span<const std::uint8_t>(bytes_));
  w.put_array(std::span<const std::int64_t>(ids_));
}

GroupedDatabase GroupedDatabase::load(std::istream& in, std::uint64_t base_offset) {
  io::BinaryReader r(in, base_offset);
  r.expect_magic("PQG1");
  GroupedDatabase db;
  db.n_ = r.get<std::uint64_t>();
  const auto ngroups = r.get<std::uint32_t>();
  if (ngroups > (1u << 16)) r.fail("PQG1: more than 65536 groups");
  std::size_t total = 0;
  std::size_t next_block = 0;
  for (std::uint32_t i = 0; i < ngroups; ++i) {
    Group g;
    g.key = r.get<std::uint16_t>();
    g.first_block = r.get<std::uint64_t>();
    g.count = r.get<std::uint64_t>();
    if (!db.groups_.empty() && g.key <= db.groups_.back().key) r.fail("PQG1: group keys not ascending");
    if (g.count == 0) r.fail("PQG1: empty group");
    if (g.first_block != next_block) r.fail("PQG1: group blocks not contiguous");
    next_block += (g.count + kBlock - 1) / kBlock;
    total += g.count;
    db.groups_.push_back(g);
  }
  if (total != db.n_) r.fail("PQG1: group counts do not add up to n");
  const auto blocks = r.get<std::uint64_t>();
  if (blocks != next_block) r.fail("PQG1: block count does not match directory");
  db.bytes_.resize(blocks * kBlockBytes);
  r.get_array(std::span<std::uint8_t>(db.bytes_));
  db.ids_.resize(blocks * kBlock);
  r.get_array(std::span<std::int64_t>(db.ids_));
  return db;
}

void GroupedDatabase::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  save(out);
}

GroupedDatabase GroupedDatabase::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

// ---------------------------------------------------------------------------
// small tables

namespace {

struct QueryTables {
  std::array<std::array<std::uint8_t, 256>, 4> grouped;  // quantized D0..D3
  std::array<std::array<std::uint8_t, 16>, 4> minima;    // S4..S7
};

QueryTables quantize_query(const LookupTables& tables, const QuantParams& params) {
  QueryTables q;
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i < 256; ++i) q.grouped[j][i] = params.quantize(tables.at(j, i));
  }
  for (std::size_t j = 4; j < 8; ++j) {
    const auto t = tables.table(j);
    for (std::size_t p = 0; p < 16; ++p) {
      q.minima[j - 4][p] = params.quantize(*std::min_element(t.begin() + 16 * p, t.begin() + 16 * p + 16));
    }
  }
  return q;
}

void fill_group_tables(const QueryTables& q, GroupKey key, SmallTables& s) {
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t portion = (key >> (12 - 4 * j)) & 15;
    std::copy_n(q.grouped[j].begin() + 16 * portion, 16, s.t[j].begin());
  }
}

}  // namespace

SmallTables build_small_tables(const LookupTables& tables, const QuantParams& params, GroupKey key) {
  if (tables.m() != 8 || tables.ksub() != 256) {
    throw InvalidArgument("build_small_tables: lookup tables must be 8 x 256");
  }
  const auto q = quantize_query(tables, params);
  SmallTables s;
  fill_group_tables(q, key, s);
  for (std::size_t j = 0; j < 4; ++j) s.t[4 + j] = q.minima[j];
  return s;
}

std::uint8_t lower_bound(const SmallTables& s, const PackedCode6& p) {
  const std::uint8_t idx[8] = {
      static_cast<std::uint8_t>(p[0] & 15), static_cast<std::uint8_t>(p[0] >> 4),
      static_cast<std::uint8_t>(p[1] & 15), static_cast<std::uint8_t>(p[1] >> 4),
      static_cast<std::uint8_t>(p[2] >> 4), static_cast<std::uint8_t>(p[3] >> 4),
      static_cast<std::uint8_t>(p[4] >> 4), static_cast<std::uint8_t>(p[5] >> 4)};
  int acc = 0;
  for (std::size_t j = 0; j < 8; ++j) acc = std::min(127, acc + s.t[j][idx[j]]);
  return static_cast<std::uint8_t>(acc);
}

// ---------------------------------------------------------------------------
// scan

namespace {

// 16 lower bounds of one block.
void block_bounds_scalar(const SmallTables& s, const std::uint8_t* blk, std::uint8_t* out) {
  for (std::size_t lane = 0; lane < 16; ++lane) {
    PackedCode6 p;
    for (std::size_t r = 0; r < 6; ++r) p[r] = blk[r * 16 + lane];
    out[lane] = lower_bound(s, p);
  }
}

#if PQSCAN_HAVE_SSSE3
void block_bounds_ssse3(const SmallTables& s, const std::uint8_t* blk, std::uint8_t* out) {
  const __m128i lo = _mm_set1_epi8(0x0f);
  auto table = [&](std::size_t j) { return _mm_loadu_si128(reinterpret_cast<const __m128i*>(s.t[j].data())); };
  auto row = [&](std::size_t r) { return _mm_loadu_si128(reinterpret_cast<const __m128i*>(blk + r * 16)); };
  auto high = [&](__m128i v) { return _mm_and_si128(_mm_srli_epi16(v, 4), lo); };

  const __m128i r0 = row(0);
  const __m128i r1 = row(1);
  __m128i acc = _mm_shuffle_epi8(table(0), _mm_and_si128(r0, lo));
  acc = _mm_adds_epi8(acc, _mm_shuffle_epi8(table(1), high(r0)));
  acc = _mm_adds_epi8(acc, _mm_shuffle_epi8(table(2), _mm_and_si128(r1, lo)));
  acc = _mm_adds_epi8(acc, _mm_shuffle_epi8(table(3), high(r1)));
  for (std::size_t j = 4; j < 8; ++j) acc = _mm_adds_epi8(acc, _mm_shuffle_epi8(table(j), high(row(j - 2))));
  _mm_storeu_si128(reinterpret_cast<__m128i*>(out), acc);
}
#endif

float exact_distance(const float* t, GroupKey key, const std::uint8_t* blk, std::size_t lane) {
  const std::uint8_t b0 = blk[lane];
  const std::uint8_t b1 = blk[16 + lane];
  const unsigned c0 = ((key >> 12) & 15) << 4 | (b0 & 15);
  const unsigned c1 = ((key >> 8) & 15) << 4 | (b0 >> 4);
  const unsigned c2 = ((key >> 4) & 15) << 4 | (b1 & 15);
  const unsigned c3 = (key & 15) << 4 | (b1 >> 4);
  // Same summation order as the baseline scan.
  float d = t[c0];
  d += t[256 + c1];
  d += t[512 + c2];
  d += t[768 + c3];
  d += t[1024 + blk[32 + lane]];
  d += t[1280 + blk[48 + lane]];
  d += t[1536 + blk[64 + lane]];
  d += t[1792 + blk[80 + lane]];
  return d;
}

}  // namespace

NeighborSet fast_scan(const GroupedDatabase& grouped, const LookupTables& tables, double init,
                      std::size_t r, FastScanStats* stats, Kernel kernel) {
  if (tables.m() != 8 || tables.ksub() != 256) {
    throw InvalidArgument("fast_scan: lookup tables must be 8 x 256");
  }
  if (!(init > 0.0 && init <= 1.0)) throw InvalidArgument("fast_scan: init must be in (0, 1]");
  if (r == 0) throw InvalidArgument("fast_scan: r must be >= 1");
  const std::size_t n = grouped.size();
  NeighborSet out(std::min(r, n));
  FastScanStats local;
  if (n == 0) {
    if (stats) *stats = local;
    return out;
  }
  const float* t = tables.values().data();
  const auto& groups = grouped.groups();

  // qmax: r-th best exact distance over a sample spread across the storage.
  const std::size_t sample = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(init * static_cast<double>(n) - 1e-9)), 1, n);
  {
    NeighborSet tmp(std::min(r, sample));
    std::size_t gi = 0;
    std::size_t before = 0;  // codes in groups preceding gi
    for (std::size_t s = 0; s < sample; ++s) {
      const std::size_t pos = s * n / sample;
      while (pos >= before + groups[gi].count) before += groups[gi++].count;
      const auto& g = groups[gi];
      const std::size_t tpos = pos - before;
      tmp.add(static_cast<std::int64_t>(pos),
              exact_distance(t, g.key, grouped.block(g.first_block + tpos / 16), tpos % 16));
    }
    local.init_scanned = sample;
    local.params.qmin = tables.min_value();
    local.params.qmax = tmp.worst().distance;
    local.params.bins = 127;
  }
  const QuantParams& params = local.params;
  const auto q = quantize_query(tables, params);

  SmallTables small;
  for (std::size_t j = 0; j < 4; ++j) small.t[4 + j] = q.minima[j];

  std::uint8_t threshold = 127;
  alignas(16) std::uint8_t lb[16];
  auto visit = [&](const GroupedDatabase::Group& g, std::size_t b, const std::uint8_t* blk, unsigned cand) {
    while (cand) {
      const unsigned lane = static_cast<unsigned>(std::countr_zero(cand));
      cand &= cand - 1;
      // The threshold may have tightened since the mask was taken.
      if (lb[lane] > threshold) {
        ++local.pruned;
        continue;
      }
      ++local.checked;
      const float d = exact_distance(t, g.key, blk, lane);
      if (out.add(grouped.id(g, b * 16 + lane), d) && out.full()) {
        threshold = params.quantize(out.worst().distance);
      }
    }
  };

#if PQSCAN_HAVE_SSSE3
  const bool simd = kernel == Kernel::Auto;
#else
  const bool simd = false;
  (void)kernel;
#endif
  for (const auto& g : groups) {
    fill_group_tables(q, g.key, small);
    const std::size_t nblocks = (g.count + 15) / 16;
    for (std::size_t b = 0; b < nblocks; ++b) {
      const std::uint8_t* blk = grouped.block(g.first_block + b);
      const std::size_t valid = std::min<std::size_t>(16, g.count - b * 16);
      const unsigned valid_mask = (1u << valid) - 1;
      unsigned keep = 0;
#if PQSCAN_HAVE_SSSE3
      if (simd) {
        block_bounds_ssse3(small, blk, lb);
        const __m128i v = _mm_load_si128(reinterpret_cast<const __m128i*>(lb));
        const __m128i over = _mm_cmpgt_epi8(v, _mm_set1_epi8(static_cast<char>(threshold)));
        keep = ~static_cast<unsigned>(_mm_movemask_epi8(over)) & valid_mask;
      }
#endif
      if (!simd) {
        block_bounds_scalar(small, blk, lb);
        for (std::size_t lane = 0; lane < valid; ++lane) {
          if (lb[lane] <= threshold) keep |= 1u << lane;
        }
      }
      local.pruned += static_cast<std::size_t>(std::popcount(valid_mask & ~keep));
      visit(g, b, blk, keep);
    }
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace pqscan
