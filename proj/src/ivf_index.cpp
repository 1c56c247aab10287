#include "pqscan/ivf_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "pqscan/binary_io.hpp"
#include "pqscan/detail/pqz_codec.hpp"

namespace pqscan {

IvfKernel parse_ivf_kernel(const std::string& name) {
  if (name == "adc") return IvfKernel::Adc;
  if (name == "quick-adc" || name == "quick_adc") return IvfKernel::QuickAdc;
  if (name == "derived") return IvfKernel::Derived;
  throw InvalidArgument("unknown IVF kernel '" + name + "'");
}

std::string to_string(IvfKernel k) {
  switch (k) {
    case IvfKernel::Adc: return "adc";
    case IvfKernel::QuickAdc: return "quick-adc";
    case IvfKernel::Derived: return "derived";
  }
  return "?";
}

std::vector<float> residual(std::span<const float> x, std::span<const float> c) {
  if (x.size() != c.size()) throw InvalidArgument("residual: dimensionality mismatch");
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - c[i];
  return out;
}

IvfIndex::IvfIndex(Codebook coarse, ProductQuantizer pq, std::vector<CodeList> lists,
                   std::optional<DerivedPQ> derived)
    : coarse_(std::move(coarse)), pq_(std::move(pq)), lists_(std::move(lists)), derived_(std::move(derived)) {
  if (lists_.size() != coarse_.size()) throw InvalidArgument("IvfIndex: one list per coarse centroid");
  if (pq_.dim() != coarse_.dim()) throw InvalidArgument("IvfIndex: quantizer and coarse dims differ");
  for (const auto& l : lists_) {
    if (l.m() != pq_.m() || l.bits() != pq_.bits()) throw InvalidArgument("IvfIndex: list shape mismatch");
  }
  if (derived_ && !(derived_->full() == pq_)) throw InvalidArgument("IvfIndex: derived quantizer mismatch");
  build_transposed();
}

void IvfIndex::build_transposed() {
  transposed_.clear();
  if (pq_.bits() != 4) return;
  for (const auto& l : lists_) transposed_.push_back(transpose_blocks(l));
}

std::size_t IvfIndex::size() const noexcept {
  std::size_t n = 0;
  for (const auto& l : lists_) n += l.size();
  return n;
}

std::vector<std::uint32_t> IvfIndex::nearest_lists(std::span<const float> y, std::size_t ma) const {
  if (y.size() != dim()) throw InvalidArgument("query_ivf: query dimensionality mismatch");
  if (ma < 1 || ma > K()) throw InvalidArgument("query_ivf: ma must be in [1, K]");
  std::vector<std::pair<float, std::uint32_t>> d(K());
  for (std::uint32_t i = 0; i < K(); ++i) d[i] = {squared_l2(y, coarse_.centroid(i)), i};
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(ma), d.end());
  std::vector<std::uint32_t> out(ma);
  for (std::size_t i = 0; i < ma; ++i) out[i] = d[i].second;
  return out;
}

namespace {

DenseMatrix sample_rows(const DenseMatrix& x, std::size_t count, std::uint64_t seed) {
  if (count >= x.rows()) return x;
  std::vector<std::size_t> all(x.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> pick;
  pick.reserve(count);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(pick), count, rng);
  DenseMatrix out(count, x.dim());
  for (std::size_t i = 0; i < count; ++i) std::copy_n(x.row(pick[i]).data(), x.dim(), out.row(i).data());
  return out;
}

}  // namespace

IvfIndex build_ivf(const DenseMatrix& base, const IvfConfig& cfg) {
  check_bits(cfg.b);
  const std::size_t n = base.rows();
  if (cfg.K == 0) throw InvalidArgument("build_ivf: K must be positive");
  if (n < cfg.K || n < (std::size_t{1} << cfg.b)) {
    throw InvalidArgument("build_ivf: " + std::to_string(n) + " vectors are not enough for K=" +
                          std::to_string(cfg.K) + ", b=" + std::to_string(cfg.b));
  }
  if (cfg.bbar > 0 && cfg.opq) throw InvalidArgument("build_ivf: derived quantizers are trained without OPQ");

  const auto coarse_train = sample_rows(base, std::min(n, 256 * cfg.K), cfg.train.seed);
  Codebook coarse = kmeans(coarse_train, cfg.K, cfg.train).codebook;

  std::vector<std::uint32_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = coarse.nearest(base.row(i)).first;

  const auto sample = sample_rows(base, std::min(n, std::size_t{100} << cfg.b), cfg.train.seed + 1);
  DenseMatrix res(sample.rows(), base.dim());
  for (std::size_t i = 0; i < sample.rows(); ++i) {
    const auto c = coarse.centroid(coarse.nearest(sample.row(i)).first);
    const auto r = residual(sample.row(i), c);
    std::copy(r.begin(), r.end(), res.row(i).begin());
  }

  std::optional<DerivedPQ> derived;
  ProductQuantizer pq;
  if (cfg.bbar > 0) {
    derived = train_derived_pq(res, cfg.m, cfg.b, cfg.bbar, cfg.train);
    pq = derived->full();
  } else if (cfg.opq) {
    pq = train_opq(res, cfg.m, cfg.b, cfg.train);
  } else {
    pq = train_pq(res, cfg.m, cfg.b, cfg.train);
  }

  std::vector<CodeList> lists(cfg.K, CodeList(cfg.m, cfg.b));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = residual(base.row(i), coarse.centroid(assign[i]));
    lists[assign[i]].append(pq.encode(r), static_cast<std::int64_t>(i));
  }
  return IvfIndex(std::move(coarse), std::move(pq), std::move(lists), std::move(derived));
}

NeighborSet query_ivf(const IvfIndex& index, std::span<const float> y, std::size_t ma,
                      std::size_t r, const IvfQueryOptions& opt, IvfQueryStats* stats) {
  if (r == 0) throw InvalidArgument("query_ivf: r must be >= 1");
  if (opt.kernel == IvfKernel::QuickAdc && index.pq().bits() != 4) {
    throw InvalidArgument("query_ivf: quick-adc requires b=4, index has b=" + std::to_string(index.pq().bits()));
  }
  if (opt.kernel == IvfKernel::QuickAdc && index.pq().m() % 2 != 0) {
    throw InvalidArgument("query_ivf: quick-adc requires an even m");
  }
  if (opt.kernel == IvfKernel::Derived && !index.derived()) {
    throw InvalidArgument("query_ivf: derived kernel requires an index built with derived quantizers");
  }
  const auto probes = index.nearest_lists(y, ma);
  IvfQueryStats local;
  local.lists = probes.size();
  for (auto l : probes) local.scanned += index.list(l).size();

  NeighborSet out(r);
  std::vector<std::vector<float>> queries;
  for (auto l : probes) queries.push_back(residual(y, index.coarse().centroid(l)));

  switch (opt.kernel) {
    case IvfKernel::Adc:
      for (std::size_t p = 0; p < probes.size(); ++p) {
        scan_into(index.list(probes[p]), compute_tables(index.pq(), queries[p]), out);
      }
      break;

    case IvfKernel::QuickAdc: {
      // One parameter set for all probed lists keeps their bins comparable.
      std::vector<LookupTables> tables;
      for (const auto& q : queries) tables.push_back(compute_tables(index.pq(), q));
      if (local.scanned == 0) break;
      QuantParams params;
      params.qmin = tables[0].min_value();
      for (const auto& t : tables) params.qmin = std::min(params.qmin, t.min_value());
      const std::size_t init = std::clamp<std::size_t>(opt.init_count, 1, local.scanned);
      NeighborSet tmp(std::min(r, init));
      std::size_t seen = 0;
      for (std::size_t p = 0; p < probes.size() && seen < init; ++p) {
        const auto& list = index.list(probes[p]);
        for (std::size_t i = 0; i < list.size() && seen < init; ++i, ++seen) {
          tmp.add(static_cast<std::int64_t>(seen), adc_distance(tables[p], list, i));
        }
      }
      params.qmax = tmp.worst().distance;
      local.params = params;
      for (std::size_t p = 0; p < probes.size(); ++p) {
        qadc_scan_into(index.transposed_[probes[p]], quantize_tables_4bit(tables[p], params), out);
      }
      break;
    }

    case IvfKernel::Derived:
      for (std::size_t p = 0; p < probes.size(); ++p) {
        const auto& list = index.list(probes[p]);
        if (list.empty()) continue;
        // Candidate budget split in proportion to list size.
        const auto share = static_cast<std::size_t>(std::ceil(static_cast<double>(opt.r2) *
                                                              static_cast<double>(list.size()) /
                                                              static_cast<double>(local.scanned)));
        const auto part = search_two_pass(*index.derived(), list, queries[p], r, std::max(share, r));
        for (const auto& nb : part.sorted()) out.add(nb.id, nb.distance);
      }
      break;
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t stream_offset(std::istream& in, std::streampos start, std::uint64_t base) {
  const auto pos = in.tellg();
  if (pos == std::streampos(-1) || start == std::streampos(-1)) return base;
  return base + static_cast<std::uint64_t>(pos - start);
}

}  // namespace

void IvfIndex::save(std::ostream& out) const {
  io::BinaryWriter w(out);
  w.magic("IVF1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(K()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim()));
  w.put_array(std::span<const float>(coarse_.matrix().data()));
  if (derived_) {
    derived_->save(out);
  } else {
    pq_.save(out);
  }
  for (const auto& l : lists_) l.save(out);
}

IvfIndex IvfIndex::load(std::istream& in, std::uint64_t base_offset) {
  const auto start = in.tellg();
  std::uint32_t K = 0;
  std::uint32_t d = 0;
  std::vector<float> centroids;
  {
    io::BinaryReader r(in, base_offset);
    r.expect_magic("IVF1");
    K = r.get<std::uint32_t>();
    d = r.get<std::uint32_t>();
    if (K == 0 || d == 0) r.fail("IVF1: K and d must be positive");
    centroids.resize(std::size_t{K} * d);
    r.get_array(std::span<float>(centroids));
  }
  io::BinaryReader r(in, stream_offset(in, start, base_offset));
  std::uint8_t flags = 0;
  auto pq = detail::read_pqz(r, flags);
  std::optional<DerivedPQ> derived;
  if (flags & detail::kPqzDerived) {
    auto [bbar, cbs] = detail::read_derived_trailer(r, pq.m(), pq.dsub());
    if (bbar > pq.bits()) r.fail("PQZ1: derived width exceeds b");
    derived.emplace(pq, bbar, std::move(cbs));
  }
  if (pq.dim() != d) r.fail("IVF1: quantizer dimensionality differs from coarse centroids");
  std::vector<CodeList> lists;
  lists.reserve(K);
  for (std::uint32_t i = 0; i < K; ++i) {
    const auto off = stream_offset(in, start, base_offset);
    lists.push_back(CodeList::load(in, off));
    if (lists.back().m() != pq.m() || lists.back().bits() != pq.bits()) {
      throw FormatError("IVF1: list shape differs from quantizer", off);
    }
  }
  return IvfIndex(Codebook(DenseMatrix(K, d, std::move(centroids))), std::move(pq), std::move(lists),
                  std::move(derived));
}

void IvfIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  save(out);
}

IvfIndex IvfIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

}  // namespace pqscan
