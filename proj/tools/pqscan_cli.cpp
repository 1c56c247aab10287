// pqscan command-line front end.
//
// Exit codes: 0 success, 2 usage error, 1 data error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pqscan/bench_report.hpp"
#include "pqscan/dataset_io.hpp"
#include "pqscan/derived_quantizer.hpp"
#include "pqscan/fast_scan.hpp"
#include "pqscan/ivf_index.hpp"
#include "pqscan/quick_adc.hpp"

namespace fs = std::filesystem;
using namespace pqscan;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

DenseMatrix read_vectors(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".bvecs") return read_bvecs(path);
  if (ext == ".fvecs") return read_fvecs(path);
  throw UsageError("cannot tell the format of " + path.string() + " (expected .fvecs or .bvecs)");
}

DenseMatrix training_sample(const DenseMatrix& base, std::size_t limit) {
  if (limit == 0 || limit >= base.rows()) return base;
  // Evenly spaced rows; deterministic and cheap.
  DenseMatrix out(limit, base.dim());
  for (std::size_t i = 0; i < limit; ++i) {
    const auto src = base.row(i * base.rows() / limit);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void run_parallel(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

void print_neighbors(std::ostream& out, std::size_t q, const std::vector<Neighbor>& nbs,
                     const std::optional<QuantParams>& rescale = std::nullopt) {
  for (std::size_t k = 0; k < nbs.size(); ++k) {
    const float d = rescale ? rescale->rescale(static_cast<std::uint32_t>(nbs[k].distance)) : nbs[k].distance;
    out << q << ',' << k << ',' << nbs[k].id << ',' << d << '\n';
  }
}

// ---------------------------------------------------------------------------

struct Options {
  // shared
  std::string base, queries, truth, out, queries_out, pq_path, codes_path, index_path, csv;
  std::size_t n = 10000, d = 128, clusters = 64, nq = 0;
  std::size_t m = 8, b = 8, bderived = 0, K = 0, ma = 1, r = 100, r2 = 9000, k = 100;
  double init = 0.5;            // percent, fast-scan
  std::size_t init_count = 200;  // quick-adc
  std::vector<std::string> kernels{"adc"};
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool opq = false;
  bool optimize_assignment = false;
  int kmeans_iters = 25, opq_iters = 50;
  std::size_t train_size = 20000;
};

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.kmeans_iters = o.kmeans_iters;
  c.opq_iters = o.opq_iters;
  c.seed = o.seed;
  return c;
}

int cmd_generate(const Options& o) {
  if (o.nq > 0 && o.queries_out.empty()) throw UsageError("--nq needs --queries-out");
  // Queries come from the same draw so they follow the base distribution.
  const auto x = generate_synthetic(o.n + o.nq, o.d, o.clusters, o.seed);
  write_fvecs(o.out, x.slice(0, o.n));
  std::cerr << "wrote " << o.n << " x " << x.dim() << " to " << o.out << '\n';
  if (!o.queries_out.empty()) write_fvecs(o.queries_out, x.slice(o.n, o.n + o.nq));
  return 0;
}

int cmd_train(const Options& o) {
  const auto base = read_vectors(o.base);
  if (base.empty()) throw InvalidArgument("empty training set");
  const auto sample = training_sample(base, o.train_size);
  const auto cfg = train_config(o);
  if (o.bderived > 0) {
    train_derived_pq(sample, o.m, o.b, o.bderived, cfg).save(fs::path(o.out));
    return 0;
  }
  auto pq = o.opq ? train_opq(sample, o.m, o.b, cfg) : train_pq(sample, o.m, o.b, cfg);
  if (o.optimize_assignment) pq = optimize_centroid_assignment(pq, cfg);
  pq.save(fs::path(o.out));
  std::cerr << "training error " << pq.quantization_error(sample) << '\n';
  return 0;
}

int cmd_encode(const Options& o) {
  const auto pq = ProductQuantizer::load(fs::path(o.pq_path));
  const auto base = read_vectors(o.base);
  const auto codes = pq.encode_all(base);
  const fs::path out(o.out);
  if (out.extension() == ".pqg") {
    group_codes(codes).save(out);
  } else {
    codes.save(out);
  }
  return 0;
}

int cmd_build_ivf(const Options& o) {
  const auto base = read_vectors(o.base);
  if (o.K == 0) throw UsageError("--K is required");
  IvfConfig cfg;
  cfg.K = o.K;
  cfg.m = o.m;
  cfg.b = o.b;
  cfg.bbar = o.bderived;
  cfg.opq = o.opq;
  cfg.train = train_config(o);
  build_ivf(base, cfg).save(fs::path(o.out));
  return 0;
}

int cmd_ground_truth(const Options& o) {
  const auto base = read_vectors(o.base);
  const auto queries = read_vectors(o.queries);
  const auto gt = exact_knn(base, queries, o.k, o.threads);
  write_ivecs(o.out, gt.to_ivecs());
  return 0;
}

int cmd_query(const Options& o) {
  const auto queries = read_vectors(o.queries);
  const std::size_t nq = o.nq ? std::min(o.nq, queries.rows()) : queries.rows();
  if (o.kernels.size() != 1) throw UsageError("query takes a single --kernel");
  const std::string& kernel = o.kernels[0];
  std::ostringstream out;
  out << "query,rank,id,distance\n";

  if (!o.index_path.empty()) {
    const auto index = IvfIndex::load(fs::path(o.index_path));
    IvfQueryOptions opt;
    opt.kernel = parse_ivf_kernel(kernel);
    opt.init_count = o.init_count;
    opt.r2 = o.r2;
    if (opt.kernel == IvfKernel::Derived && !index.derived()) {
      throw UsageError("this index has no derived quantizers (build it with --bderived)");
    }
    if (opt.kernel == IvfKernel::QuickAdc && (index.pq().bits() != 4 || index.pq().m() % 2 != 0)) {
      throw UsageError("quick-adc needs an index with b=4 and even m");
    }
    for (std::size_t q = 0; q < nq; ++q) {
      IvfQueryStats st;
      const auto res = query_ivf(index, queries.row(q), o.ma, o.r, opt, &st);
      print_neighbors(out, q, res.sorted(), st.params);
    }
    std::cout << out.str();
    return 0;
  }

  if (o.pq_path.empty() || o.codes_path.empty()) throw UsageError("query needs --index or --pq and --codes");
  if (kernel == "derived") {
    const auto dpq = DerivedPQ::load(fs::path(o.pq_path));
    const auto codes = CodeList::load(fs::path(o.codes_path));
    for (std::size_t q = 0; q < nq; ++q) {
      print_neighbors(out, q, search_two_pass(dpq, codes, queries.row(q), o.r, o.r2).sorted());
    }
  } else {
    const auto pq = ProductQuantizer::load(fs::path(o.pq_path));
    const fs::path cpath(o.codes_path);
    if (kernel == "fast-scan") {
      const auto grouped = cpath.extension() == ".pqg" ? GroupedDatabase::load(cpath)
                                                       : group_codes(CodeList::load(cpath));
      for (std::size_t q = 0; q < nq; ++q) {
        const auto t = compute_tables(pq, queries.row(q));
        print_neighbors(out, q, fast_scan(grouped, t, o.init / 100.0, o.r).sorted());
      }
    } else if (kernel == "quick-adc") {
      const auto tl = transpose_blocks(CodeList::load(cpath));
      for (std::size_t q = 0; q < nq; ++q) {
        const auto res = qadc_scan(tl, compute_tables(pq, queries.row(q)), o.init_count, o.r);
        print_neighbors(out, q, res.neighbors.sorted(), res.params);
      }
    } else if (kernel == "adc") {
      const auto codes = CodeList::load(cpath);
      for (std::size_t q = 0; q < nq; ++q) {
        print_neighbors(out, q, scan(codes, compute_tables(pq, queries.row(q)), o.r).sorted());
      }
    } else {
      throw UsageError("unknown kernel '" + kernel + "'");
    }
  }
  std::cout << out.str();
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct KernelRun {
  std::vector<std::vector<std::int64_t>> ids;
  std::vector<double> ms;
  double codes_per_query = 0.0;
  std::optional<double> pruned;
};

template <typename Fn>
KernelRun time_queries(std::size_t nq, unsigned threads, Fn&& fn) {
  KernelRun run;
  run.ids.resize(nq);
  run.ms.resize(nq);
  std::vector<std::size_t> scanned(nq, 0);
  std::vector<std::pair<std::size_t, std::size_t>> pruning(nq, {0, 0});
  // Warm-up, not timed.
  fn(0, scanned[0], pruning[0]);
  run_parallel(nq, threads, [&](std::size_t q) {
    const auto t0 = std::chrono::steady_clock::now();
    run.ids[q] = fn(q, scanned[q], pruning[q]);
    const auto t1 = std::chrono::steady_clock::now();
    run.ms[q] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  });
  double total = 0.0;
  std::size_t pruned = 0, checked = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    total += static_cast<double>(scanned[q]);
    checked += pruning[q].first;
    pruned += pruning[q].second;
  }
  run.codes_per_query = total / static_cast<double>(nq);
  if (checked + pruned > 0) run.pruned = static_cast<double>(pruned) / static_cast<double>(checked + pruned);
  return run;
}

int cmd_bench(const Options& o) {
  if (o.truth.empty()) throw UsageError("bench needs --truth (see the ground-truth subcommand)");
  const auto base = read_vectors(o.base);
  const auto queries = read_vectors(o.queries);
  const auto truth = GroundTruth::from_ivecs(read_ivecs(o.truth));
  if (base.empty()) throw InvalidArgument("bench: empty base");
  if (queries.empty()) throw InvalidArgument("bench: no queries");
  if (queries.dim() != base.dim()) throw InvalidArgument("bench: base and queries differ in dimensionality");
  const std::size_t nq = std::min({o.nq ? o.nq : queries.rows(), queries.rows(), truth.queries()});
  if (nq == 0) throw InvalidArgument("bench: ground truth has no rows");

  const bool ivf = o.K > 0;
  bool any_derived = false, any_fast = false;
  for (const auto& k : o.kernels) {
    if (k != "adc" && k != "fast-scan" && k != "quick-adc" && k != "derived") {
      throw UsageError("unknown kernel '" + k + "'");
    }
    if (k == "fast-scan") {
      if (ivf) throw UsageError("fast-scan runs exhaustively; drop --K");
      if (o.m != 8 || o.b != 8) throw UsageError("fast-scan requires --m 8 --b 8");
      any_fast = true;
    }
    if (k == "quick-adc" && (o.b != 4 || o.m % 2 != 0)) throw UsageError("quick-adc requires --b 4 and an even --m");
    if (k == "derived") {
      if (o.bderived == 0 || o.bderived >= o.b) throw UsageError("derived requires 0 < --bderived < --b");
      any_derived = true;
    }
  }
  if (!supported_bits(o.b)) throw UsageError("unsupported --b " + std::to_string(o.b));

  const auto cfg = train_config(o);
  BenchReport report;
  GroundTruth used;
  used.k = truth.k;
  used.ids.assign(truth.ids.begin(), truth.ids.begin() + static_cast<std::ptrdiff_t>(nq * truth.k));
  auto recall_of = [&](const KernelRun& run) { return recall_at_r(run.ids, used, o.r); };
  auto add_row = [&](const std::string& method, const KernelRun& run) {
    BenchRow row;
    row.method = method;
    row.m = o.m;
    row.b = o.b;
    row.K = o.K;
    row.ma = ivf ? o.ma : 0;
    row.r = o.r;
    row.r2 = method == "derived" ? o.r2 : 0;
    row.recall = recall_of(run);
    const auto t = summarize_times(run.ms);
    row.mean_ms = t.mean_ms;
    row.median_ms = t.median_ms;
    row.mcodes_per_s = t.mean_ms > 0 ? run.codes_per_query / (t.mean_ms * 1000.0) : 0.0;
    row.pruned_fraction = run.pruned;
    report.rows.push_back(row);
  };

  if (ivf) {
    IvfConfig icfg;
    icfg.K = o.K;
    icfg.m = o.m;
    icfg.b = o.b;
    icfg.bbar = any_derived ? o.bderived : 0;
    icfg.opq = o.opq;
    icfg.train = cfg;
    const auto index = build_ivf(base, icfg);
    for (const auto& k : o.kernels) {
      IvfQueryOptions opt;
      opt.kernel = parse_ivf_kernel(k);
      opt.init_count = o.init_count;
      opt.r2 = o.r2;
      const auto run = time_queries(nq, o.threads, [&](std::size_t q, std::size_t& scanned, auto&) {
        IvfQueryStats st;
        auto ids = query_ivf(index, queries.row(q), o.ma, o.r, opt, &st).ids();
        scanned = st.scanned;
        return ids;
      });
      add_row(k, run);
    }
  } else {
    const auto sample = training_sample(base, o.train_size);
    std::optional<DerivedPQ> dpq;
    ProductQuantizer pq;
    if (any_derived) {
      dpq = train_derived_pq(sample, o.m, o.b, o.bderived, cfg);
      pq = dpq->full();
    } else {
      pq = o.opq ? train_opq(sample, o.m, o.b, cfg) : train_pq(sample, o.m, o.b, cfg);
      if (any_fast) pq = optimize_centroid_assignment(pq, cfg);
    }
    const auto codes = pq.encode_all(base);
    const std::size_t n = codes.size();
    for (const auto& k : o.kernels) {
      KernelRun run;
      if (k == "adc") {
        run = time_queries(nq, o.threads, [&](std::size_t q, std::size_t& scanned, auto&) {
          scanned = n;
          return scan(codes, compute_tables(pq, queries.row(q)), o.r).ids();
        });
      } else if (k == "fast-scan") {
        const auto grouped = group_codes(codes);
        run = time_queries(nq, o.threads, [&](std::size_t q, std::size_t& scanned, auto& pruning) {
          FastScanStats st;
          auto ids = fast_scan(grouped, compute_tables(pq, queries.row(q)), o.init / 100.0, o.r, &st).ids();
          scanned = n;
          pruning = {st.checked, st.pruned};
          return ids;
        });
      } else if (k == "quick-adc") {
        const auto tl = transpose_blocks(codes);
        run = time_queries(nq, o.threads, [&](std::size_t q, std::size_t& scanned, auto&) {
          scanned = n;
          return qadc_scan(tl, compute_tables(pq, queries.row(q)), o.init_count, o.r).neighbors.ids();
        });
      } else {
        run = time_queries(nq, o.threads, [&](std::size_t q, std::size_t& scanned, auto&) {
          scanned = n;
          return search_two_pass(*dpq, codes, queries.row(q), o.r, o.r2).ids();
        });
      }
      add_row(k, run);
    }
  }

  report.write_csv(std::cout);
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    if (!f) throw std::runtime_error("cannot create " + o.csv);
    report.write_recall_csv(f);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pqscan: product-quantization nearest-neighbor search toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "write a synthetic clustered dataset (fvecs)");
  gen->add_option("--n", o.n, "rows")->required();
  gen->add_option("--d", o.d, "dimensionality");
  gen->add_option("--clusters", o.clusters, "Gaussian blobs");
  gen->add_option("--seed", o.seed);
  gen->add_option("--out", o.out)->required();
  gen->add_option("--nq", o.nq, "extra rows written as queries");
  gen->add_option("--queries-out", o.queries_out);

  auto* train = app.add_subcommand("train", "train a product quantizer (PQZ1)");
  train->add_option("--base", o.base, "training vectors")->required()->check(CLI::ExistingFile);
  train->add_option("--m", o.m);
  train->add_option("--b", o.b);
  train->add_option("--bderived", o.bderived, "also train derived quantizers of this width");
  train->add_flag("--opq", o.opq, "learn a rotation");
  train->add_flag("--optimize-assignment", o.optimize_assignment, "relabel centroids for fast-scan (8x8)");
  train->add_option("--train-size", o.train_size, "rows used for training (0 = all)");
  train->add_option("--kmeans-iters", o.kmeans_iters);
  train->add_option("--opq-iters", o.opq_iters);
  train->add_option("--seed", o.seed);
  train->add_option("--out", o.out)->required();

  auto* enc = app.add_subcommand("encode", "encode vectors (PQL1, or PQG1 when --out ends in .pqg)");
  enc->add_option("--pq", o.pq_path)->required()->check(CLI::ExistingFile);
  enc->add_option("--base", o.base)->required()->check(CLI::ExistingFile);
  enc->add_option("--out", o.out)->required();

  auto* bivf = app.add_subcommand("build-ivf", "build an inverted index (IVF1)");
  bivf->add_option("--base", o.base)->required()->check(CLI::ExistingFile);
  bivf->add_option("--K", o.K)->required();
  bivf->add_option("--m", o.m);
  bivf->add_option("--b", o.b);
  bivf->add_option("--bderived", o.bderived);
  bivf->add_flag("--opq", o.opq);
  bivf->add_option("--kmeans-iters", o.kmeans_iters);
  bivf->add_option("--opq-iters", o.opq_iters);
  bivf->add_option("--seed", o.seed);
  bivf->add_option("--out", o.out)->required();

  auto* query = app.add_subcommand("query", "print the r nearest neighbors of each query");
  query->add_option("--queries", o.queries)->required()->check(CLI::ExistingFile);
  query->add_option("--index", o.index_path, "IVF1 index")->check(CLI::ExistingFile);
  query->add_option("--pq", o.pq_path, "PQZ1 quantizer")->check(CLI::ExistingFile);
  query->add_option("--codes", o.codes_path, "PQL1 or PQG1 codes")->check(CLI::ExistingFile);
  query->add_option("--kernel", o.kernels, "adc, fast-scan, quick-adc or derived")->delimiter(',');
  query->add_option("--r", o.r);
  query->add_option("--r2", o.r2);
  query->add_option("--ma", o.ma);
  query->add_option("--init", o.init, "fast-scan: percent of codes used to bound distances")->check(CLI::Range(0.0, 100.0));
  query->add_option("--init-count", o.init_count, "quick-adc: codes used to bound distances");
  query->add_option("--nq", o.nq, "only the first nq queries");
  query->add_option("--seed", o.seed);

  auto* gt = app.add_subcommand("ground-truth", "exact nearest neighbors (ivecs)");
  gt->add_option("--base", o.base)->required()->check(CLI::ExistingFile);
  gt->add_option("--queries", o.queries)->required()->check(CLI::ExistingFile);
  gt->add_option("--k", o.k);
  gt->add_option("--threads", o.threads);
  gt->add_option("--out", o.out)->required();

  auto* bench = app.add_subcommand("bench", "train, encode, query and report recall and timings as CSV");
  bench->add_option("--base", o.base)->required()->check(CLI::ExistingFile);
  bench->add_option("--queries", o.queries)->required()->check(CLI::ExistingFile);
  bench->add_option("--truth", o.truth, "ground-truth ivecs")->check(CLI::ExistingFile);
  bench->add_option("--m", o.m);
  bench->add_option("--b", o.b);
  bench->add_option("--bderived", o.bderived);
  bench->add_option("--K", o.K, "coarse centroids; 0 scans exhaustively");
  bench->add_option("--ma", o.ma);
  bench->add_option("--r", o.r);
  bench->add_option("--r2", o.r2);
  bench->add_option("--init", o.init, "fast-scan: percent of codes used to bound distances")->check(CLI::Range(0.0, 100.0));
  bench->add_option("--init-count", o.init_count, "quick-adc: codes used to bound distances");
  bench->add_option("--kernel", o.kernels, "comma-separated: adc, fast-scan, quick-adc, derived")->delimiter(',');
  bench->add_flag("--opq", o.opq);
  bench->add_option("--train-size", o.train_size);
  bench->add_option("--kmeans-iters", o.kmeans_iters);
  bench->add_option("--nq", o.nq);
  bench->add_option("--seed", o.seed);
  bench->add_option("--threads", o.threads);
  bench->add_option("--csv", o.csv, "also write the recall table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*train) return cmd_train(o);
    if (*enc) return cmd_encode(o);
    if (*bivf) return cmd_build_ivf(o);
    if (*query) return cmd_query(o);
    if (*gt) return cmd_ground_truth(o);
    if (*bench) return cmd_bench(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error at byte " << e.offset() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
