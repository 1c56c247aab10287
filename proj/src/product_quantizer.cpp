#include "pqscan/product_quantizer.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "pqscan/detail/pqz_codec.hpp"

namespace pqscan {

ProductQuantizer::ProductQuantizer(std::size_t d, std::size_t b, std::vector<Codebook> codebooks,
                                   std::optional<std::vector<float>> rotation)
    : d_(d), b_(b), codebooks_(std::move(codebooks)), rotation_(std::move(rotation)) {
  check_bits(b_);
  const std::size_t m = codebooks_.size();
  if (m == 0 || d_ == 0 || d_ % m != 0) {
    throw InvalidArgument("ProductQuantizer: d=" + std::to_string(d_) +
                          " is not divisible into m=" + std::to_string(m) + " sub-spaces");
  }
  for (const auto& cb : codebooks_) {
    if (cb.size() != ksub() || cb.dim() != d_ / m) {
      throw InvalidArgument("ProductQuantizer: every codebook needs 2^b centroids of d/m dims");
    }
  }
  if (rotation_ && rotation_->size() != d_ * d_) {
    throw InvalidArgument("ProductQuantizer: rotation must be d x d");
  }
}

std::vector<float> ProductQuantizer::rotate(std::span<const float> x) const {
  if (x.size() != d_) throw InvalidArgument("dimensionality mismatch: vector has " +
                                            std::to_string(x.size()) + ", quantizer " +
                                            std::to_string(d_));
  if (!rotation_) return {x.begin(), x.end()};
  std::vector<float> out(d_);
  const float* r = rotation_->data();
  for (std::size_t i = 0; i < d_; ++i) {
    float acc = 0.0f;
    for (std::size_t t = 0; t < d_; ++t) acc += r[i * d_ + t] * x[t];
    out[i] = acc;
  }
  return out;
}

std::vector<float> ProductQuantizer::unrotate(std::span<const float> x) const {
  if (x.size() != d_) throw InvalidArgument("dimensionality mismatch");
  if (!rotation_) return {x.begin(), x.end()};
  std::vector<float> out(d_, 0.0f);
  const float* r = rotation_->data();
  for (std::size_t i = 0; i < d_; ++i) {
    float acc = 0.0f;
    for (std::size_t t = 0; t < d_; ++t) acc += r[t * d_ + i] * x[t];
    out[i] = acc;
  }
  return out;
}

Code ProductQuantizer::encode(std::span<const float> x) const {
  const auto xr = rotate(x);
  const std::size_t ds = dsub();
  Code code(m());
  for (std::size_t j = 0; j < m(); ++j) {
    code[j] = static_cast<std::uint16_t>(
        codebooks_[j].nearest(std::span<const float>(xr).subspan(j * ds, ds)).first);
  }
  return code;
}

std::vector<float> ProductQuantizer::decode_unrotated(std::span<const std::uint16_t> code) const {
  if (code.size() != m()) throw InvalidArgument("decode: code has wrong length");
  const std::size_t ds = dsub();
  std::vector<float> out(d_);
  for (std::size_t j = 0; j < m(); ++j) {
    if (code[j] >= ksub()) throw InvalidArgument("decode: sub-index out of range");
    auto c = codebooks_[j].centroid(code[j]);
    std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(j * ds));
  }
  return out;
}

std::vector<float> ProductQuantizer::decode(std::span<const std::uint16_t> code) const {
  auto rotated = decode_unrotated(code);
  if (!rotation_) return rotated;
  return unrotate(rotated);
}

CodeList ProductQuantizer::encode_all(const DenseMatrix& x) const {
  if (!x.empty() && x.dim() != d_) throw InvalidArgument("encode_all: dimensionality mismatch");
  CodeList out(m(), b_);
  out.reserve(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out.append(encode(x.row(i)));
  return out;
}

double ProductQuantizer::quantization_error(const DenseMatrix& x) const {
  if (x.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto rec = decode(encode(x.row(i)));
    double err = 0.0;
    auto row = x.row(i);
    for (std::size_t t = 0; t < d_; ++t) {
      const double diff = static_cast<double>(row[t]) - rec[t];
      err += diff * diff;
    }
    total += err;
  }
  return total / static_cast<double>(x.rows());
}

ProductQuantizer ProductQuantizer::with_permuted_codebook(
    std::size_t j, std::span<const std::uint32_t> order) const {
  ProductQuantizer out = *this;
  out.codebooks_.at(j) = codebooks_.at(j).permuted(order);
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void check_training(const DenseMatrix& training, std::size_t m, std::size_t b) {
  check_bits(b);
  if (m == 0 || training.dim() == 0 || training.dim() % m != 0) {
    throw InvalidArgument("training dimensionality " + std::to_string(training.dim()) +
                          " is not divisible by m=" + std::to_string(m));
  }
  if (training.rows() < (std::size_t{1} << b)) {
    throw InvalidArgument("insufficient training points: " + std::to_string(training.rows()) +
                          " < 2^" + std::to_string(b));
  }
}

}  // namespace

ProductQuantizer train_pq(const DenseMatrix& training, std::size_t m, std::size_t b,
                          const TrainConfig& cfg) {
  check_training(training, m, b);
  const std::size_t ds = training.dim() / m;
  std::vector<Codebook> codebooks;
  codebooks.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    TrainConfig sub = cfg;
    sub.seed = cfg.seed + j;
    codebooks.push_back(kmeans(training.columns(j * ds, ds), std::size_t{1} << b, sub).codebook);
  }
  return ProductQuantizer(training.dim(), b, std::move(codebooks));
}

namespace {

using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Double-precision OPQ state: codebooks as m blocks of k x dsub.
struct OpqState {
  std::size_t m, k, ds;
  std::vector<RowMatrixD> codebooks;
  std::vector<std::uint32_t> codes;  // n x m

  void assign(const RowMatrixD& xr) {
    const std::size_t n = static_cast<std::size_t>(xr.rows());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double* x = xr.data() + i * xr.cols() + j * ds;
        std::uint32_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double* cen = codebooks[j].data() + c * ds;
          double acc = 0.0;
          for (std::size_t t = 0; t < ds; ++t) {
            const double diff = x[t] - cen[t];
            acc += diff * diff;
          }
          if (acc < best_d) {
            best_d = acc;
            best = static_cast<std::uint32_t>(c);
          }
        }
        codes[i * m + j] = best;
      }
    }
  }

  // Empty clusters keep their previous centroid so the error cannot grow.
  void update(const RowMatrixD& xr) {
    const std::size_t n = static_cast<std::size_t>(xr.rows());
    for (std::size_t j = 0; j < m; ++j) {
      RowMatrixD sums = RowMatrixD::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ds));
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = codes[i * m + j];
        ++counts[c];
        sums.row(c) += xr.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j * ds), 1,
                                static_cast<Eigen::Index>(ds));
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) codebooks[j].row(c) = sums.row(c) / static_cast<double>(counts[c]);
      }
    }
  }

  RowMatrixD reconstruct(std::size_t n) const {
    RowMatrixD y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m * ds));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        y.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j * ds), 1,
                static_cast<Eigen::Index>(ds)) = codebooks[j].row(codes[i * m + j]);
      }
    }
    return y;
  }
};

}  // namespace

ProductQuantizer train_opq(const DenseMatrix& training, std::size_t m, std::size_t b,
                           const TrainConfig& cfg, OpqTrace* trace) {
  check_training(training, m, b);
  if (cfg.opq_iters < 0) throw InvalidArgument("train_opq: opq_iters must be >= 0");
  const std::size_t n = training.rows();
  const std::size_t d = training.dim();
  ProductQuantizer pq = train_pq(training, m, b, cfg);
  if (trace) {
    trace->initial_error = pq.quantization_error(training);
    trace->errors.clear();
  }

  RowMatrixD x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    auto row = training.row(i);
    for (std::size_t t = 0; t < d; ++t) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = row[t];
  }

  OpqState state{m, pq.ksub(), d / m, {}, std::vector<std::uint32_t>(n * m, 0)};
  for (std::size_t j = 0; j < m; ++j) {
    const auto& cb = pq.codebook(j).matrix();
    RowMatrixD c(static_cast<Eigen::Index>(cb.rows()), static_cast<Eigen::Index>(cb.dim()));
    for (std::size_t r = 0; r < cb.rows(); ++r) {
      for (std::size_t t = 0; t < cb.dim(); ++t) c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = cb.row(r)[t];
    }
    state.codebooks.push_back(std::move(c));
  }

  RowMatrixD rotation = RowMatrixD::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (int it = 0; it < cfg.opq_iters; ++it) {
    // (A) rotation fixed: one k-means step in every sub-space.
    const RowMatrixD xr = x * rotation.transpose();
    state.assign(xr);
    state.update(xr);

    // (B) codebooks fixed: orthogonal Procrustes, R = U V^T for Y^T X = U S V^T.
    const RowMatrixD y = state.reconstruct(n);
    const Eigen::MatrixXd cross = y.transpose() * x;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) {
      throw TrainingError("train_opq: SVD did not converge at iteration " + std::to_string(it));
    }
    rotation = svd.matrixU() * svd.matrixV().transpose();
    if (!rotation.allFinite()) throw TrainingError("train_opq: non-finite rotation");

    if (trace) {
      const double err = (x * rotation.transpose() - y).squaredNorm() / static_cast<double>(n);
      trace->errors.push_back(err);
    }
  }

  std::vector<Codebook> codebooks;
  for (std::size_t j = 0; j < m; ++j) {
    const auto& c = state.codebooks[j];
    DenseMatrix cb(static_cast<std::size_t>(c.rows()), static_cast<std::size_t>(c.cols()));
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      for (Eigen::Index t = 0; t < c.cols(); ++t) {
        cb.row(static_cast<std::size_t>(r))[static_cast<std::size_t>(t)] = static_cast<float>(c(r, t));
      }
    }
    codebooks.emplace_back(std::move(cb));
  }
  std::vector<float> rot(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t t = 0; t < d; ++t) {
      rot[i * d + t] = static_cast<float>(rotation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
    }
  }
  return ProductQuantizer(d, b, std::move(codebooks), std::move(rot));
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

void write_pqz(io::BinaryWriter& w, const ProductQuantizer& pq, std::uint8_t extra_flags) {
  w.magic("PQZ1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pq.m()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pq.bits()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pq.dim()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>((pq.has_rotation() ? kPqzRotation : 0) | extra_flags));
  if (pq.has_rotation()) w.put_array(std::span<const float>(*pq.rotation()));
  for (const auto& cb : pq.codebooks()) w.put_array(std::span<const float>(cb.matrix().data()));
}

ProductQuantizer read_pqz(io::BinaryReader& r, std::uint8_t& flags) {
  r.expect_magic("PQZ1");
  const auto m = r.get<std::uint32_t>();
  const auto b = r.get<std::uint32_t>();
  const auto d = r.get<std::uint32_t>();
  if (!supported_bits(b)) r.fail("PQZ1: unsupported b=" + std::to_string(b));
  if (m == 0 || d == 0 || d % m != 0) r.fail("PQZ1: d must be a positive multiple of m");
  flags = r.get<std::uint8_t>();
  if (flags & ~(kPqzRotation | kPqzDerived)) r.fail("PQZ1: unknown flag bits");
  std::optional<std::vector<float>> rotation;
  if (flags & kPqzRotation) {
    rotation.emplace(std::size_t{d} * d);
    r.get_array(std::span<float>(*rotation));
  }
  const std::size_t k = std::size_t{1} << b;
  const std::size_t ds = d / m;
  std::vector<Codebook> codebooks;
  for (std::uint32_t j = 0; j < m; ++j) {
    std::vector<float> data(k * ds);
    r.get_array(std::span<float>(data));
    codebooks.emplace_back(DenseMatrix(k, ds, std::move(data)));
  }
  return ProductQuantizer(d, b, std::move(codebooks), std::move(rotation));
}

std::pair<std::size_t, std::vector<Codebook>> read_derived_trailer(io::BinaryReader& r,
                                                                   std::size_t m,
                                                                   std::size_t dsub) {
  const auto bbar = r.get<std::uint32_t>();
  if (bbar == 0 || bbar > 16) r.fail("PQZ1: bad derived width");
  const std::size_t kbar = std::size_t{1} << bbar;
  std::vector<Codebook> derived;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<float> data(kbar * dsub);
    r.get_array(std::span<float>(data));
    derived.emplace_back(DenseMatrix(kbar, dsub, std::move(data)));
  }
  return {bbar, std::move(derived)};
}

}  // namespace detail

void ProductQuantizer::save(std::ostream& out) const {
  io::BinaryWriter w(out);
  detail::write_pqz(w, *this, 0);
}

ProductQuantizer ProductQuantizer::load(std::istream& in, std::uint64_t base_offset) {
  io::BinaryReader r(in, base_offset);
  std::uint8_t flags = 0;
  auto pq = detail::read_pqz(r, flags);
  if (flags & detail::kPqzDerived) detail::read_derived_trailer(r, pq.m(), pq.dsub());
  return pq;
}

void ProductQuantizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  save(out);
}

ProductQuantizer ProductQuantizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

}  // namespace pqscan
