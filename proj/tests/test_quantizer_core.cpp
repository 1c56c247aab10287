#include <gtest/gtest.h>

#include <sstream>

#include "pqscan/dataset_io.hpp"
#include "pqscan/product_quantizer.hpp"
#include "support.hpp"

using namespace pqscan;
using testing_support::random_matrix;

namespace {

DenseMatrix blobs(std::size_t per_blob, const std::vector<std::vector<float>>& centers, float sigma,
                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, sigma);
  const std::size_t d = centers[0].size();
  DenseMatrix x(per_blob * centers.size(), d);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      auto row = x.row(c * per_blob + i);
      for (std::size_t t = 0; t < d; ++t) row[t] = centers[c][t] + noise(rng);
    }
  }
  return x;
}

TrainConfig cfg(std::uint64_t seed = 0, int iters = 25) {
  TrainConfig c;
  c.seed = seed;
  c.kmeans_iters = iters;
  return c;
}

}  // namespace

// --- kmeans -----------------------------------------------------------------

TEST(KMeans, DistinctPointsBecomeTheirOwnCentroids) {
  const auto x = random_matrix(12, 3, 4);
  const auto res = kmeans(x, 12, cfg());
  std::vector<bool> used(12, false);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto c = res.codebook.centroid(res.assignments[i]);
    EXPECT_EQ(squared_l2(c, x.row(i)), 0.0f);
    used[res.assignments[i]] = true;
  }
  EXPECT_TRUE(std::all_of(used.begin(), used.end(), [](bool b) { return b; }));
}

TEST(KMeans, IdenticalPointsWithTwoClusters) {
  DenseMatrix x(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    x.row(i)[0] = 3.0f;
    x.row(i)[1] = -1.0f;
  }
  const auto res = kmeans(x, 2, cfg());
  ASSERT_EQ(res.codebook.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(res.codebook.centroid(c)[0], 3.0f);
    EXPECT_EQ(res.codebook.centroid(c)[1], -1.0f);
  }
  for (auto a : res.assignments) EXPECT_EQ(a, 0u);  // ties go to the lowest index
}

TEST(KMeans, TwoSeparatedBlobsRecoverTheirMeans) {
  const std::size_t n = 500;
  const float sigma = 1.0f;
  const auto x = blobs(n, {{0, 0, 0}, {50, 50, 50}}, sigma, 3);
  const auto res = kmeans(x, 2, cfg(1));
  for (std::size_t blob = 0; blob < 2; ++blob) {
    std::vector<double> mean(3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < 3; ++t) mean[t] += x.row(blob * n + i)[t] / static_cast<double>(n);
    }
    const auto c = res.codebook.centroid(res.assignments[blob * n]);
    for (std::size_t t = 0; t < 3; ++t) {
      // Well separated: the recovered centroid is the sample mean of the blob.
      EXPECT_NEAR(c[t], mean[t], 1e-3);
      EXPECT_NEAR(c[t], blob * 50.0, 3.0 * sigma / std::sqrt(static_cast<double>(n)) * 3.0);
    }
  }
}

TEST(KMeans, LloydConditionHoldsAtOutput) {
  const auto x = random_matrix(400, 4, 8);
  const auto res = kmeans(x, 16, cfg(2, 5));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    float best = std::numeric_limits<float>::infinity();
    std::uint32_t arg = 0;
    for (std::uint32_t c = 0; c < 16; ++c) {
      const float d = squared_l2(x.row(i), res.codebook.centroid(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    EXPECT_EQ(res.assignments[i], arg);
  }
}

TEST(KMeans, DeterministicForSeed) {
  const auto x = random_matrix(300, 4, 1);
  EXPECT_EQ(kmeans(x, 8, cfg(5)).codebook, kmeans(x, 8, cfg(5)).codebook);
}

TEST(KMeans, Errors) {
  const auto x = random_matrix(3, 2, 1);
  EXPECT_THROW(kmeans(x, 4, cfg()), InvalidArgument);
  EXPECT_THROW(kmeans(x, 0, cfg()), InvalidArgument);
  EXPECT_THROW(kmeans(x, 2, cfg(0, 0)), InvalidArgument);
}

// --- same-size k-means --------------------------------------------------------

TEST(SameSizeKMeans, SixteenGroupsOfSixteen) {
  const auto x = random_matrix(256, 8, 3);
  const auto res = same_size_kmeans(x, 16);
  ASSERT_EQ(res.groups.size(), 16u);
  std::vector<int> seen(256, 0);
  for (std::size_t g = 0; g < 16; ++g) {
    EXPECT_EQ(res.groups[g].size(), 16u);
    std::vector<double> mean(8, 0.0);
    for (auto i : res.groups[g]) {
      ++seen[i];
      for (std::size_t t = 0; t < 8; ++t) mean[t] += x.row(i)[t] / 16.0;
    }
    for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(res.codebook.centroid(g)[t], mean[t], 1e-5);
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST(SameSizeKMeans, SingletonsWhenKEqualsN) {
  const auto x = random_matrix(20, 3, 4);
  const auto res = same_size_kmeans(x, 20);
  for (std::size_t g = 0; g < 20; ++g) {
    ASSERT_EQ(res.groups[g].size(), 1u);
    EXPECT_EQ(squared_l2(res.codebook.centroid(g), x.row(res.groups[g][0])), 0.0f);
  }
}

TEST(SameSizeKMeans, RecoversTightBlobs) {
  const auto x = blobs(16, {{0, 0}, {100, 0}, {0, 100}, {100, 100}}, 1.0f, 5);
  const auto res = same_size_kmeans(x, 4);
  for (const auto& g : res.groups) {
    ASSERT_EQ(g.size(), 16u);
    const std::size_t label = g[0] / 16;
    for (auto i : g) EXPECT_EQ(i / 16, label);
  }
}

TEST(SameSizeKMeans, RebalancesUnevenBlobs) {
  // 24 points near the origin and 8 far away: plain k-means would split 24/8.
  auto x = blobs(8, {{0, 0}, {0.5f, 0.5f}, {0, 0.5f}, {40, 40}}, 0.2f, 7);
  const auto res = same_size_kmeans(x, 2);
  EXPECT_EQ(res.groups[0].size(), 16u);
  EXPECT_EQ(res.groups[1].size(), 16u);
}

TEST(SameSizeKMeans, RejectsIndivisibleSizes) {
  EXPECT_THROW(same_size_kmeans(random_matrix(10, 2, 1), 3), InvalidArgument);
}

// --- train_pq -----------------------------------------------------------------

TEST(TrainPq, SingleSubQuantizerIsAVectorQuantizer) {
  const auto x = random_matrix(200, 6, 1);
  const auto pq = train_pq(x, 1, 4, cfg());
  EXPECT_EQ(pq.m(), 1u);
  EXPECT_EQ(pq.codebook(0).dim(), 6u);
  EXPECT_EQ(pq.codebook(0), kmeans(x, 16, cfg()).codebook);
}

TEST(TrainPq, ShapesOfCommonConfigurations) {
  const auto x = random_matrix(300, 128, 2);
  const auto pq8 = train_pq(x, 8, 8, cfg(0, 2));
  EXPECT_EQ(pq8.m(), 8u);
  EXPECT_EQ(pq8.ksub(), 256u);
  EXPECT_EQ(pq8.dsub(), 16u);
  EXPECT_EQ(pq8.code_size() * 8, 64u);
  const auto pq4 = train_pq(x, 16, 4, cfg(0, 2));
  EXPECT_EQ(pq4.m(), 16u);
  EXPECT_EQ(pq4.ksub(), 16u);
  EXPECT_EQ(pq4.code_size() * 8, 64u);
  EXPECT_FALSE(pq4.has_rotation());
}

TEST(TrainPq, Errors) {
  const auto x = random_matrix(100, 10, 1);
  EXPECT_THROW(train_pq(x, 3, 4, cfg()), InvalidArgument);   // 10 % 3
  EXPECT_THROW(train_pq(x, 2, 8, cfg()), InvalidArgument);   // 100 < 256
  EXPECT_THROW(train_pq(x, 2, 5, cfg()), InvalidArgument);   // unsupported b
  EXPECT_NO_THROW(train_pq(random_matrix(1100, 4, 1), 2, 10, cfg(0, 1)));
}

// --- OPQ ----------------------------------------------------------------------

TEST(TrainOpq, ZeroIterationsIsPlainPqWithIdentity) {
  const auto x = random_matrix(300, 8, 3);
  TrainConfig c = cfg(1);
  c.opq_iters = 0;
  const auto opq = train_opq(x, 2, 4, c);
  const auto pq = train_pq(x, 2, 4, c);
  ASSERT_TRUE(opq.has_rotation());
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ((*opq.rotation())[i * 8 + t], i == t ? 1.0f : 0.0f);
  }
  EXPECT_EQ(opq.codebooks(), pq.codebooks());
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(opq.encode(x.row(i)), pq.encode(x.row(i)));
}

TEST(TrainOpq, RotationIsOrthonormalAndErrorNonIncreasing) {
  const auto x = generate_synthetic(600, 16, 8, 2);
  TrainConfig c = cfg(3);
  c.opq_iters = 15;
  OpqTrace trace;
  const auto opq = train_opq(x, 4, 4, c, &trace);
  const auto& R = *opq.rotation();
  double worst = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < 16; ++t) s += static_cast<double>(R[t * 16 + i]) * R[t * 16 + j];
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  EXPECT_LE(worst, 1e-4);
  ASSERT_EQ(trace.errors.size(), 15u);
  for (std::size_t it = 1; it < trace.errors.size(); ++it) {
    EXPECT_LE(trace.errors[it], trace.errors[it - 1] * (1 + 1e-6));
  }
  EXPECT_LE(trace.errors.front(), trace.initial_error * (1 + 1e-6));
}

TEST(TrainOpq, IsotropicBlobsGainNothing) {
  const auto x = blobs(100, {{0, 0, 0, 0}, {30, 30, 30, 30}, {60, 0, 60, 0}, {0, 60, 0, 60}}, 3.0f, 4);
  TrainConfig c = cfg(2);
  c.opq_iters = 20;
  const double pq_err = train_pq(x, 2, 4, c).quantization_error(x);
  const double opq_err = train_opq(x, 2, 4, c).quantization_error(x);
  EXPECT_LE(opq_err, pq_err * 1.02);
}

TEST(TrainOpq, CorrelationAcrossSubspacesIsExploited) {
  // Dims 1 and 2 are strongly correlated but fall in different sub-spaces.
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g(0.0f, 1.0f);
  DenseMatrix x(2000, 4);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const float s = 10.0f * g(rng);
    auto r = x.row(i);
    r[0] = g(rng);
    r[1] = s + 0.3f * g(rng);
    r[2] = s + 0.3f * g(rng);
    r[3] = g(rng);
  }
  TrainConfig c = cfg(1);
  c.opq_iters = 30;
  const double pq_err = train_pq(x, 2, 4, c).quantization_error(x);
  const double opq_err = train_opq(x, 2, 4, c).quantization_error(x);
  EXPECT_LT(opq_err, pq_err);
}

// --- encode / decode ------------------------------------------------------------

TEST(Encode, ExactCentroidConcatenation) {
  const auto pq = testing_support::random_pq(8, 2, 4, 1);
  std::vector<float> x(8);
  std::copy_n(pq.codebook(0).centroid(3).data(), 4, x.begin());
  std::copy_n(pq.codebook(1).centroid(7).data(), 4, x.begin() + 4);
  EXPECT_EQ(pq.encode(x), (Code{3, 7}));
  EXPECT_EQ(pq.decode(Code{3, 7}), x);
}

TEST(Encode, EquidistantPicksLowerIndex) {
  DenseMatrix c0(16, 1);
  for (std::size_t i = 0; i < 16; ++i) c0.row(i)[0] = 100.0f + static_cast<float>(i);
  c0.row(2)[0] = 0.0f;
  c0.row(9)[0] = 2.0f;
  ProductQuantizer pq(1, 4, {Codebook(c0)});
  const std::vector<float> x{1.0f};
  EXPECT_EQ(pq.encode(x)[0], 2);
}

TEST(Encode, MatchesBruteForceArgmin) {
  const auto pq = testing_support::random_pq(12, 3, 8, 2);
  const auto xs = random_matrix(50, 12, 3, 0.0f, 100.0f);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    const auto code = pq.encode(xs.row(i));
    for (std::size_t j = 0; j < 3; ++j) {
      const auto sub = xs.row(i).subspan(j * 4, 4);
      double best = 1e300;
      for (std::size_t c = 0; c < 256; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < 4; ++t) {
          const double diff = static_cast<double>(sub[t]) - pq.codebook(j).centroid(c)[t];
          s += diff * diff;
        }
        best = std::min(best, s);
      }
      const auto chosen = pq.codebook(j).centroid(code[j]);
      double s = 0.0;
      for (std::size_t t = 0; t < 4; ++t) {
        const double diff = static_cast<double>(sub[t]) - chosen[t];
        s += diff * diff;
      }
      EXPECT_NEAR(s, best, 1e-6 * std::max(1.0, best));
    }
  }
}

TEST(Encode, DimensionMismatch) {
  const auto pq = testing_support::random_pq(8, 2, 4, 1);
  EXPECT_THROW(pq.encode(std::vector<float>(7)), InvalidArgument);
  EXPECT_THROW(pq.decode(Code{16, 0}), InvalidArgument);
  EXPECT_THROW(pq.decode(Code{1}), InvalidArgument);
}

TEST(Decode, IdentityRotationEqualsNoRotation) {
  const auto pq = testing_support::random_pq(6, 3, 4, 5);
  std::vector<float> eye(36, 0.0f);
  for (std::size_t i = 0; i < 6; ++i) eye[i * 6 + i] = 1.0f;
  const ProductQuantizer rot(6, 4, pq.codebooks(), eye);
  const auto xs = random_matrix(20, 6, 1, 0.0f, 100.0f);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    EXPECT_EQ(rot.encode(xs.row(i)), pq.encode(xs.row(i)));
    const auto c = pq.encode(xs.row(i));
    EXPECT_EQ(rot.decode(c), pq.decode(c));
  }
}

TEST(Decode, PermutationCovariance) {
  const auto pq = testing_support::random_pq(8, 2, 4, 9);
  std::vector<std::uint32_t> order(16);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  const auto permuted = pq.with_permuted_codebook(1, order);
  const auto xs = random_matrix(40, 8, 2, 0.0f, 100.0f);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    EXPECT_EQ(permuted.decode(permuted.encode(xs.row(i))), pq.decode(pq.encode(xs.row(i))));
  }
}

TEST(Decode, RotationIsUndone) {
  const auto x = generate_synthetic(300, 8, 4, 1);
  TrainConfig c = cfg(1);
  c.opq_iters = 5;
  const auto opq = train_opq(x, 2, 4, c);
  // decode(encode(x)) is close to x in the original space.
  double err = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto back = opq.decode(opq.encode(x.row(i)));
    err += squared_l2(back, x.row(i));
  }
  EXPECT_NEAR(err / static_cast<double>(x.rows()), opq.quantization_error(x), 1e-3 * err / x.rows() + 1e-6);
}

// --- persistence ----------------------------------------------------------------

TEST(PqzFormat, RoundTripWithAndWithoutRotation) {
  const auto x = generate_synthetic(300, 8, 4, 1);
  TrainConfig c = cfg(1);
  c.opq_iters = 3;
  for (const auto& pq : {train_pq(x, 2, 4, c), train_opq(x, 4, 4, c)}) {
    std::stringstream s;
    pq.save(s);
    const auto back = ProductQuantizer::load(s);
    EXPECT_EQ(back, pq);
    std::stringstream s2;
    back.save(s2);
    EXPECT_EQ(s.str(), s2.str());
  }
}

TEST(PqzFormat, HeaderLayout) {
  const auto pq = testing_support::random_pq(4, 2, 4, 1);
  std::stringstream s;
  pq.save(s);
  const auto bytes = s.str();
  ASSERT_EQ(bytes.size(), 4u + 12 + 1 + 2 * 16 * 2 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "PQZ1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[8], 4);
  EXPECT_EQ(bytes[12], 4);
  EXPECT_EQ(bytes[16], 0);
}

TEST(PqzFormat, CorruptInputs) {
  const auto pq = testing_support::random_pq(4, 2, 4, 1);
  std::stringstream s;
  pq.save(s);
  const auto good = s.str();
  {
    std::stringstream t(good.substr(0, good.size() - 1));
    EXPECT_THROW(ProductQuantizer::load(t), FormatError);
  }
  {
    auto bad = good;
    bad[0] = 'X';
    std::stringstream t(bad);
    try {
      ProductQuantizer::load(t);
      FAIL();
    } catch (const FormatError& e) {
      EXPECT_EQ(e.offset(), 0u);
    }
  }
  {
    auto bad = good;
    bad[8] = 5;  // b = 5
    std::stringstream t(bad);
    EXPECT_THROW(ProductQuantizer::load(t), FormatError);
  }
}
