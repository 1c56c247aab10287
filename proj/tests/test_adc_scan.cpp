#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "pqscan/adc_scan.hpp"
#include "pqscan/dataset_io.hpp"
#include "support.hpp"

using namespace pqscan;
using namespace testing_support;

namespace {

LookupTables tables_from(const std::vector<std::vector<float>>& rows) {
  LookupTables t(rows.size(), rows[0].size());
  for (std::size_t j = 0; j < rows.size(); ++j) std::copy(rows[j].begin(), rows[j].end(), t.table(j).begin());
  return t;
}

}  // namespace

TEST(ComputeTables, CentroidQueryGivesZeroRowMinimum) {
  const auto pq = random_pq(8, 2, 8, 3);
  std::vector<float> y(8);
  std::copy_n(pq.codebook(0).centroid(5).data(), 4, y.begin());
  std::copy_n(pq.codebook(1).centroid(200).data(), 4, y.begin() + 4);
  const auto t = compute_tables(pq, y);
  EXPECT_EQ(t.at(0, 5), 0.0f);
  EXPECT_EQ(t.at(1, 200), 0.0f);
  EXPECT_EQ(*std::min_element(t.table(0).begin(), t.table(0).end()), 0.0f);
}

TEST(ComputeTables, EightByEightIsEightKiB) {
  const auto pq = random_pq(128, 8, 8, 1);
  const auto y = random_matrix(1, 128, 2);
  EXPECT_EQ(compute_tables(pq, y.row(0)).byte_size(), 8192u);
}

TEST(ComputeTables, MatchesRecomputation) {
  const auto pq = random_pq(32, 4, 8, 7);
  const auto ys = random_matrix(5, 32, 8, 0.0f, 100.0f);
  for (std::size_t q = 0; q < ys.rows(); ++q) {
    const auto t = compute_tables(pq, ys.row(q));
    const auto ref = reference_tables(pq, ys.row(q));
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t i = 0; i < 256; ++i) {
        EXPECT_NEAR(t.at(j, i), ref[j][i], 1e-4 * std::max(1.0, ref[j][i]));
        EXPECT_GE(t.at(j, i), 0.0f);
      }
    }
  }
}

TEST(ComputeTables, RotatesTheQuery) {
  const auto x = generate_synthetic(300, 8, 4, 5);
  TrainConfig c;
  c.opq_iters = 4;
  const auto opq = train_opq(x, 2, 4, c);
  const auto ref = reference_tables(opq, x.row(0));
  const auto t = compute_tables(opq, x.row(0));
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(t.at(j, i), ref[j][i], 1e-3 * std::max(1.0, ref[j][i]));
  }
}

TEST(ComputeTables, DimensionMismatch) {
  const auto pq = random_pq(8, 2, 4, 1);
  EXPECT_THROW(compute_tables(pq, std::vector<float>(9)), InvalidArgument);
}

TEST(AdcDistance, HandSum) {
  const auto t = tables_from({{1, 2}, {3, 4}});
  const Code c{1, 0};
  EXPECT_EQ(adc_distance(t, c), 5.0f);
}

TEST(AdcDistance, RepresentableQueryIsZero) {
  const auto pq = random_pq(8, 4, 4, 2);
  const auto y = pq.decode(Code{1, 2, 3, 4});
  EXPECT_EQ(adc_distance(compute_tables(pq, y), pq.encode(y)), 0.0f);
}

TEST(AdcDistance, EqualsDistanceToReconstruction) {
  const auto pq = random_pq(16, 4, 8, 4);
  const auto ys = random_matrix(10, 16, 5, 0.0f, 100.0f);
  const auto codes = random_codes(50, 4, 8, 6);
  for (std::size_t q = 0; q < ys.rows(); ++q) {
    const auto t = compute_tables(pq, ys.row(q));
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const auto rec = pq.decode(codes.code(i));
      double s = 0.0;
      for (std::size_t u = 0; u < 16; ++u) {
        const double diff = static_cast<double>(ys.row(q)[u]) - rec[u];
        s += diff * diff;
      }
      EXPECT_NEAR(adc_distance(t, codes, i), s, 1e-3 * s);
      EXPECT_EQ(adc_distance(t, codes, i), adc_distance(t, codes.code(i)));
    }
  }
}

TEST(AdcDistance, OutOfRange) {
  const auto t = tables_from({{1, 2}, {3, 4}});
  EXPECT_THROW(adc_distance(t, Code{2, 0}), InvalidArgument);
  EXPECT_THROW(adc_distance(t, Code{0}), InvalidArgument);
}

TEST(Scan, EncodedQueryComesFirst) {
  const auto pq = random_pq(8, 2, 8, 9);
  auto list = random_codes(500, 2, 8, 10);
  const Code target{17, 230};
  list.append(target);
  const auto y = pq.decode(target);
  const auto res = scan(list, compute_tables(pq, y), 5).sorted();
  EXPECT_EQ(res[0].id, 500);
  EXPECT_EQ(res[0].distance, 0.0f);
}

TEST(Scan, FullSortEqualsOracle) {
  const auto pq = random_pq(16, 4, 4, 11);
  const auto list = random_codes(3000, 4, 4, 12);  // 4x4 forces many ties
  const auto y = random_matrix(1, 16, 13, 0.0f, 100.0f);
  const auto t = compute_tables(pq, y.row(0));
  const auto got = scan(list, t, list.size()).sorted();
  const auto want = sorted_oracle(list, t, list.size());
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].id, want[i].id);
    EXPECT_EQ(got[i].distance, want[i].distance);
  }
}

TEST(Scan, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(99);
  for (int inst = 0; inst < 30; ++inst) {
    const std::size_t b = (inst % 2) ? 8 : 4;
    const std::size_t m = 1 + rng() % 8;
    const std::size_t n = 1 + rng() % 2000;
    const std::size_t r = 1 + rng() % 120;
    const auto pq = random_pq(m * 2, m, b, inst);
    const auto list = random_codes(n, m, b, inst + 100);
    const auto y = random_matrix(1, m * 2, inst + 200, 0.0f, 100.0f);
    const auto t = compute_tables(pq, y.row(0));
    const auto got = scan(list, t, r).sorted();
    const auto want = sorted_oracle(list, t, r);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].id, want[i].id);
      ASSERT_EQ(got[i].distance, want[i].distance);
    }
  }
}

TEST(Scan, RLargerThanNReturnsAll) {
  const auto pq = random_pq(8, 2, 4, 1);
  const auto list = random_codes(7, 2, 4, 2);
  const auto y = random_matrix(1, 8, 3);
  EXPECT_EQ(scan(list, compute_tables(pq, y.row(0)), 100).size(), 7u);
  EXPECT_THROW(scan(list, compute_tables(pq, y.row(0)), 0), InvalidArgument);
}

TEST(Scan, ShapeMismatch) {
  const auto pq = random_pq(8, 2, 4, 1);
  const auto list = random_codes(7, 4, 4, 2);
  const auto y = random_matrix(1, 8, 3);
  EXPECT_THROW(scan(list, compute_tables(pq, y.row(0)), 1), InvalidArgument);
}

TEST(Scan, ExplicitIdsAreReported) {
  std::vector<float> row(256);
  std::iota(row.begin(), row.end(), 0.0f);
  const auto t = tables_from({row});
  CodeList list(1, 8);
  for (std::uint16_t i = 0; i < 4; ++i) list.append(Code{static_cast<std::uint16_t>(3 - i)}, 1000 + i);
  EXPECT_EQ(scan(list, t, 2).ids(), (std::vector<std::int64_t>{1003, 1002}));
}

TEST(NeighborSet, OrderInsensitive) {
  std::vector<Neighbor> stream;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) stream.push_back({i, static_cast<float>(rng() % 40)});
  NeighborSet a(25);
  for (const auto& n : stream) a.add(n.id, n.distance);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(stream.begin(), stream.end(), rng);
    NeighborSet b(25);
    for (const auto& n : stream) b.add(n.id, n.distance);
    const auto sa = a.sorted();
    const auto sb = b.sorted();
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
      EXPECT_EQ(sa[i].id, sb[i].id);
      EXPECT_EQ(sa[i].distance, sb[i].distance);
    }
  }
}

TEST(NeighborSet, TiesKeepSmallerId) {
  NeighborSet s(2);
  s.add(9, 1.0f);
  s.add(4, 1.0f);
  s.add(7, 1.0f);
  s.add(1, 2.0f);
  EXPECT_EQ(s.ids(), (std::vector<std::int64_t>{4, 7}));
  EXPECT_FALSE(s.admits(8, 1.0f));
  EXPECT_TRUE(s.admits(5, 1.0f));
}

TEST(Transpose, SingleBlockLayoutB8) {
  CodeList list(2, 8);
  for (std::uint16_t i = 0; i < 16; ++i) list.append(Code{i, static_cast<std::uint16_t>(100 + i)});
  const auto t = transpose_blocks(list);
  ASSERT_EQ(t.block_count(), 1u);
  const auto blk = t.block(0);
  for (std::size_t lane = 0; lane < 16; ++lane) {
    EXPECT_EQ(blk[lane], lane);
    EXPECT_EQ(blk[16 + lane], 100 + lane);
  }
}

TEST(Transpose, SingleBlockLayoutB4) {
  CodeList list(4, 4);
  for (std::uint16_t i = 0; i < 16; ++i) {
    list.append(Code{i, static_cast<std::uint16_t>(15 - i), static_cast<std::uint16_t>(i / 2), 7});
  }
  const auto t = transpose_blocks(list);
  ASSERT_EQ(t.block_bytes(), 32u);
  const auto blk = t.block(0);
  for (std::size_t lane = 0; lane < 16; ++lane) {
    EXPECT_EQ(blk[lane], lane | ((15 - lane) << 4));
    EXPECT_EQ(blk[16 + lane], (lane / 2) | (7 << 4));
  }
}

TEST(Transpose, TailBlockValidity) {
  const auto list = random_codes(17, 3, 8, 1);
  const auto t = transpose_blocks(list);
  EXPECT_EQ(t.block_count(), 2u);
  EXPECT_EQ(t.valid(0), 16u);
  EXPECT_EQ(t.valid(1), 1u);
  const auto tail = t.block(1);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t lane = 1; lane < 16; ++lane) EXPECT_EQ(tail[j * 16 + lane], 0);
  }
}

TEST(Transpose, RoundTrip) {
  for (std::size_t b : {4u, 8u}) {
    for (std::size_t m : {1u, 3u, 8u, 16u}) {
      const auto list = random_codes(100 + m, m, b, m * b);
      EXPECT_EQ(detranspose(transpose_blocks(list)), list);
      const auto sliced = list.slice(10, 60);  // explicit ids
      EXPECT_EQ(detranspose(transpose_blocks(sliced)), sliced);
    }
  }
}

TEST(Transpose, RejectsOtherWidths) {
  EXPECT_THROW(transpose_blocks(random_codes(5, 2, 10, 1)), InvalidArgument);
}

TEST(PqlFormat, RoundTrip) {
  for (std::size_t b : {4u, 8u, 10u, 16u}) {
    for (bool ids : {false, true}) {
      auto list = random_codes(123, 5, b, b);
      if (ids) list = list.slice(3, 100);
      std::stringstream s;
      list.save(s);
      const auto back = CodeList::load(s);
      EXPECT_EQ(back, list);
      std::stringstream s2;
      back.save(s2);
      EXPECT_EQ(s.str(), s2.str());
    }
  }
}

TEST(PqlFormat, RejectsCorruption) {
  const auto list = random_codes(10, 3, 4, 1);
  std::stringstream s;
  list.save(s);
  auto bytes = s.str();
  {
    std::stringstream t(bytes.substr(0, bytes.size() - 2));
    EXPECT_THROW(CodeList::load(t), FormatError);
  }
  {
    auto bad = bytes;
    bad[4 + 8 + 4 + 4 + 1 + 1] |= 0xf0;  // padding nibble of the first odd-m code
    std::stringstream t(bad);
    EXPECT_THROW(CodeList::load(t), FormatError);
  }
}
