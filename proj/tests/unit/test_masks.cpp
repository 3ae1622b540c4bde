// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "spimag/errors.hpp"
#include "spimag/plan/masks.hpp"

namespace {

using namespace spimag;
using namespace spimag::plan;

void expect_well_formed(const DropMask& m) {
  EXPECT_NO_THROW(m.validate());
  EXPECT_TRUE(std::is_sorted(m.kept.begin(), m.kept.end()));
  EXPECT_EQ(std::set<std::size_t>(m.kept.begin(), m.kept.end()).size(), m.kept.size());
}

TEST(KeepCount, Examples) {
  EXPECT_EQ(keep_count(16, 0.0), 16u);
  EXPECT_EQ(keep_count(16, 0.5), 8u);
  EXPECT_EQ(keep_count(16, 0.9), 2u);
  EXPECT_EQ(keep_count(16, 0.75), 4u);
  EXPECT_EQ(keep_count(4, 0.99), 1u);
}

TEST(KeepCount, RatioOutsideRangeIsError) {
  EXPECT_THROW(keep_count(16, 1.0), ConfigError);
  EXPECT_THROW(keep_count(16, -0.1), ConfigError);
  EXPECT_THROW(keep_count(16, std::nan("")), ConfigError);
}

TEST(RandomMask, SizeAndShape) {
  std::mt19937_64 rng(1);
  for (double p : {0.0, 0.3, 0.5, 0.9}) {
    for (int i = 0; i < 50; ++i) {
      const DropMask m = sample_mask_random(rng, 16, p);
      expect_well_formed(m);
      EXPECT_EQ(m.size(), keep_count(16, p));
      EXPECT_EQ(m.p, p);
    }
  }
}

TEST(RandomMask, ZeroRatioKeepsEverything) {
  std::mt19937_64 rng(2);
  EXPECT_EQ(sample_mask_random(rng, 16, 0.0), DropMask::all(16));
}

TEST(RandomMask, EveryPositionKeptAtTheRightRate) {
  std::mt19937_64 rng(3);
  const int draws = 10000;
  std::vector<int> kept(16, 0);
  for (int i = 0; i < draws; ++i)
    for (std::size_t t : sample_mask_random(rng, 16, 0.5).kept) ++kept[t];
  for (int c : kept) EXPECT_NEAR(static_cast<double>(c) / draws, 0.5, 0.02);
}

TEST(RandomMask, DeterministicForSeed) {
  std::mt19937_64 a(4), b(4);
  EXPECT_EQ(sample_mask_random(a, 64, 0.7), sample_mask_random(b, 64, 0.7));
}

TEST(LhsMask, SmallSelectionUsesDistinctRowsAndColumns) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const DropMask m = sample_mask_lhs(rng, 4, 4, 4);
    expect_well_formed(m);
    ASSERT_EQ(m.size(), 4u);
    std::set<std::size_t> rows, cols;
    for (std::size_t t : m.kept) {
      rows.insert(t / 4);
      cols.insert(t % 4);
    }
    EXPECT_EQ(rows.size(), 4u);
    EXPECT_EQ(cols.size(), 4u);
  }
}

TEST(LhsMask, LargerSelectionIsBalanced) {
  std::mt19937_64 rng(6);
  for (auto [hp, wp, k] : {std::tuple{4u, 4u, 8u}, {4u, 4u, 12u}, {2u, 8u, 5u}, {3u, 5u, 7u}, {8u, 8u, 19u}}) {
    for (int i = 0; i < 100; ++i) {
      const DropMask m = sample_mask_lhs(rng, hp, wp, k);
      expect_well_formed(m);
      ASSERT_EQ(m.size(), k);
      std::vector<std::size_t> rows(hp, 0), cols(wp, 0);
      for (std::size_t t : m.kept) {
        ASSERT_LT(t, hp * wp);
        ++rows[t / wp];
        ++cols[t % wp];
      }
      EXPECT_LE(*std::max_element(rows.begin(), rows.end()) - *std::min_element(rows.begin(), rows.end()), 1u);
      EXPECT_LE(*std::max_element(cols.begin(), cols.end()) - *std::min_element(cols.begin(), cols.end()), 1u);
    }
  }
}

TEST(LhsMask, CellsAreEquallyLikely) {
  std::mt19937_64 rng(7);
  const int draws = 8000;
  std::vector<int> hits(16, 0);
  for (int i = 0; i < draws; ++i)
    for (std::size_t t : sample_mask_lhs(rng, 4, 4, 4).kept) ++hits[t];
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / draws, 0.25, 0.03);
}

TEST(LhsMask, EdgeCounts) {
  std::mt19937_64 rng(8);
  EXPECT_EQ(sample_mask_lhs(rng, 4, 4, 1).size(), 1u);
  EXPECT_EQ(sample_mask_lhs(rng, 4, 4, 16).kept, DropMask::all(16).kept);
  EXPECT_THROW(sample_mask_lhs(rng, 4, 4, 0), ConfigError);
  EXPECT_THROW(sample_mask_lhs(rng, 4, 4, 17), ConfigError);
}

TEST(LhsMask, RatioFormUsesKeepCount) {
  std::mt19937_64 rng(9);
  const DropMask m = sample_mask_lhs_ratio(rng, 4, 4, 0.5);
  EXPECT_EQ(m.size(), 8u);
  EXPECT_EQ(m.p, 0.5);
}

TEST(TopK, TiesGoToLowerIndex) {
  const std::vector<double> s{1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(top_k(s, 1).kept, (std::vector<std::size_t>{1}));
  EXPECT_EQ(top_k(s, 2).kept, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k(s, 3).kept, (std::vector<std::size_t>{1, 2, 3}));
  const std::vector<double> flat(5, 0.0);
  EXPECT_EQ(top_k(flat, 2).kept, (std::vector<std::size_t>{0, 1}));
}

TEST(TopK, MatchesSortOracle) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(16);
    for (double& v : s) v = u(rng);
    const std::size_t k = 1 + rng() % 16;
    const DropMask m = top_k(s, k);
    expect_well_formed(m);
    double min_kept = 2.0, max_dropped = -1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (std::binary_search(m.kept.begin(), m.kept.end(), i))
        min_kept = std::min(min_kept, s[i]);
      else
        max_dropped = std::max(max_dropped, s[i]);
    }
    EXPECT_GE(min_kept, max_dropped);
  }
}

TEST(TopK, InvalidCountIsError) {
  const std::vector<double> s{1.0, 2.0};
  EXPECT_THROW(top_k(s, 0), ConfigError);
  EXPECT_THROW(top_k(s, 3), ConfigError);
}

TEST(DropMaskValidate, RejectsMalformed) {
  EXPECT_THROW((DropMask{{2, 1}, 0.5, 4}).validate(), ShapeError);
  EXPECT_THROW((DropMask{{1, 1}, 0.5, 4}).validate(), ShapeError);
  EXPECT_THROW((DropMask{{4}, 0.5, 4}).validate(), ShapeError);
}

}  // namespace
