#include <gtest/gtest.h>

#include <map>

#include "tdk/synthetic.hpp"

using namespace tdk;

TEST(Synthetic, DeterministicGivenStream) {
  EXPECT_EQ(generate_synthetic(50, RngStream(1)), generate_synthetic(50, RngStream(1)));
  EXPECT_NE(generate_synthetic(50, RngStream(1)), generate_synthetic(50, RngStream(2)));
}

TEST(Synthetic, BalancedLabelsAndShape) {
  const auto d = generate_synthetic(200, RngStream(3));
  ASSERT_EQ(d.size(), 200u);
  EXPECT_EQ(d.class_count(), 10u);
  std::map<std::uint32_t, int> counts;
  for (const auto& it : d.items()) {
    ++counts[it.label.index];
    EXPECT_EQ(it.image.shape(), (Shape{16, 16, 3}));
    for (double v : it.image.pixels()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  ASSERT_EQ(counts.size(), 10u);
  for (const auto& [k, n] : counts) EXPECT_EQ(n, 20) << k;
}

TEST(Synthetic, OrderIsShuffled) {
  const auto d = generate_synthetic(30, RngStream(4));
  bool cyclic = true;
  for (std::size_t i = 0; i < d.size(); ++i) cyclic = cyclic && d[i].label.index == i % 10;
  EXPECT_FALSE(cyclic);
}

TEST(Synthetic, ClassInformationLivesInBlue) {
  // Red and green carry no class signal: their per-class means are close.
  const auto d = generate_synthetic(1000, RngStream(5));
  std::map<std::uint32_t, std::pair<double, double>> rg, blue;
  for (const auto& it : d.items()) {
    double r = 0, b = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      for (std::size_t j = 0; j < 16; ++j) {
        r += it.image.at(i, j, 0);
        b += it.image.at(i, j, 2);
      }
    }
    rg[it.label.index].first += r;
    rg[it.label.index].second += 1;
    blue[it.label.index].first += b;
    blue[it.label.index].second += 1;
  }
  double rmin = 1e9, rmax = 0, bmin = 1e9, bmax = 0;
  for (std::uint32_t k = 0; k < 10; ++k) {
    const double rm = rg[k].first / rg[k].second, bm = blue[k].first / blue[k].second;
    rmin = std::min(rmin, rm);
    rmax = std::max(rmax, rm);
    bmin = std::min(bmin, bm);
    bmax = std::max(bmax, bm);
  }
  EXPECT_LT((rmax - rmin) / rmax, 0.1);
  EXPECT_GT(bmax - bmin, rmax - rmin);
}

TEST(Synthetic, RejectsBadConfig) {
  SyntheticConfig cfg;
  cfg.classes = 0;
  EXPECT_THROW(generate_synthetic(10, RngStream(6), cfg), InvalidArgument);
  cfg = {};
  cfg.glyph_low = 0.9;
  cfg.glyph_high = 0.5;
  EXPECT_THROW(generate_synthetic(10, RngStream(6), cfg), InvalidArgument);
}
