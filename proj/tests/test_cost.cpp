#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mpv/cost.hpp"
#include "test_util.hpp"

using namespace mpv;

namespace {

// Oracle: moments from an explicit list of window pixels (replicated border).
struct DirectMoments {
  double mean_a, mean_b, var_a, var_b, cov;
};

DirectMoments direct_moments(const GrayImage& a, const GrayImage& b, int x, int y, int u, int r) {
  std::vector<double> pa, pb;
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) {
      pa.push_back(a.clamped(x + i, y + j));
      pb.push_back(b.clamped(x - u + i, y + j));
    }
  }
  const double n = static_cast<double>(pa.size());
  DirectMoments m{};
  for (std::size_t k = 0; k < pa.size(); ++k) {
    m.mean_a += pa[k] / n;
    m.mean_b += pb[k] / n;
  }
  for (std::size_t k = 0; k < pa.size(); ++k) {
    m.var_a += (pa[k] - m.mean_a) * (pa[k] - m.mean_a) / n;
    m.var_b += (pb[k] - m.mean_b) * (pb[k] - m.mean_b) / n;
    m.cov += (pa[k] - m.mean_a) * (pb[k] - m.mean_b) / n;
  }
  return m;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace

TEST(CostParams, DerivedConstants) {
  CostParams p;
  EXPECT_DOUBLE_EQ(p.c1(), (0.01 * 255) * (0.01 * 255));
  EXPECT_DOUBLE_EQ(p.c2(), (0.03 * 255) * (0.03 * 255));
  EXPECT_DOUBLE_EQ(p.c3(), p.c2() / 2);
  p.window = 4;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p.window = 7;
  p.k1 = 0.5;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(PatchStats, ConstantImage) {
  const PatchStats s(GrayImage(9, 8, 93), CostParams{});
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 9; ++x) {
      EXPECT_DOUBLE_EQ(s.mean(x, y), 93.0);
      EXPECT_DOUBLE_EQ(s.variance(x, y), 0.0);
    }
  }
}

TEST(PatchStats, CheckerboardMatchesDirect) {
  GrayImage img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img(x, y) = ((x + y) % 2) ? 255 : 0;
  CostParams p;
  p.window = 3;
  const PatchStats s(img, p);
  for (int y = 1; y < 7; ++y) {
    for (int x = 1; x < 7; ++x) {
      const auto d = direct_moments(img, img, x, y, 0, 1);
      EXPECT_LE(rel_err(s.mean(x, y), d.mean_a), 1e-9);
      EXPECT_LE(rel_err(s.variance(x, y), d.var_a), 1e-9);
    }
  }
}

TEST(PatchStats, ThreeByThreeHandSum) {
  const GrayImage img(3, 3, std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  CostParams p;
  p.window = 3;
  const PatchStats s(img, p);
  EXPECT_EQ(s.window_sum(1, 1), 45);
  EXPECT_EQ(s.window_sumsq(1, 1), 285);
  EXPECT_DOUBLE_EQ(s.mean(1, 1), 5.0);
  EXPECT_DOUBLE_EQ(s.variance(1, 1), 285.0 / 9 - 25.0);
}

TEST(PatchStats, TooSmallImageRejected) {
  EXPECT_THROW(PatchStats(GrayImage(6, 10), CostParams{}), InvalidArgument);
}

TEST(PatchStats, RandomImagesMatchDirectEverywhere) {
  CostParams p;
  for (std::uint32_t seed = 0; seed < 4; ++seed) {
    const GrayImage a = mpv::testing::random_image(32, 32, seed);
    const GrayImage b = mpv::testing::random_image(32, 32, seed + 100);
    const PatchStats sa(a, p), sb(b, p);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const int u = x % 5;
        if (x - u < 0) continue;
        const auto d = direct_moments(a, b, x, y, u, p.radius());
        const auto m = patch_moments(sa, sb, x, y, u);
        EXPECT_LE(rel_err(m.mean_a(), d.mean_a), 1e-9);
        EXPECT_LE(rel_err(m.var_a(), d.var_a), 1e-9);
        EXPECT_LE(rel_err(m.mean_b(), d.mean_b), 1e-9);
        EXPECT_LE(rel_err(m.var_b(), d.var_b), 1e-9);
        EXPECT_LE(rel_err(m.covariance(), d.cov), 1e-9);
      }
    }
  }
}

TEST(SsimComponents, IdenticalPatchesAreOne) {
  const GrayImage img = mpv::testing::random_image(20, 20, 5);
  CostParams p;
  const PatchStats s(img, p);
  for (int x = 0; x < 20; ++x) {
    const auto c = ssim_components(s, s, x, 10, 0, p);
    EXPECT_EQ(c.l, 1.0);
    EXPECT_EQ(c.c, 1.0);
    EXPECT_EQ(c.s, 1.0);
    EXPECT_EQ(ssim_cost(s, s, x, 10, 0, p), 0.0);
  }
}

TEST(SsimComponents, BlackAgainstWhite) {
  CostParams p;
  const PatchStats black(GrayImage(9, 9, 0), p);
  const PatchStats white(GrayImage(9, 9, 255), p);
  const auto c = ssim_components(black, white, 4, 4, 0, p);
  const double c1 = p.c1();
  EXPECT_NEAR(c.l, c1 / (255.0 * 255.0 + c1), 1e-15);
  EXPECT_NEAR(c.l, 1.0e-4, 1e-6);
  EXPECT_EQ(c.c, 1.0);
  EXPECT_EQ(c.s, 1.0);
  const double cost = ssim_cost(black, white, 4, 4, 0, p);
  EXPECT_NEAR(cost, (1.0 - c1 / (255.0 * 255.0 + c1)) * 127.5, 1e-9);
  EXPECT_NEAR(cost, 127.49, 0.01);
}

TEST(SsimComponents, InvertedPatchLowersStructure) {
  // phi = 255 - psi: same mean-centred magnitude, negative covariance
  GrayImage a = mpv::testing::random_image(9, 9, 21, 60, 190);
  GrayImage b(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) b(x, y) = static_cast<std::uint8_t>(255 - a(x, y));
  CostParams p;
  const PatchStats sa(a, p), sb(b, p);
  const auto c = ssim_components(sa, sb, 4, 4, 0, p);
  const auto d = direct_moments(a, b, 4, 4, 0, p.radius());
  EXPECT_LT(d.cov, 0.0);
  EXPECT_LT(c.s, 1.0);
  EXPECT_GE(c.s, -1.0);
  EXPECT_NEAR(c.s, (d.cov + p.c3()) / (std::sqrt(d.var_a * d.var_b) + p.c3()), 1e-9);
}

TEST(SsimComponents, OutOfRangeDisparity) {
  CostParams p;
  const PatchStats s(mpv::testing::random_image(12, 12, 1), p);
  EXPECT_THROW(ssim_components(s, s, 2, 5, 3, p), InvalidArgument);
  EXPECT_EQ(ssim_cost(s, s, 2, 5, 3, p), p.range);
  EXPECT_THROW(ssim_cost(s, s, 20, 5, 0, p), InvalidArgument);
}

TEST(SsimComponents, PermutationInvariance) {
  // Components depend only on moments: permuting window pixels of both
  // patches identically leaves them unchanged.
  CostParams p;
  p.window = 3;
  std::mt19937 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage a = mpv::testing::random_image(3, 3, 1000 + trial);
    const GrayImage b = mpv::testing::random_image(3, 3, 2000 + trial);
    std::vector<int> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    GrayImage pa(3, 3), pb(3, 3);
    for (int k = 0; k < 9; ++k) {
      pa.pixels()[k] = a.pixels()[perm[k]];
      pb.pixels()[k] = b.pixels()[perm[k]];
    }
    const auto c0 = ssim_components(PatchStats(a, p), PatchStats(b, p), 1, 1, 0, p);
    const auto c1 = ssim_components(PatchStats(pa, p), PatchStats(pb, p), 1, 1, 0, p);
    EXPECT_NEAR(c0.l, c1.l, 1e-12);
    EXPECT_NEAR(c0.c, c1.c, 1e-12);
    EXPECT_NEAR(c0.s, c1.s, 1e-12);
  }
}

TEST(SsimCost, BoundedAndZeroOnlyForIdentical) {
  CostParams p;
  const GrayImage a = mpv::testing::random_image(24, 24, 8);
  const GrayImage b = mpv::testing::random_image(24, 24, 9);
  const PatchStats sa(a, p), sb(b, p);
  for (int y = 0; y < 24; y += 3) {
    for (int x = 0; x < 24; ++x) {
      for (int u = 0; u <= 6; ++u) {
        const double c = ssim_cost(sa, sb, x, y, u, p);
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, p.range);
        if (x - u >= 0) EXPECT_GT(c, 1e-6);
      }
    }
  }
}

TEST(SsimCost, NonUnitExponentsStayInRange) {
  CostParams p;
  p.alpha = 0.5;
  p.beta = 2.0;
  p.gamma = 1.5;
  const GrayImage a = mpv::testing::random_image(16, 16, 31);
  GrayImage b(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) b(x, y) = static_cast<std::uint8_t>(255 - a(x, y));
  const PatchStats sa(a, p), sb(b, p);
  for (int x = 0; x < 16; ++x) {
    const double c = ssim_cost(sa, sb, x, 8, 0, p);
    EXPECT_TRUE(std::isfinite(c));
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, p.range);
  }
}

TEST(DenseCostVolume, MatchesPointQueries) {
  CostParams p;
  const GrayImage a = mpv::testing::random_image(21, 13, 40);
  const GrayImage b = mpv::testing::random_image(21, 13, 41);
  const PatchStats sa(a, p), sb(b, p);
  const int d_max = 6;
  for (int threads : {1, 3}) {
    const auto vol = dense_cost_volume(sa, sb, d_max, p, threads);
    for (int y = 0; y < 13; ++y)
      for (int x = 0; x < 21; ++x)
        for (int u = 0; u <= d_max; ++u)
          EXPECT_NEAR(vol[(static_cast<std::size_t>(y) * 21 + x) * (d_max + 1) + u],
                      ssim_cost(sa, sb, x, y, u, p), 1e-4);
  }
}
