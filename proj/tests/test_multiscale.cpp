#include <gtest/gtest.h>

#include "mpv/multiscale.hpp"
#include "mpv/synth.hpp"
#include "test_util.hpp"

using namespace mpv;

TEST(Pyramid, LayerSizes) {
  const GrayImage img(640, 480, 3);
  const Pyramid p = build_pyramid(StereoPair(img, img));
  EXPECT_EQ(p[0].width(), 160);
  EXPECT_EQ(p[0].height(), 120);
  EXPECT_EQ(p[1].width(), 320);
  EXPECT_EQ(p[1].height(), 240);
  EXPECT_EQ(p[2].width(), 640);
  for (auto v : p[0].left.pixels()) EXPECT_EQ(v, 3);
}

TEST(Pyramid, SmallestInput) {
  const GrayImage img = mpv::testing::random_image(8, 8, 1);
  const Pyramid p = build_pyramid(StereoPair(img, img));
  EXPECT_EQ(p[0].width(), 2);
  EXPECT_EQ(p[1].width(), 4);
  EXPECT_EQ(p[2].left, img);
  EXPECT_THROW(build_pyramid(StereoPair(GrayImage(7, 9), GrayImage(7, 9))), InvalidArgument);
}

TEST(BlockInit, UniformDisparityDoubles) {
  const DisparityMap coarse(8, 8, 10, 5);
  const BlockInit b = block_mode_init(coarse, 8, 4);
  EXPECT_EQ(b.blocks_x, 2);
  for (int v : b.init) EXPECT_EQ(v, 10);
  for (const Scope& s : b.scope) EXPECT_EQ(s, (Scope{8, 11}));
}

TEST(BlockInit, ModeAndTies) {
  const std::vector<int> a{3, 3, 7};
  const std::vector<int> b{3, 3, 7, 7};
  EXPECT_EQ(2 * mode_of(a), 6);
  EXPECT_EQ(2 * mode_of(b), 6);
  DisparityMap coarse(2, 2, 10);
  coarse.u = {7, 3, 7, 3};
  EXPECT_EQ(block_mode_init(coarse, 4, 2).init.front(), 6);
  coarse.u = {3, 3, 7, 9};
  coarse.valid = {1, 1, 1, 0};
  EXPECT_EQ(block_mode_init(coarse, 4, 2).init.front(), 6);
}

TEST(BlockInit, ScopesStayInRange) {
  EXPECT_EQ(place_scope(0, 4, 16), (Scope{0, 3}));
  EXPECT_EQ(place_scope(16, 4, 16), (Scope{13, 16}));
  EXPECT_EQ(place_scope(5, 40, 8), (Scope{0, 8}));
  EXPECT_EQ(place_scope(7, 1, 8), (Scope{7, 7}));
}

TEST(VirtualNodes, HullOfScopes) {
  const std::vector<Scope> two{{0, 4}, {2, 6}};
  EXPECT_EQ(virtual_node_pad(two), (Scope{0, 6}));
  const std::vector<Scope> same{{3, 5}, {3, 5}, {3, 5}};
  EXPECT_EQ(virtual_node_pad(same), (Scope{3, 5}));
  const std::vector<Scope> one{{1, 2}};
  EXPECT_EQ(virtual_node_pad(one), (Scope{1, 2}));
}

TEST(VirtualNodes, NeverWinWhileRealNodesExist) {
  // Scopes alternate between [0,1] and [4,5] along a row; the winner must
  // always lie inside the pixel's own scope.
  const int w = 12;
  EnergyVolume costs(w, 3, 2);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < w; ++x) costs.lo[y * w + x] = (x % 2) * 4;
  std::mt19937 rng(2);
  for (auto& v : costs.values) v = static_cast<float>(rng() % 100);
  const GradientMap grad{w, 3, std::vector<double>(w * 3, 0.0)};
  const auto map = winner_disparity(mpv_optimize(costs, grad, PenaltyParams{}, 255.0f), 8);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < w; ++x) {
      const int lo = (x % 2) * 4;
      EXPECT_GE(map.at(x, y), lo);
      EXPECT_LE(map.at(x, y), lo + 1);
    }
}

TEST(Fill, RowInterpolation) {
  DisparityMap m(6, 2, 20);
  m.u = {4, 0, 0, 10, 0, 0, 0, 3, 0, 0, 0, 0};
  m.valid = {1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0};
  fill_invalid_rows(m);
  EXPECT_EQ(m.u, (std::vector<int>{4, 6, 8, 10, 10, 10, 3, 3, 3, 3, 3, 3}));
  EXPECT_EQ(m.valid_count(), 12u);
}

TEST(Upsample, EvenSamplesAndInterpolation) {
  DisparityMap half(2, 2, 10);
  half.u = {2, 4, 6, 8};
  const auto up = upsample_disparity(half, 4, 4);
  EXPECT_EQ(up, (std::vector<int>{4, 6, 8, 8, 8, 10, 12, 12, 12, 14, 16, 16, 12, 14, 16, 16}));
}

TEST(Multiscale, IdenticalImagesAndBound) {
  const GrayImage img = mpv::testing::random_image(64, 64, 5);
  const MultiscaleResult r = run_multiscale_mpv(StereoPair(img, img), 16, MultiscaleParams{});
  for (int v : r.disparity.u) EXPECT_EQ(v, 0);
  EXPECT_LE(r.counter.total(), 22938u);
  EXPECT_EQ(r.counter.nodes[0], 16u * 16 * 5);
  EXPECT_EQ(r.counter.nodes[1], 32u * 32 * 4);
  EXPECT_EQ(r.counter.nodes[2], 64u * 64 * 4);
  EXPECT_EQ(r.counter.total_virtual(), 0u);
}

TEST(Multiscale, FrontoParallelPlane) {
  const SyntheticPair s = planar_pair(128, 96, 0.0, 0.0, 12.0, 32, 11);
  const MultiscaleResult r = run_multiscale_mpv(s.pair, 32, MultiscaleParams{});
  int good = 0, total = 0;
  for (int y = 8; y < 88; ++y)
    for (int x = 40; x < 120; ++x, ++total) good += r.disparity.at(x, y) == 12;
  EXPECT_GE(good, total * 98 / 100);
  EXPECT_LE(r.counter.ratio(128, 96, 32), 0.35);
  EXPECT_EQ(r.disparity.valid_count(), r.disparity.u.size());
}

TEST(Multiscale, AgreesWithSingleScaleWhenScopesHoldTruth) {
  const SyntheticPair s = planar_pair(128, 96, 0.04, 0.02, 3.0, 16, 21);
  const MultiscaleResult r = run_multiscale_mpv(s.pair, 16, MultiscaleParams{});
  const DisparityMap single = run_mpv(s.pair, 16, MpvParams{});
  int same = 0;
  for (std::size_t i = 0; i < single.u.size(); ++i) same += single.u[i] == r.disparity.u[i];
  EXPECT_GE(same, static_cast<int>(single.u.size() * 95 / 100));
}

TEST(Multiscale, DeterministicAcrossThreads) {
  const SyntheticPair s = planar_pair(64, 64, 0.05, 0.0, 1.0, 16, 3);
  MultiscaleParams a;
  MultiscaleParams b;
  b.mpv.threads = 4;
  const auto ra = run_multiscale_mpv(s.pair, 16, a);
  const auto rb = run_multiscale_mpv(s.pair, 16, b);
  EXPECT_EQ(ra.disparity, rb.disparity);
  EXPECT_EQ(ra.counter.nodes, rb.counter.nodes);
}
