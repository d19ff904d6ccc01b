#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "omnistereo/stereo_match.hpp"
#include "test_scenes.hpp"

using namespace omnistereo;
using omnistereo::test_support::roll_rows;
using omnistereo::test_support::shift_left;
using omnistereo::test_support::textured_noise;

namespace {

CostVolume volume(int h, int w, int nd, const std::vector<float>& per_pixel) {
  CostVolume cv{{Projection::Cylindrical, w, h}, nd, {}};
  for (int k = 0; k < h * w; ++k) cv.costs.insert(cv.costs.end(), per_pixel.begin(), per_pixel.end());
  return cv;
}

ProbabilityVolume probs(const std::vector<float>& p) {
  return {{Projection::Cylindrical, 1, 1}, static_cast<int>(p.size()), p};
}

RectifiedPair make_pair(const Panorama& l, const Panorama& r) {
  RectifiedPair pair;
  pair.left = l;
  pair.right = r;
  pair.baseline = 1.0;
  return pair;
}

double interior_mae(const DisparityMap& d, double truth, int col_lo, int col_hi) {
  double s = 0.0;
  int n = 0;
  for (int i = 0; i < d.height(); ++i)
    for (int j = col_lo; j < col_hi; ++j) {
      EXPECT_TRUE(d.is_valid(i, j));
      s += std::abs(d.at(i, j) - truth);
      ++n;
    }
  return s / n;
}

}  // namespace

TEST(Softmax, HandEvaluatedExample) {
  const auto pv = softmax_probabilities(volume(1, 1, 3, {0, 1, 2}), 1.0);
  const double z = 1 + std::exp(-1.0) + std::exp(-2.0);
  EXPECT_NEAR(pv.probs[0], 1 / z, 1e-7);
  EXPECT_NEAR(pv.probs[1], std::exp(-1.0) / z, 1e-7);
  EXPECT_NEAR(pv.probs[2], std::exp(-2.0) / z, 1e-7);
  EXPECT_NEAR(pv.probs[0], 0.66524, 1e-5);
  EXPECT_NEAR(pv.probs[1], 0.24473, 1e-5);
  EXPECT_NEAR(pv.probs[2], 0.09003, 1e-5);
}

TEST(Softmax, EqualCostsAndOneHot) {
  auto pv = softmax_probabilities(volume(1, 1, 4, {3, 3, 3, 3}), 0.7);
  for (float p : pv.probs) EXPECT_FLOAT_EQ(p, 0.25f);
  pv = softmax_probabilities(volume(1, 1, 4, {1e6f, 0, 1e6f, 1e6f}), 0.5);
  EXPECT_FLOAT_EQ(pv.probs[1], 1.0f);
  EXPECT_FLOAT_EQ(pv.probs[0], 0.0f);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  EXPECT_THROW(softmax_probabilities(volume(1, 1, 2, {0, 1}), 0.0), DomainError);
  EXPECT_THROW(softmax_probabilities(volume(1, 1, 2, {0, 1}), -1.0), DomainError);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 60.0f);
  CostVolume cv{{Projection::Cylindrical, 9, 7}, 33, {}};
  cv.costs.resize(7 * 9 * 33);
  for (auto& c : cv.costs) c = u(rng);
  for (double tau : {0.05, 0.5, 5.0}) {
    const auto pv = softmax_probabilities(cv, tau);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 9; ++j) {
        double s = 0.0;
        for (int d = 0; d < 33; ++d) {
          EXPECT_GE(pv.at(i, j, d), 0.0f);
          s += pv.at(i, j, d);
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

TEST(Regression, Examples) {
  EXPECT_FLOAT_EQ(regress_disparity(probs({0, 0, 0, 0, 0, 1, 0})).at(0, 0), 5.0f);
  EXPECT_FLOAT_EQ(regress_disparity(probs({0.25f, 0.25f, 0.25f, 0.25f})).at(0, 0), 1.5f);
  EXPECT_FLOAT_EQ(regress_disparity(probs({0, 0, 0, 0, 0.1f, 0.8f, 0.1f})).at(0, 0), 5.0f);
}

TEST(Confidence, Examples) {
  auto pv = probs({0, 0, 0, 0, 0, 1, 0, 0});
  EXPECT_EQ(confidence_map(pv, regress_disparity(pv)).at(0, 0), 1.0f);
  // Uniform over {0..3}: disparity 1.5 rounds to 2, mass on {1, 2, 3}.
  pv = probs({0.25f, 0.25f, 0.25f, 0.25f});
  EXPECT_EQ(confidence_map(pv, regress_disparity(pv)).at(0, 0), 0.75f);
  pv = probs({0, 0, 0, 0, 0.1f, 0.8f, 0.1f});
  EXPECT_NEAR(confidence_map(pv, regress_disparity(pv)).at(0, 0), 1.0f, 1e-7);
}

TEST(Confidence, EdgeHypothesesAndRange) {
  // One-hot at the last hypothesis: the {r-1, r, r+1} window is clipped.
  const auto pv = probs({0, 0, 1});
  EXPECT_EQ(confidence_map(pv, regress_disparity(pv)).at(0, 0), 1.0f);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.0f, 10.0f);
  CostVolume cv{{Projection::Cylindrical, 5, 5}, 16, {}};
  cv.costs.resize(5 * 5 * 16);
  for (auto& c : cv.costs) c = u(rng);
  const auto p = softmax_probabilities(cv, 1.0);
  const auto d = regress_disparity(p);
  const auto c = confidence_map(p, d);
  for (std::size_t k = 0; k < d.size(); ++k) {
    EXPECT_GE(d.values[k], 0.0f);
    EXPECT_LE(d.values[k], 15.0f);
    EXPECT_GE(c.values[k], 0.0f);
    EXPECT_LE(c.values[k], 1.0f);
  }
}

TEST(Regression, ZeroTemperatureLimitIsArgmin) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 400);
  CostVolume cv{{Projection::Cylindrical, 6, 6}, 24, {}};
  cv.costs.resize(6 * 6 * 24);
  // Costs on a 0.1 grid; the minimum is made unique by lowering one entry.
  for (auto& c : cv.costs) c = 0.1f * static_cast<float>(u(rng)) + 1.0f;
  std::vector<int> argmin(36);
  for (int k = 0; k < 36; ++k) {
    argmin[static_cast<std::size_t>(k)] = std::uniform_int_distribution<int>(0, 23)(rng);
    cv.costs[static_cast<std::size_t>(k * 24 + argmin[static_cast<std::size_t>(k)])] = 0.5f;
  }
  const auto d = regress_disparity(softmax_probabilities(cv, 1e-3));
  for (int k = 0; k < 36; ++k) EXPECT_NEAR(d.values[static_cast<std::size_t>(k)], argmin[static_cast<std::size_t>(k)], 1e-6);
}

TEST(CostVolume, IdenticalImagesMinimalAtZero) {
  const auto img = textured_noise(32, 48, 1);
  for (auto kind : {CostKind::Census, CostKind::SAD}) {
    const auto cv = build_cost_volume(make_pair(img, img), 8, {kind, 5});
    for (int i = 0; i < 32; ++i)
      for (int j = 10; j < 48; ++j)
        for (int d = 1; d < 8; ++d) EXPECT_LE(cv.at(i, j, 0), cv.at(i, j, d));
  }
}

TEST(CostVolume, ShiftedImageMinimalAtShift) {
  const auto left = textured_noise(64, 96, 3);
  const auto right = shift_left(left, 7);  // left(i, j) == right(i, j - 7)
  const auto cv = build_cost_volume(make_pair(left, right), 16, {CostKind::Census, 7});
  // Census codes repeat at local extrema, so ties are allowed but must be rare.
  int unique = 0, total = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 16; j < 85; ++j) {
      ASSERT_EQ(cv.at(i, j, 7), 0.0f);
      int ties = 0;
      for (int d = 0; d < 16; ++d)
        if (d != 7 && cv.at(i, j, d) <= cv.at(i, j, 7)) ++ties;
      unique += ties == 0;
      ++total;
    }
  EXPECT_GT(unique, 0.97 * total);
}

TEST(CostVolume, ConstantImageHasFlatCosts) {
  auto img = Panorama::zeros({Projection::Cylindrical, 20, 10}, 1);
  for (auto& v : img.data) v = 0.4f;
  for (auto kind : {CostKind::Census, CostKind::SAD}) {
    const auto cv = build_cost_volume(make_pair(img, img), 6, {kind, 3});
    for (int i = 0; i < 10; ++i)
      for (int j = 6; j < 20; ++j)
        for (int d = 1; d < 6; ++d) EXPECT_EQ(cv.at(i, j, d), cv.at(i, j, 0));
  }
}

TEST(CostVolume, OffImageHypothesesGetSentinel) {
  const auto img = textured_noise(8, 12, 5);
  const auto cv = build_cost_volume(make_pair(img, img), 4, {CostKind::Census, 3});
  EXPECT_EQ(cv.at(0, 2, 3), CostVolume::kSentinelCost);
  EXPECT_LT(cv.at(0, 3, 3), CostVolume::kSentinelCost);
}

TEST(CostVolume, Errors) {
  const auto img = textured_noise(8, 12, 5);
  EXPECT_THROW(build_cost_volume(make_pair(img, img), 13, {}), DomainError);
  EXPECT_THROW(build_cost_volume(make_pair(img, img), 1, {}), DomainError);
  EXPECT_THROW(build_cost_volume(make_pair(img, img), 4, {CostKind::Census, 4}), DomainError);
  EXPECT_THROW(build_cost_volume(make_pair(img, textured_noise(8, 10, 5)), 4, {}), DomainError);
}

TEST(MatchPair, SevenPixelShift) {
  const auto left = textured_noise(256, 128, 11);
  const auto right = shift_left(left, 7);
  MatchParams p;
  p.max_disparity = 24;
  const auto m = match_pair(make_pair(left, right), p);
  EXPECT_LT(interior_mae(m.disparity, 7.0, 24 + 4, 128 - 10), 0.25);
}

TEST(MatchPair, IdenticalPair) {
  const auto img = textured_noise(64, 64, 12);
  MatchParams p;
  p.max_disparity = 16;
  const auto m = match_pair(make_pair(img, img), p);
  EXPECT_LT(interior_mae(m.disparity, 0.0, 8, 56), 0.05);
}

TEST(MatchPair, TexturedPlaneMatchesCylindricalDisparity) {
  // Frontal plane 1 m ahead, 0.3 m baseline, 512 x 256 cylinder (R ~ 81.5 px):
  // disparity B R / rho runs from about 24 px straight ahead down to 12 px at 60 degrees.
  const PanoramaGeometry g{Projection::Cylindrical, 256, 512};
  const auto plane = test_support::textured_plane_pair(g, 1.0, 0.3);
  MatchParams p;
  p.max_disparity = 48;
  p.cost = {CostKind::Census, 9};
  p.temperature = 0.25;
  const auto m = match_pair(plane.pair, p);
  double s = 0.0;
  int n = 0;
  for (int i = 0; i < g.height; ++i) {
    const double theta = (i - g.height / 2.0) * kTwoPi / g.height;
    if (std::abs(theta) > kPi / 3) continue;
    for (int j = 56; j < 216; ++j) {
      ASSERT_TRUE(plane.truth.is_valid(i, j));
      ASSERT_TRUE(m.disparity.is_valid(i, j));
      s += std::abs(m.disparity.at(i, j) - plane.truth.at(i, j));
      ++n;
    }
  }
  EXPECT_LT(s / n, 0.5);
}

TEST(MatchPair, VerticalCircularShiftEquivariance) {
  const auto left = textured_noise(40, 36, 21);
  const auto right = shift_left(left, 3);
  for (bool attention : {false, true}) {
    for (auto kind : {CostKind::Census, CostKind::SAD}) {
      MatchParams p;
      p.max_disparity = 8;
      p.cost = {kind, 5};
      p.attention = attention;
      p.consistency_tolerance = 1.0;
      const auto base = match_pair(make_pair(left, right), p);
      for (int k : {1, 17, -5}) {
        const auto moved = match_pair(make_pair(roll_rows(left, k), roll_rows(right, k)), p);
        const auto expect_d = roll_rows(base.disparity, k);
        const auto expect_c = roll_rows(base.confidence, k);
        EXPECT_EQ(moved.disparity.values, expect_d.values);
        EXPECT_EQ(moved.disparity.valid, expect_d.valid);
        EXPECT_EQ(moved.confidence.values, expect_c.values);
      }
    }
  }
}

TEST(MatchPair, WorkerCountDoesNotChangeOutput) {
  const auto left = textured_noise(48, 40, 31);
  const auto right = shift_left(left, 4);
  MatchParams p;
  p.max_disparity = 12;
  p.consistency_tolerance = 1.0;
  p.attention = true;
  const auto a = match_pair(make_pair(left, right), p);
  p.workers = 7;
  const auto b = match_pair(make_pair(left, right), p);
  EXPECT_EQ(a.disparity.values, b.disparity.values);
  EXPECT_EQ(a.confidence.values, b.confidence.values);
}

TEST(MatchPair, InvalidLeftPixelsStayInvalid) {
  auto left = textured_noise(16, 24, 41);
  left.ensure_mask();
  left.valid[left.index(3, 12)] = 0;
  MatchParams p;
  p.max_disparity = 4;
  const auto m = match_pair(make_pair(left, left), p);
  EXPECT_FALSE(m.disparity.is_valid(3, 12));
  EXPECT_FALSE(m.confidence.is_valid(3, 12));
  EXPECT_TRUE(m.disparity.is_valid(4, 12));
}

TEST(DefaultMaxDisparity, ReferenceResolutions) {
  EXPECT_EQ(default_max_disparity({Projection::Cylindrical, 512, 1024}), 272);
  EXPECT_EQ(default_max_disparity({Projection::Cylindrical, 256, 512}), 256);
  EXPECT_EQ(default_max_disparity({Projection::Cylindrical, 64, 256}), 64);
}

TEST(Speckles, SmallRegionsRemoved) {
  auto d = DisparityMap::filled({Projection::Cylindrical, 10, 10}, 5.0f);
  d.at(2, 2) = 20.0f;  // 1-pixel island
  for (int i = 6; i < 9; ++i)
    for (int j = 6; j < 9; ++j) d.at(i, j) = 30.0f;  // 9-pixel island
  EXPECT_EQ(filter_speckles(d, 5, 1.0), 1u);
  EXPECT_FALSE(d.is_valid(2, 2));
  EXPECT_TRUE(d.is_valid(7, 7));
  EXPECT_EQ(filter_speckles(d, 10, 1.0), 9u);
  EXPECT_FALSE(d.is_valid(7, 7));
  EXPECT_EQ(d.valid_count(), 90u);
  EXPECT_THROW(filter_speckles(d, -1, 1.0), DomainError);
}
