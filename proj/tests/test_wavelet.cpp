#include <gtest/gtest.h>

#include <cmath>

#include "bp6/wavelet.hpp"
#include "oracles.hpp"

namespace {

using namespace bp6::wavelet;

double energy(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return s;
}

double pyramid_energy(const Pyramid& p) {
  double s = energy(p.approx);
  for (const auto& d : p.details) s += energy(d);
  return s;
}

TEST(Db4, FilterIsOrthonormal) {
  double norm = 0, sum = 0;
  for (double h : kDb4Lowpass) {
    norm += h * h;
    sum += h;
  }
  EXPECT_NEAR(norm, 1.0, 1e-15);
  EXPECT_NEAR(sum, std::sqrt(2.0), 1e-15);
}

TEST(Db4, PyramidLayoutFor1000Samples) {
  const auto x = bp6::testing::gaussian_noise(1000, 1.0, 1);
  const auto p = dwt_db4(x);
  EXPECT_EQ(p.padded_length, 1008u);
  EXPECT_EQ(p.coefficient_count(), 1008u);
  ASSERT_EQ(p.details.size(), 4u);
  EXPECT_EQ(p.details[0].size(), 504u);
  EXPECT_EQ(p.details[3].size(), 63u);
  EXPECT_EQ(p.approx.size(), 63u);
}

TEST(Db4, RoundTripAndEnergy) {
  for (int seed = 0; seed < 20; ++seed) {
    const auto x = bp6::testing::gaussian_noise(1000, 2.0, 500 + seed);
    const auto p = dwt_db4(x);
    const auto y = idwt_db4(p);
    ASSERT_EQ(y.size(), x.size());
    EXPECT_LT(bp6::testing::relative_l2_error(y, x), 1e-9);
    const auto padded = mirror_pad(x, p.padded_length);
    EXPECT_NEAR(pyramid_energy(p) / energy(padded), 1.0, 1e-9);
  }
}

TEST(Db4, ZerosGiveZeroPyramid) {
  const std::vector<double> x(1000, 0.0);
  const auto p = dwt_db4(x);
  for (double v : p.approx) EXPECT_EQ(v, 0.0);
  for (const auto& d : p.details)
    for (double v : d) EXPECT_EQ(v, 0.0);
  for (double v : idwt_db4(p)) EXPECT_EQ(v, 0.0);
}

TEST(Db4, SingleDetailCoefficientSynthesizesUnitNormVector) {
  const std::vector<double> x(1024, 0.0);
  auto p = dwt_db4(x);
  p.details[0][100] = 1.0;
  const auto basis = idwt_db4(p);
  EXPECT_NEAR(bp6::testing::l2(basis), 1.0, 1e-12);
  // Analysis of the synthesis vector recovers the single coefficient.
  const auto back = dwt_db4(basis);
  EXPECT_NEAR(back.details[0][100], 1.0, 1e-12);
  EXPECT_NEAR(pyramid_energy(back), 1.0, 1e-12);
}

TEST(Db4, TooDeepIsRejected) {
  const std::vector<double> x(15, 1.0);
  EXPECT_THROW(dwt_db4(x, {.levels = 4}), bp6::InvalidArgument);
  EXPECT_NO_THROW(dwt_db4(std::vector<double>(16, 1.0), {.levels = 4}));
  EXPECT_THROW(dwt_db4(x, {.levels = 0}), bp6::InvalidArgument);
}

TEST(MirrorPad, ReflectsWithoutRepeatingEdge) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_EQ(mirror_pad(x, 8), (std::vector<double>{1, 2, 3, 4, 3, 2, 1, 2}));
}

TEST(Shrink, SoftThresholdDefinition) {
  EXPECT_EQ(soft_threshold(0.5, 1.0), 0.0);
  EXPECT_EQ(soft_threshold(-1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-3.0, 1.0), -2.0);
}

TEST(Shrink, HandEvaluatedLevel) {
  Pyramid p;
  p.approx = {10.0, -10.0};
  p.details = {{1, -1, 4, -4, 1, 1, -1, -1}};
  p.signal_length = p.padded_length = 8;
  // sigma = 1/0.6745, lambda = sigma * sqrt(2 ln 8)
  EXPECT_NEAR(universal_threshold(p.details[0]), 3.0234751376391666, 1e-12);
  const std::vector<double> want{0, 0, 0.9765248623608334, -0.9765248623608334, 0, 0, 0, 0};
  for (auto rule : {ThresholdRule::level_universal_soft, ThresholdRule::universal_soft}) {
    const auto s = shrink_coefficients(p, rule);
    EXPECT_EQ(s.approx, p.approx);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(s.details[0][i], want[i], 1e-12);
  }
}

TEST(Shrink, GlobalRuleUsesFinestBandNoiseEstimate) {
  Pyramid p;
  p.approx = {0.0, 0.0};
  p.details = {{1, -1, 4, -4, 1, 1, -1, -1}, {10, -10, 10, 0.5}};
  p.signal_length = p.padded_length = 16;
  // sigma from the finest band only, N = 16.
  const double lambda = (1.0 / 0.6745) * std::sqrt(2.0 * std::log(16.0));
  const auto g = shrink_coefficients(p, ThresholdRule::universal_soft);
  EXPECT_NEAR(g.details[1][0], 10.0 - lambda, 1e-12);
  EXPECT_NEAR(g.details[1][1], -(10.0 - lambda), 1e-12);
  EXPECT_EQ(g.details[1][3], 0.0);
  EXPECT_NEAR(g.details[0][2], 4.0 - lambda, 1e-12);
  // Per-band rule: sigma_2 = median(0.5, 10, 10, 10) / 0.6745 = 10 / 0.6745 kills the band.
  const auto l = shrink_coefficients(p, ThresholdRule::level_universal_soft);
  for (double v : l.details[1]) EXPECT_EQ(v, 0.0);
}

TEST(Shrink, ZeroDetailsUnchangedAndContraction) {
  const auto x = bp6::testing::gaussian_noise(1000, 1.0, 77);
  auto p = dwt_db4(x);
  for (auto rule : {ThresholdRule::level_universal_soft, ThresholdRule::universal_soft}) {
    const auto s = shrink_coefficients(p, rule);
    for (std::size_t j = 0; j < p.details.size(); ++j)
      for (std::size_t i = 0; i < p.details[j].size(); ++i)
        EXPECT_LE(std::abs(s.details[j][i]), std::abs(p.details[j][i]));
    EXPECT_EQ(s.approx, p.approx);
  }

  for (auto& d : p.details) std::fill(d.begin(), d.end(), 0.0);
  const auto z = shrink_coefficients(p);
  for (const auto& d : z.details)
    for (double v : d) EXPECT_EQ(v, 0.0);
}

}  // namespace
