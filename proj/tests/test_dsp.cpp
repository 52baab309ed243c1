#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bp6/dsp.hpp"
#include "oracles.hpp"

namespace {

using bp6::dsp::apply_filter;
using bp6::dsp::decimate;
using bp6::dsp::design_butterworth_lowpass;
using bp6::dsp::Segment;
using bp6::dsp::standardize_segment;

double db(double mag) { return 20.0 * std::log10(mag); }

// |H| of an analog Butterworth evaluated at the prewarped frequency.
double butterworth_closed_form(int order, double f, double fc, double fs) {
  const double ratio = std::tan(std::numbers::pi * f / fs) / std::tan(std::numbers::pi * fc / fs);
  return 1.0 / std::sqrt(1.0 + std::pow(ratio, 2 * order));
}

Segment random_segment(std::size_t n, std::uint64_t seed, double fs = 500.0) {
  return {bp6::testing::gaussian_noise(n, 1.0, seed), fs, "test"};
}

TEST(Butterworth, CutoffIsMinus3dB) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  EXPECT_NEAR(db(c.magnitude(50.0)), -3.0103, 0.1);
  ASSERT_EQ(c.b.size(), 5u);
  ASSERT_EQ(c.a.size(), 5u);
  EXPECT_DOUBLE_EQ(c.a[0], 1.0);
}

TEST(Butterworth, UnityDcGainForEveryOrder) {
  for (int order = 1; order <= 8; ++order) {
    for (double fc : {1.0, 7.0, 40.0, 50.0, 120.0}) {
      const auto c = design_butterworth_lowpass(order, fc, 500.0);
      EXPECT_NEAR(c.magnitude(0.0), 1.0, 1e-9) << "order " << order << " fc " << fc;
    }
  }
}

TEST(Butterworth, MatchesPrewarpedAnalogPrototype) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  // Frozen from scipy.signal.butter(4, 50, fs=500) + freqz at 100 Hz.
  EXPECT_NEAR(c.magnitude(100.0), 0.03996804, 1e-7);
  EXPECT_NEAR(c.magnitude(100.0), butterworth_closed_form(4, 100.0, 50.0, 500.0), 1e-9);
  for (double f = 0.0; f < 250.0; f += 3.7) {
    EXPECT_NEAR(c.magnitude(f), butterworth_closed_form(4, f, 50.0, 500.0), 1e-9) << f;
  }
}

TEST(Butterworth, MagnitudeIsMonotone) {
  for (auto [order, fc, fs] : {std::tuple{4, 50.0, 500.0}, std::tuple{2, 7.0, 100.0},
                               std::tuple{4, 40.0, 100.0}, std::tuple{8, 10.0, 100.0}}) {
    const auto c = design_butterworth_lowpass(order, fc, fs);
    double prev = c.magnitude(0.0);
    for (int k = 1; k < 512; ++k) {
      const double m = c.magnitude(fs / 2.0 * k / 512.0);
      EXPECT_LE(m, prev + 1e-12);
      prev = m;
    }
  }
}

TEST(Butterworth, RejectsBadArguments) {
  EXPECT_THROW(design_butterworth_lowpass(4, 250.0, 500.0), bp6::InvalidArgument);
  EXPECT_THROW(design_butterworth_lowpass(4, 300.0, 500.0), bp6::InvalidArgument);
  EXPECT_THROW(design_butterworth_lowpass(4, 0.0, 500.0), bp6::InvalidArgument);
  EXPECT_THROW(design_butterworth_lowpass(0, 10.0, 500.0), bp6::InvalidArgument);
  EXPECT_THROW(design_butterworth_lowpass(9, 10.0, 500.0), bp6::InvalidArgument);
}

TEST(ApplyFilter, ZerosStayZero) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  const Segment x{std::vector<double>(100, 0.0), 500.0, "z"};
  for (bool zp : {false, true}) {
    const auto y = apply_filter(c, x, zp);
    ASSERT_EQ(y.size(), 100u);
    for (double v : y.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(ApplyFilter, ZeroPhasePassbandSine) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  const Segment x{bp6::testing::sine(5000, 10.0, 500.0), 500.0, "sine"};
  const auto y = apply_filter(c, x, true);
  const auto fit = bp6::testing::fit_sine(y.values, 10.0, 500.0, 500, 4500);
  EXPECT_NEAR(fit.amplitude, 1.0, 0.01);
  EXPECT_LT(std::abs(fit.phase), 0.01);
}

TEST(ApplyFilter, CausalModeDelaysPhase) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  const Segment x{bp6::testing::sine(5000, 10.0, 500.0), 500.0, "sine"};
  const auto y = apply_filter(c, x, false);
  const auto fit = bp6::testing::fit_sine(y.values, 10.0, 500.0, 500, 4500);
  EXPECT_NEAR(fit.amplitude, c.magnitude(10.0), 1e-3);
  EXPECT_NEAR(fit.phase, std::arg(c.response(10.0)), 1e-3);
}

TEST(ApplyFilter, IsLinear) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_segment(800, 100 + trial);
    const auto y = random_segment(800, 200 + trial);
    const double alpha = coef(rng), beta = coef(rng);
    Segment mix = x;
    for (std::size_t i = 0; i < mix.size(); ++i) mix.values[i] = alpha * x.values[i] + beta * y.values[i];
    for (bool zp : {false, true}) {
      const auto fm = apply_filter(c, mix, zp);
      const auto fx = apply_filter(c, x, zp);
      const auto fy = apply_filter(c, y, zp);
      for (std::size_t i = 0; i < mix.size(); ++i) {
        EXPECT_NEAR(fm.values[i], alpha * fx.values[i] + beta * fy.values[i], 1e-9);
      }
    }
  }
}

TEST(ApplyFilter, RejectsNonFiniteNamingChannel) {
  const auto c = design_butterworth_lowpass(2, 7.0, 100.0);
  Segment x{std::vector<double>(50, 1.0), 100.0, "pleth_3"};
  x.values[17] = std::nan("");
  try {
    apply_filter(c, x, true);
    FAIL() << "expected DataError";
  } catch (const bp6::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("pleth_3"), std::string::npos);
  }
}

TEST(ApplyFilter, ZeroPhaseNeedsEnoughSamples) {
  const auto c = design_butterworth_lowpass(4, 50.0, 500.0);
  const Segment x{std::vector<double>(11, 1.0), 500.0, "short"};
  EXPECT_THROW(apply_filter(c, x, true), bp6::InvalidArgument);
  const Segment ok{std::vector<double>(12, 1.0), 500.0, "short"};
  EXPECT_NO_THROW(apply_filter(c, ok, true));
}

TEST(Decimate, Examples) {
  Segment x{std::vector<double>(5000, 1.0), 500.0, "ecg"};
  const auto y = decimate(x, 5);
  EXPECT_EQ(y.size(), 1000u);
  EXPECT_DOUBLE_EQ(y.fs_hz, 100.0);

  Segment idx{{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 10.0, "i"};
  EXPECT_EQ(decimate(idx, 5).values, (std::vector<double>{0, 5}));
  EXPECT_EQ(decimate(idx, 1).values, idx.values);
  EXPECT_THROW(decimate(idx, 0), bp6::InvalidArgument);
  EXPECT_THROW(decimate(idx, -2), bp6::InvalidArgument);
}

TEST(Decimate, ComposesExactly) {
  const auto x = random_segment(997, 5);
  for (auto [a, b] : {std::pair{2, 3}, std::pair{5, 1}, std::pair{3, 7}}) {
    EXPECT_EQ(decimate(x, a * b).values, decimate(decimate(x, a), b).values);
  }
}

TEST(Standardize, HandExample) {
  const auto y = standardize_segment({{1, 2, 3}, 100.0, "x"});
  EXPECT_NEAR(y.values[0], -1.224744871, 1e-9);
  EXPECT_NEAR(y.values[1], 0.0, 1e-12);
  EXPECT_NEAR(y.values[2], 1.224744871, 1e-9);
}

TEST(Standardize, FlatSegmentMapsToZeros) {
  const auto y = standardize_segment({{5, 5, 5, 5}, 100.0, "x"});
  EXPECT_EQ(y.values, (std::vector<double>{0, 0, 0, 0}));
  EXPECT_THROW(standardize_segment({{5}, 100.0, "x"}), bp6::ContractError);
}

TEST(Standardize, MomentsAndIdempotence) {
  for (int seed = 0; seed < 10; ++seed) {
    auto x = random_segment(1000, 40 + seed);
    for (double& v : x.values) v = 3.0 + 17.0 * v;
    const auto y = standardize_segment(x);
    double m = 0, s = 0;
    for (double v : y.values) m += v;
    m /= 1000.0;
    for (double v : y.values) s += (v - m) * (v - m);
    s = std::sqrt(s / 1000.0);
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(s, 1.0, 1e-6);
    const auto z = standardize_segment(y);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(z.values[i], y.values[i], 1e-6);
  }
}

}  // namespace
