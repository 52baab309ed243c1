#pragma once

// Periodic orthonormal db4 (8-tap Daubechies) analysis/synthesis and
// universal soft-threshold shrinkage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bp6/error.hpp"

namespace bp6::wavelet {

// universal_soft: one threshold sigma*sqrt(2 ln N) for every detail band,
//   sigma = MAD of the finest band / 0.6745, N = padded signal length.
// level_universal_soft: each band j uses its own sigma_j and N_j.
enum class ThresholdRule { universal_soft, level_universal_soft };
enum class Boundary { periodic };

struct WaveletConfig {
  int levels = 4;
  ThresholdRule threshold_rule = ThresholdRule::universal_soft;
  Boundary boundary = Boundary::periodic;
};

/// details[0] is the finest level (level 1), details[levels-1] the coarsest.
struct Pyramid {
  std::vector<double> approx;
  std::vector<std::vector<double>> details;
  std::size_t signal_length = 0;  // before mirror padding
  std::size_t padded_length = 0;

  std::size_t coefficient_count() const {
    std::size_t n = approx.size();
    for (const auto& d : details) n += d.size();
    return n;
  }
};

// Scaling filter, normalized so that sum(h^2) == 1 and sum(h) == sqrt(2).
inline constexpr std::array<double, 8> kDb4Lowpass = {
    0.2303778133088965008632911830440708500016152482483092977910968,
    0.7148465705529156470899219552739926037076084010993081758450110,
    0.6308807679298589078817163383006152202032229226771951174057473,
    -0.02798376941685985421141374718007538285626234396508098920826,
    -0.1870348117190930840795706727890814195845441743745800912057770,
    0.03084138183556076362721936253495905017031482172003403341821219,
    0.03288301166688519973540751354924438866454194113754971259727278,
    -0.01059740178506903210488320852402722918109996490637641983484974,
};

inline constexpr std::array<double, 8> db4_highpass() {
  std::array<double, 8> g{};
  for (std::size_t k = 0; k < 8; ++k) {
    g[k] = ((k % 2 == 0) ? 1.0 : -1.0) * kDb4Lowpass[7 - k];
  }
  return g;
}

inline constexpr std::array<double, 8> kDb4Highpass = db4_highpass();

/// Smallest multiple of 2^levels that is >= n.
inline std::size_t padded_length(std::size_t n, int levels) {
  const std::size_t block = std::size_t{1} << levels;
  return (n + block - 1) / block * block;
}

/// Extends `x` at the end by symmetric reflection (edge sample not repeated).
inline std::vector<double> mirror_pad(std::span<const double> x, std::size_t target) {
  std::vector<double> out(x.begin(), x.end());
  if (x.empty()) {
    out.assign(target, 0.0);
    return out;
  }
  const std::size_t n = x.size();
  const std::size_t period = n > 1 ? 2 * (n - 1) : 1;
  for (std::size_t i = n; i < target; ++i) {
    std::size_t j = i % period;
    if (j >= n) j = period - j;
    out.push_back(x[j]);
  }
  return out;
}

namespace detail {

inline void analysis_step(std::span<const double> x, std::vector<double>& approx,
                          std::vector<double>& detail) {
  const std::size_t n = x.size();
  const std::size_t half = n / 2;
  approx.assign(half, 0.0);
  detail.assign(half, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    double a = 0.0, d = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      const double v = x[(2 * i + k) % n];
      a += kDb4Lowpass[k] * v;
      d += kDb4Highpass[k] * v;
    }
    approx[i] = a;
    detail[i] = d;
  }
}

inline std::vector<double> synthesis_step(std::span<const double> approx,
                                          std::span<const double> detail) {
  const std::size_t half = approx.size();
  const std::size_t n = 2 * half;
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t k = 0; k < 8; ++k) {
      x[(2 * i + k) % n] += kDb4Lowpass[k] * approx[i] + kDb4Highpass[k] * detail[i];
    }
  }
  return x;
}

}  // namespace detail

/// Multi-level periodic db4 analysis. Inputs whose length is not a multiple
/// of 2^levels are mirror-padded first; idwt_db4 truncates back.
inline Pyramid dwt_db4(std::span<const double> x, const WaveletConfig& cfg = {}) {
  if (cfg.levels < 1 || cfg.levels > 30) {
    throw InvalidArgument("wavelet levels must be >= 1, got " + std::to_string(cfg.levels));
  }
  if (x.empty() || (x.size() >> cfg.levels) == 0) {
    throw InvalidArgument("signal of length " + std::to_string(x.size()) + " is too short for " +
                          std::to_string(cfg.levels) + " db4 levels");
  }
  Pyramid p;
  p.signal_length = x.size();
  p.padded_length = padded_length(x.size(), cfg.levels);
  std::vector<double> current = mirror_pad(x, p.padded_length);
  p.details.resize(static_cast<std::size_t>(cfg.levels));
  for (int level = 0; level < cfg.levels; ++level) {
    std::vector<double> approx;
    detail::analysis_step(current, approx, p.details[static_cast<std::size_t>(level)]);
    current = std::move(approx);
  }
  p.approx = std::move(current);
  return p;
}

inline std::vector<double> idwt_db4(const Pyramid& p) {
  std::vector<double> current = p.approx;
  for (std::size_t level = p.details.size(); level-- > 0;) {
    if (p.details[level].size() != current.size()) {
      throw InvalidArgument("pyramid level " + std::to_string(level + 1) +
                            " has mismatched coefficient count");
    }
    current = detail::synthesis_step(current, p.details[level]);
  }
  current.resize(p.signal_length);
  return current;
}

inline double soft_threshold(double v, double lambda) {
  const double mag = std::abs(v) - lambda;
  if (mag <= 0.0) return 0.0;
  return std::copysign(mag, v);
}

inline double median_abs(std::span<const double> v) {
  std::vector<double> a;
  a.reserve(v.size());
  for (double x : v) a.push_back(std::abs(x));
  std::sort(a.begin(), a.end());
  const std::size_t m = a.size() / 2;
  return a.size() % 2 == 1 ? a[m] : 0.5 * (a[m - 1] + a[m]);
}

/// MAD noise estimate over 0.6745 times sqrt(2 ln N) for one detail band.
inline double universal_threshold(std::span<const double> detail) {
  if (detail.size() < 2) return 0.0;
  const double sigma = median_abs(detail) / 0.6745;
  return sigma * std::sqrt(2.0 * std::log(static_cast<double>(detail.size())));
}

/// Soft-thresholds the detail bands; the approximation band is left untouched.
inline Pyramid shrink_coefficients(const Pyramid& p,
                                   ThresholdRule rule = ThresholdRule::universal_soft) {
  Pyramid out = p;
  if (out.details.empty()) return out;
  if (rule == ThresholdRule::level_universal_soft) {
    for (auto& band : out.details) {
      const double lambda = universal_threshold(band);
      for (double& v : band) v = soft_threshold(v, lambda);
    }
    return out;
  }
  const double sigma = median_abs(out.details.front()) / 0.6745;
  const auto n = static_cast<double>(std::max<std::size_t>(out.padded_length, 2));
  const double lambda = sigma * std::sqrt(2.0 * std::log(n));
  for (auto& band : out.details)
    for (double& v : band) v = soft_threshold(v, lambda);
  return out;
}

}  // namespace bp6::wavelet
