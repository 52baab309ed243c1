#pragma once

// IIR lowpass design, filtering, decimation and per-segment standardization.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bp6/error.hpp"

namespace bp6::dsp {

enum class FilterKind { lowpass };

struct IirCoefficients {
  std::vector<double> b;  // feedforward, ordered by delay
  std::vector<double> a;  // feedback, a[0] == 1
  int order = 0;
  FilterKind kind = FilterKind::lowpass;
  double cutoff_hz = 0.0;
  double fs_hz = 0.0;

  /// H(e^{j 2 pi f / fs}).
  std::complex<double> response(double f_hz) const {
    const std::complex<double> z_inv =
        std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
    std::complex<double> num{0.0}, den{0.0}, zk{1.0};
    for (std::size_t k = 0; k < b.size(); ++k) {
      num += b[k] * zk;
      den += a[k] * zk;
      zk *= z_inv;
    }
    return num / den;
  }

  double magnitude(double f_hz) const { return std::abs(response(f_hz)); }
};

struct Segment {
  std::vector<double> values;
  double fs_hz = 0.0;
  std::string channel_name;

  std::size_t size() const { return values.size(); }
};

namespace detail {

// Coefficients of prod_k (1 - r_k z^-1), ordered by delay.
inline std::vector<std::complex<double>> expand_roots(
    std::span<const std::complex<double>> roots) {
  std::vector<std::complex<double>> poly{1.0};
  for (const auto& r : roots) {
    poly.push_back(0.0);
    for (std::size_t k = poly.size() - 1; k > 0; --k) poly[k] -= r * poly[k - 1];
  }
  return poly;
}

inline void require_finite(std::span<const double> x, const std::string& channel) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw DataError("non-finite sample at index " + std::to_string(i) + " in channel '" +
                      channel + "'");
    }
  }
}

// Direct form II transposed, zero initial state, in place.
inline void lfilter_inplace(const IirCoefficients& c, std::vector<double>& x) {
  const std::size_t n = c.b.size();
  std::vector<double> state(n, 0.0);
  for (double& sample : x) {
    const double in = sample;
    const double out = c.b[0] * in + state[0];
    for (std::size_t k = 1; k < n; ++k) {
      state[k - 1] = c.b[k] * in - c.a[k] * out + (k < n - 1 ? state[k] : 0.0);
    }
    sample = out;
  }
}

}  // namespace detail

/// Digital Butterworth lowpass by bilinear transform with prewarping.
/// The -3 dB point lands exactly on `cutoff_hz`, DC gain is normalized to 1.
inline IirCoefficients design_butterworth_lowpass(int order, double cutoff_hz, double fs_hz) {
  if (order < 1 || order > 8) {
    throw InvalidArgument("butterworth order must be in [1, 8], got " + std::to_string(order));
  }
  if (!(fs_hz > 0.0)) throw InvalidArgument("sampling rate must be positive");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs_hz / 2.0)) {
    throw InvalidArgument("cutoff " + std::to_string(cutoff_hz) +
                          " Hz must lie strictly inside (0, fs/2 = " +
                          std::to_string(fs_hz / 2.0) + ")");
  }
  const double pi = std::numbers::pi;
  const double k2 = 2.0 * fs_hz;
  const double warped = k2 * std::tan(pi * cutoff_hz / fs_hz);

  std::vector<std::complex<double>> poles;
  std::vector<std::complex<double>> zeros(static_cast<std::size_t>(order), -1.0);
  for (int k = 0; k < order; ++k) {
    const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
    const std::complex<double> s = warped * std::polar(1.0, theta);
    poles.push_back((k2 + s) / (k2 - s));
  }

  IirCoefficients c;
  c.order = order;
  c.cutoff_hz = cutoff_hz;
  c.fs_hz = fs_hz;
  for (const auto& v : detail::expand_roots(zeros)) c.b.push_back(v.real());
  for (const auto& v : detail::expand_roots(poles)) c.a.push_back(v.real());

  double sum_b = 0.0, sum_a = 0.0;
  for (double v : c.b) sum_b += v;
  for (double v : c.a) sum_a += v;
  const double gain = sum_a / sum_b;
  for (double& v : c.b) v *= gain;
  return c;
}

/// Applies `c` to `x`. Zero-phase mode runs forward then backward over an
/// odd-reflected extension of 3*order samples at each end.
inline Segment apply_filter(const IirCoefficients& c, const Segment& x, bool zero_phase) {
  detail::require_finite(x.values, x.channel_name);
  Segment out{x.values, x.fs_hz, x.channel_name};
  if (!zero_phase || x.values.empty()) {
    detail::lfilter_inplace(c, out.values);
    return out;
  }

  const std::size_t n = x.size();
  const std::size_t want = 3 * static_cast<std::size_t>(c.order);
  if (n < want || n < 2) {
    throw InvalidArgument("zero-phase filtering of channel '" + x.channel_name + "' needs at least " +
                          std::to_string(want) + " samples, got " + std::to_string(n));
  }
  const std::size_t pad = std::min(want, n - 1);
  const auto& v = x.values;
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * v.front() - v[i]);
  ext.insert(ext.end(), v.begin(), v.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * v.back() - v[n - 1 - i]);

  detail::lfilter_inplace(c, ext);
  std::reverse(ext.begin(), ext.end());
  detail::lfilter_inplace(c, ext);
  std::reverse(ext.begin(), ext.end());

  std::copy(ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n), out.values.begin());
  return out;
}

/// Stride sampling: out[i] = x[i * factor]. The caller is responsible for
/// anti-alias filtering beforehand.
inline Segment decimate(const Segment& x, int factor) {
  if (factor <= 0) throw InvalidArgument("decimation factor must be positive");
  const auto f = static_cast<std::size_t>(factor);
  Segment out;
  out.fs_hz = x.fs_hz / factor;
  out.channel_name = x.channel_name;
  const std::size_t n = x.size() / f;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = x.values[i * f];
  return out;
}

inline constexpr double kFlatSegmentStd = 1e-8;

/// Zero mean, unit population standard deviation. Segments whose population
/// std is below 1e-8 map to all zeros.
inline Segment standardize_segment(const Segment& x) {
  if (x.size() < 2) {
    throw ContractError("standardization of channel '" + x.channel_name + "' needs >= 2 samples");
  }
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x.values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x.values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);

  Segment out{std::vector<double>(x.size(), 0.0), x.fs_hz, x.channel_name};
  if (!(sd >= kFlatSegmentStd)) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = (x.values[i] - mean) / sd;
  return out;
}

}  // namespace bp6::dsp
