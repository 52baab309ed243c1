#pragma once

// Synthetic six-modal samples whose labels are recoverable from the signals:
// PPG pulses trail the ECG beats by a delay that shrinks with SBP, and their
// height relative to a fixed-amplitude baseline wave grows with DBP.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "bp6/dataset.hpp"

namespace bp6::data {

struct SynthLatent {
  double delay_s = 0.0;
  double amplitude = 0.0;
  double heart_rate_hz = 0.0;
};

struct SynthSet {
  std::vector<SixModalSample> samples;
  std::vector<SynthLatent> latents;
};

namespace synth {

inline constexpr double kRateHz = 100.0;
inline constexpr double kSbpLo = 90.0, kSbpHi = 140.0;
inline constexpr double kDbpLo = 60.0, kDbpHi = 90.0;

inline double delay_for(double sbp) { return 0.30 - 0.002 * (sbp - kSbpLo); }
inline double amplitude_for(double dbp) { return 0.5 + 0.03 * (dbp - kDbpLo); }

inline std::vector<double> gaussian_train(double first_beat, double period, double shift, double width,
                                          std::size_t length) {
  std::vector<double> out(length, 0.0);
  for (double tb = first_beat - period + shift; tb < static_cast<double>(length) / kRateHz + 4 * width; tb += period) {
    for (std::size_t i = 0; i < length; ++i) {
      const double z = (static_cast<double>(i) / kRateHz - tb) / width;
      if (std::abs(z) < 6.0) out[i] += std::exp(-0.5 * z * z);
    }
  }
  return out;
}

inline void store_block(std::vector<float>& block, std::size_t c, const std::vector<double>& v) {
  const dsp::Segment s = dsp::standardize_segment(dsp::Segment{v, kRateHz, {}});
  for (std::size_t i = 0; i < s.size(); ++i) block[c * s.size() + i] = static_cast<float>(s.values[i]);
}

}  // namespace synth

inline SynthSet synth_generate(std::size_t n, std::uint64_t seed, std::size_t length = kSegmentSamples) {
  if (n < 1) throw ContractError("synth_generate: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto ppg_lpf = dsp::design_butterworth_lowpass(2, 7.0, synth::kRateHz);
  const auto band_lpf = dsp::design_butterworth_lowpass(2, 5.0, synth::kRateHz);

  SynthSet out;
  for (std::size_t i = 0; i < n; ++i) {
    const double sbp = synth::kSbpLo + (synth::kSbpHi - synth::kSbpLo) * unit(rng);
    double dbp = 0.0;
    do {
      dbp = synth::kDbpLo + (synth::kDbpHi - synth::kDbpLo) * unit(rng);
    } while (dbp >= sbp);
    const double hr = 1.0 + unit(rng);
    const double period = 1.0 / hr;
    const double first = period * unit(rng);
    const SynthLatent lat{synth::delay_for(sbp), synth::amplitude_for(dbp), hr};

    SixModalSample s = empty_sample(length);
    s.sbp = static_cast<float>(sbp);
    s.dbp = static_cast<float>(dbp);
    s.provenance = {"synth", "sit", static_cast<std::uint32_t>(i)};

    auto ecg = synth::gaussian_train(first, period, 0.0, 0.02, length);
    for (double& v : ecg) v += 0.05 * noise(rng);
    synth::store_block(s.blocks[0], 0, ecg);

    const auto pulse = synth::gaussian_train(first, period, lat.delay_s, 0.08, length);
    for (std::size_t c = 0; c < kModalities[1].channels; ++c) {
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      std::vector<double> v(length);
      for (std::size_t k = 0; k < length; ++k) {
        const double t = static_cast<double>(k) / synth::kRateHz;
        v[k] = lat.amplitude * pulse[k] + std::sin(2.0 * std::numbers::pi * 0.25 * t + phase) + 0.02 * noise(rng);
      }
      const auto f = dsp::apply_filter(ppg_lpf, dsp::Segment{v, synth::kRateHz, "pleth"}, true);
      synth::store_block(s.blocks[1], c, f.values);
    }

    for (std::size_t m = 2; m < kNumModalities; ++m) {
      for (std::size_t c = 0; c < kModalities[m].channels; ++c) {
        std::vector<double> v(length);
        for (double& x : v) x = noise(rng);
        synth::store_block(s.blocks[m], c, dsp::apply_filter(band_lpf, dsp::Segment{v, synth::kRateHz, "aux"}, true).values);
      }
    }
    out.samples.push_back(std::move(s));
    out.latents.push_back(lat);
  }
  return out;
}

}  // namespace bp6::data
