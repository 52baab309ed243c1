#pragma once

// ECG: 40 Hz lowpass, VMD, per-mode db4 shrinkage, recombination.
// PPG: zero-phase 7 Hz lowpass.

#include <cstddef>
#include <vector>

#include "bp6/dsp.hpp"
#include "bp6/vmd.hpp"
#include "bp6/wavelet.hpp"

namespace bp6::denoise {

struct EcgDenoiseConfig {
  int prefilter_order = 4;
  double prefilter_cutoff_hz = 40.0;
  vmd::VmdConfig vmd{};
  wavelet::WaveletConfig wavelet{};
};

struct PpgDenoiseConfig {
  int order = 2;
  double cutoff_hz = 7.0;
};

/// Wavelet shrinkage of a single sequence (analysis, threshold, synthesis).
inline std::vector<double> wavelet_shrink(std::span<const double> x,
                                          const wavelet::WaveletConfig& cfg = {}) {
  const auto pyramid = wavelet::dwt_db4(x, cfg);
  return wavelet::idwt_db4(wavelet::shrink_coefficients(pyramid, cfg.threshold_rule));
}

inline dsp::Segment denoise_ecg(const dsp::Segment& x, const EcgDenoiseConfig& cfg = {}) {
  const auto lpf = dsp::design_butterworth_lowpass(cfg.prefilter_order, cfg.prefilter_cutoff_hz, x.fs_hz);
  const dsp::Segment filtered = dsp::apply_filter(lpf, x, /*zero_phase=*/true);
  const auto decomposition = vmd::vmd_decompose(filtered.values, cfg.vmd);

  dsp::Segment out{std::vector<double>(x.size(), 0.0), x.fs_hz, x.channel_name};
  for (const auto& mode : decomposition.modes) {
    const auto cleaned = wavelet_shrink(mode, cfg.wavelet);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += cleaned[i];
  }
  return out;
}

inline dsp::Segment denoise_ppg(const dsp::Segment& x, const PpgDenoiseConfig& cfg = {}) {
  const auto lpf = dsp::design_butterworth_lowpass(cfg.order, cfg.cutoff_hz, x.fs_hz);
  return dsp::apply_filter(lpf, x, /*zero_phase=*/true);
}

}  // namespace bp6::denoise
