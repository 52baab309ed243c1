#pragma once

// Variational mode decomposition: spectral-domain ADMM over K band-limited
// modes with adaptive center frequencies.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bp6/error.hpp"
#include "bp6/fft.hpp"

namespace bp6::vmd {

enum class OmegaInit { zero, uniform };

struct VmdConfig {
  int k_modes = 6;
  double alpha = 2000.0;  // bandwidth penalty
  double tau_dual = 1.0;  // dual ascent step; 0 drops the reconstruction constraint
  double tol = 1e-7;
  int max_iter = 500;
  OmegaInit omega_init = OmegaInit::uniform;

  void validate() const {
    if (k_modes < 1) throw InvalidArgument("vmd k_modes must be >= 1");
    if (!(alpha > 0.0)) throw InvalidArgument("vmd alpha must be > 0");
    if (!(tol > 0.0)) throw InvalidArgument("vmd tol must be > 0");
    if (max_iter < 1) throw InvalidArgument("vmd max_iter must be >= 1");
    if (!(tau_dual >= 0.0)) throw InvalidArgument("vmd tau_dual must be >= 0");
  }
};

struct VmdResult {
  std::vector<std::vector<double>> modes;  // ascending center frequency
  std::vector<double> omega;               // cycles/sample in [0, 0.5]
  int iterations = 0;
  bool converged = false;

  std::vector<double> mode_sum() const {
    std::vector<double> s(modes.empty() ? 0 : modes.front().size(), 0.0);
    for (const auto& m : modes)
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += m[i];
    return s;
  }
};

using cplx = std::complex<double>;

/// Decomposes `x` into cfg.k_modes modes. The signal is mirror-extended by
/// half its length on each side before the spectral iteration and cropped
/// afterwards. Odd lengths get one extra mirrored sample that is dropped.
inline VmdResult vmd_decompose(std::span<const double> x, const VmdConfig& cfg = {}) {
  cfg.validate();
  if (x.size() < 2) throw InvalidArgument("vmd needs at least 2 samples");
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("vmd input contains a non-finite sample");
  }

  std::vector<double> signal(x.begin(), x.end());
  if (signal.size() % 2 == 1) signal.push_back(signal[signal.size() - 2]);
  const std::size_t len = signal.size();
  const std::size_t half_len = len / 2;

  // [reverse(first half), signal, reverse(second half)]
  std::vector<double> mirrored;
  mirrored.reserve(2 * len);
  for (std::size_t i = half_len; i-- > 0;) mirrored.push_back(signal[i]);
  mirrored.insert(mirrored.end(), signal.begin(), signal.end());
  for (std::size_t i = len; i-- > half_len;) mirrored.push_back(signal[i]);

  const std::size_t total = mirrored.size();
  const std::size_t nyq = total / 2;
  // Analytic spectrum: bin m in [0, nyq) holds frequency m / total.
  const auto spectrum = fft::forward(mirrored);
  std::vector<cplx> f_plus(spectrum.begin(), spectrum.begin() + static_cast<std::ptrdiff_t>(nyq));
  std::vector<double> freqs(nyq);
  for (std::size_t m = 0; m < nyq; ++m) freqs[m] = static_cast<double>(m) / static_cast<double>(total);

  const auto k_modes = static_cast<std::size_t>(cfg.k_modes);
  std::vector<double> omega(k_modes, 0.0);
  if (cfg.omega_init == OmegaInit::uniform) {
    for (std::size_t k = 0; k < k_modes; ++k) omega[k] = 0.5 / static_cast<double>(k_modes) * static_cast<double>(k);
  }

  std::vector<std::vector<cplx>> u(k_modes, std::vector<cplx>(nyq, cplx{0.0}));
  std::vector<cplx> dual(nyq, cplx{0.0});
  std::vector<cplx> total_modes(nyq, cplx{0.0});
  std::vector<cplx> previous(nyq);

  VmdResult result;
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    double worst_change = 0.0;
    for (std::size_t k = 0; k < k_modes; ++k) {
      previous = u[k];
      double power = 0.0, weighted = 0.0, diff = 0.0, old_norm = 0.0;
      for (std::size_t m = 0; m < nyq; ++m) {
        // Gauss-Seidel: total_modes already holds the latest values of the other modes.
        const cplx others = total_modes[m] - u[k][m];
        const double dw = freqs[m] - omega[k];
        const cplx updated = (f_plus[m] - others + dual[m] / 2.0) / (1.0 + 2.0 * cfg.alpha * dw * dw);
        total_modes[m] = others + updated;
        u[k][m] = updated;
        const double p = std::norm(updated);
        power += p;
        weighted += freqs[m] * p;
        diff += std::norm(updated - previous[m]);
        old_norm += std::norm(previous[m]);
      }
      if (power > 0.0) omega[k] = weighted / power;
      if (!std::isfinite(omega[k]) || !std::isfinite(power)) {
        throw NumericError("vmd produced a non-finite value at iteration " + std::to_string(iter));
      }
      const double change = diff == 0.0 ? 0.0 : diff / std::max(old_norm, 1e-300);
      worst_change = std::max(worst_change, change);
    }
    if (cfg.tau_dual > 0.0) {
      for (std::size_t m = 0; m < nyq; ++m) dual[m] += cfg.tau_dual * (f_plus[m] - total_modes[m]);
    }
    result.iterations = iter;
    if (worst_change < cfg.tol) {
      result.converged = true;
      break;
    }
  }

  std::vector<std::size_t> order(k_modes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return omega[a] < omega[b]; });

  const std::size_t crop = total / 4;
  for (std::size_t k : order) {
    std::vector<cplx> full(total, cplx{0.0});
    full[0] = u[k][0];
    for (std::size_t m = 1; m < nyq; ++m) {
      full[m] = u[k][m];
      full[total - m] = std::conj(u[k][m]);
    }
    const auto time = fft::inverse(std::move(full));
    std::vector<double> mode(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mode[i] = time[crop + i].real();
    for (double v : mode) {
      if (!std::isfinite(v)) throw NumericError("vmd reconstruction produced a non-finite sample");
    }
    result.modes.push_back(std::move(mode));
    result.omega.push_back(omega[k]);
  }
  return result;
}

}  // namespace bp6::vmd
