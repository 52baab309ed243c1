#pragma once

// Thin RAII wrapper over FFTW's complex 1-D transform.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

namespace bp6::fft {

namespace detail {
// The FFTW planner is not re-entrant.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Unnormalized transform in place. `inverse` uses the +i sign convention and
/// divides by N so that inverse(forward(x)) == x.
inline void transform(std::vector<std::complex<double>>& data, bool inverse) {
  const auto n = static_cast<int>(data.size());
  if (n == 0) return;
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(detail::planner_mutex());
    plan = fftw_plan_dft_1d(n, buf, buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                            FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(detail::planner_mutex());
    fftw_destroy_plan(plan);
  }
  if (inverse) {
    const double scale = 1.0 / n;
    for (auto& v : data) v *= scale;
  }
}

inline std::vector<std::complex<double>> forward(const std::vector<double>& x) {
  std::vector<std::complex<double>> out(x.begin(), x.end());
  transform(out, false);
  return out;
}

inline std::vector<std::complex<double>> inverse(std::vector<std::complex<double>> x) {
  transform(x, true);
  return x;
}

}  // namespace bp6::fft
