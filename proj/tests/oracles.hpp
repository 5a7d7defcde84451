#pragma once

// Independent reference implementations used to check the library against
// first principles. Deliberately slow and literal; keep them free of any
// code under test except where a comment says otherwise.

#include <complex>
#include <cstddef>
#include <vector>

#include "pipetone/signal.hpp"

namespace oracles {

// Transform straight from the definition, no padding, O(n^2).
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> X(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * pipetone::kPi * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      acc += x[i] * std::complex<double>{std::cos(ang), std::sin(ang)};
    }
    X[k] = acc;
  }
  return X;
}

// Peak frequency of one analysis window [start, start+len). Uses the library
// spectrum/main_peak pair, which test_signal validates against naive_dft; the
// oracle value in chirp tests is the closed-form instantaneous frequency.
inline double window_peak_hz(const pipetone::SampleBuffer& buf, std::size_t start,
                             std::size_t len) {
  pipetone::SampleBuffer w;
  w.sample_rate = buf.sample_rate;
  w.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(start),
                   buf.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
  const auto spec = pipetone::spectrum(w, pipetone::Window::hann);
  return pipetone::main_peak(spec, 1.0, w.sample_rate / 2.0).freq_hz;
}

// Short-time ridge: peak frequency per consecutive window.
inline std::vector<double> stft_ridge(const pipetone::SampleBuffer& buf, std::size_t win,
                                      std::size_t hop) {
  std::vector<double> ridge;
  for (std::size_t start = 0; start + win <= buf.samples.size(); start += hop)
    ridge.push_back(window_peak_hz(buf, start, win));
  return ridge;
}

}  // namespace oracles
