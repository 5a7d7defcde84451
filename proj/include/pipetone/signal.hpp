#pragma once

// Time-domain synthesis and spectral estimation primitives. Amplitudes are
// relative full-scale (1.0 = full scale), powers are relative, frequencies Hz.
//
// Conventions that the rest of the library leans on:
//  - transforms zero-pad to the next power of two; bin_hz = sample_rate / N
//  - spectrum() returns raw one-sided |X[k]| (relative units, no rescaling)
//  - power_spectral_density() is an averaged periodogram normalized so that
//    its integral over [0, Nyquist] equals the mean square of the samples

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipetone/fft.hpp"
#include "pipetone/rng.hpp"

namespace pipetone {

inline constexpr double kPi = 3.14159265358979323846;

struct SampleBuffer {
  std::vector<double> samples;
  double sample_rate = 0.0;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class SpectrumKind { magnitude, power_density };
enum class Window { rectangular, hann };

struct Spectrum {
  double bin_hz = 0.0;
  std::vector<double> values;  // one-sided, bin i at frequency i * bin_hz
  SpectrumKind kind = SpectrumKind::magnitude;

  double nyquist_hz() const { return bin_hz * static_cast<double>(values.size() - 1); }
};

struct PeakEstimate {
  double freq_hz = 0.0;
  double magnitude = 0.0;
};

inline SampleBuffer gen_tone(double freq_hz, double amplitude, double tone_dur_s,
                             double pad_dur_s, double sample_rate) {
  if (sample_rate <= 0.0) throw std::invalid_argument("gen_tone: sample_rate must be positive");
  if (freq_hz <= 0.0) throw std::invalid_argument("gen_tone: freq_hz must be positive");
  if (freq_hz >= sample_rate / 2.0)
    throw std::invalid_argument("gen_tone: freq_hz at or above Nyquist would alias");
  if (amplitude < 0.0) throw std::invalid_argument("gen_tone: amplitude must be non-negative");
  if (tone_dur_s < 0.0 || pad_dur_s < 0.0)
    throw std::invalid_argument("gen_tone: durations must be non-negative");

  const std::size_t n_pad = static_cast<std::size_t>(std::llround(pad_dur_s * sample_rate));
  const std::size_t n_tone = static_cast<std::size_t>(std::llround(tone_dur_s * sample_rate));
  SampleBuffer out;
  out.sample_rate = sample_rate;
  out.samples.assign(n_pad + n_tone + n_pad, 0.0);
  const double w = 2.0 * kPi * freq_hz / sample_rate;
  for (std::size_t i = 0; i < n_tone; ++i)
    out.samples[n_pad + i] = amplitude * std::sin(w * static_cast<double>(i));
  return out;
}

// Linear chirp; instantaneous frequency runs f_start -> f_end with continuous
// phase. gen_chirp(f, f, ...) degenerates to gen_tone(f, ...) exactly.
inline SampleBuffer gen_chirp(double f_start_hz, double f_end_hz, double dur_s,
                              double amplitude, double sample_rate) {
  if (sample_rate <= 0.0) throw std::invalid_argument("gen_chirp: sample_rate must be positive");
  if (f_start_hz <= 0.0 || f_end_hz <= 0.0)
    throw std::invalid_argument("gen_chirp: frequencies must be positive");
  if (f_start_hz >= sample_rate / 2.0 || f_end_hz >= sample_rate / 2.0)
    throw std::invalid_argument("gen_chirp: frequency at or above Nyquist would alias");
  if (dur_s <= 0.0) throw std::invalid_argument("gen_chirp: dur_s must be positive");
  if (amplitude < 0.0) throw std::invalid_argument("gen_chirp: amplitude must be non-negative");

  const std::size_t n = static_cast<std::size_t>(std::llround(dur_s * sample_rate));
  const double rate = (f_end_hz - f_start_hz) / dur_s;  // Hz per second
  SampleBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double phase = 2.0 * kPi * (f_start_hz * t + 0.5 * rate * t * t);
    out.samples[i] = amplitude * std::sin(phase);
  }
  return out;
}

inline Spectrum spectrum(const SampleBuffer& buf, Window window = Window::rectangular) {
  if (buf.samples.empty()) throw std::invalid_argument("spectrum: empty buffer");
  if (buf.sample_rate <= 0.0) throw std::invalid_argument("spectrum: sample_rate must be positive");

  std::vector<double> x = buf.samples;
  if (window == Window::hann) {
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] *= 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / n));
  }
  const std::size_t N = next_pow2(x.size());
  const auto X = fft_real(x, N);
  Spectrum s;
  s.kind = SpectrumKind::magnitude;
  s.bin_hz = buf.sample_rate / static_cast<double>(N);
  s.values.resize(N / 2 + 1);
  for (std::size_t k = 0; k <= N / 2; ++k) s.values[k] = std::abs(X[k]);
  return s;
}

// Bartlett-style averaged periodogram: rectangular windows, no overlap, the
// trailing partial segment is dropped. Each segment is normalized so that the
// one-sided density integrates back to that segment's mean square power.
inline Spectrum power_spectral_density(const SampleBuffer& buf, std::size_t segment_len) {
  if (buf.sample_rate <= 0.0)
    throw std::invalid_argument("power_spectral_density: sample_rate must be positive");
  if (segment_len == 0) throw std::invalid_argument("power_spectral_density: segment_len must be >= 1");
  if (segment_len > buf.samples.size())
    throw std::invalid_argument("power_spectral_density: segment_len exceeds buffer length");

  const std::size_t n_seg = buf.samples.size() / segment_len;
  // The transform runs at exactly the segment length (the FFT layer handles
  // any size), so bin spacing is sample_rate / segment_len and a tone with an
  // integer number of cycles per segment lands dead on a bin.
  const std::size_t N = segment_len;
  const double bin_hz = buf.sample_rate / static_cast<double>(N);

  Spectrum s;
  s.kind = SpectrumKind::power_density;
  s.bin_hz = bin_hz;
  s.values.assign(N / 2 + 1, 0.0);

  std::vector<double> seg(segment_len);
  // |X[k]|^2 / (sample_rate * L) integrates (over two-sided bins spaced
  // bin_hz apart) to the segment mean square; fold negative bins on top.
  const double scale = 1.0 / (buf.sample_rate * static_cast<double>(segment_len));
  for (std::size_t si = 0; si < n_seg; ++si) {
    std::copy_n(buf.samples.begin() + static_cast<std::ptrdiff_t>(si * segment_len), segment_len,
                seg.begin());
    const auto X = fft_real(seg, N);
    s.values[0] += std::norm(X[0]) * scale;
    for (std::size_t k = 1; k + k < N; ++k)
      s.values[k] += (std::norm(X[k]) + std::norm(X[N - k])) * scale;
    if (N >= 2 && N % 2 == 0) s.values[N / 2] += std::norm(X[N / 2]) * scale;
  }
  const double inv = 1.0 / static_cast<double>(n_seg);
  for (auto& v : s.values) v *= inv;
  return s;
}

// Integrated power of a density spectrum over [f_lo, f_hi] (bin centers).
inline double band_power(const Spectrum& psd, double f_lo, double f_hi) {
  if (psd.kind != SpectrumKind::power_density)
    throw std::invalid_argument("band_power: spectrum is not a power density");
  if (f_lo > f_hi) throw std::invalid_argument("band_power: f_lo exceeds f_hi");
  double total = 0.0;
  const std::size_t k_lo =
      static_cast<std::size_t>(std::max(0.0, std::ceil(f_lo / psd.bin_hz - 1e-9)));
  for (std::size_t k = k_lo; k < psd.values.size(); ++k) {
    if (static_cast<double>(k) * psd.bin_hz > f_hi + 1e-9) break;
    total += psd.values[k] * psd.bin_hz;
  }
  return total;
}

// Gaussian noise with a prescribed one-sided power density, synthesized in
// the frequency domain (random phases, Hermitian spectrum) and cropped to
// len samples; cropping keeps the process stationary, so the density holds.
// density_hz is called with a frequency in (0, Nyquist] and returns power/Hz.
template <typename DensityFn>
SampleBuffer synth_noise(std::size_t len, double sample_rate, DensityFn&& density_hz, Rng& rng) {
  if (len == 0) throw std::invalid_argument("synth_noise: len must be positive");
  if (sample_rate <= 0.0) throw std::invalid_argument("synth_noise: sample_rate must be positive");
  const std::size_t P = next_pow2(len);
  std::vector<cdouble> U(P, cdouble{0.0, 0.0});
  // E|U[k]|^2 = density * sample_rate * P / 2 makes the one-sided density of
  // the inverse transform equal density(f) (see the fold in
  // power_spectral_density for the matching analysis convention).
  for (std::size_t k = 1; k < P / 2; ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(P);
    const double d = density_hz(f);
    if (d < 0.0) throw std::invalid_argument("synth_noise: density must be non-negative");
    const double sd = std::sqrt(d * sample_rate * static_cast<double>(P) / 4.0);
    U[k] = cdouble{sd * rng.gaussian(), sd * rng.gaussian()};
    U[P - k] = std::conj(U[k]);
  }
  ifft(U);
  SampleBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i) out.samples[i] = U[i].real();
  return out;
}

// Largest bin in [f_lo, f_hi] refined by quadratic three-point interpolation.
// Ties break toward the lower frequency; edge bins return the bin itself.
inline PeakEstimate main_peak(const Spectrum& spec, double f_lo, double f_hi) {
  if (spec.values.empty()) throw std::invalid_argument("main_peak: empty spectrum");
  if (f_lo < 0.0 || f_lo >= f_hi) throw std::invalid_argument("main_peak: bad band");
  const double last_hz = spec.nyquist_hz();
  if (f_lo > last_hz) throw std::invalid_argument("main_peak: band outside spectrum");

  const std::size_t k_lo =
      static_cast<std::size_t>(std::max(0.0, std::ceil(f_lo / spec.bin_hz - 1e-9)));
  std::size_t k_hi = static_cast<std::size_t>(std::floor(f_hi / spec.bin_hz + 1e-9));
  k_hi = std::min(k_hi, spec.values.size() - 1);
  if (k_lo > k_hi) throw std::invalid_argument("main_peak: band contains no bins");

  std::size_t best = k_lo;
  for (std::size_t k = k_lo + 1; k <= k_hi; ++k)
    if (spec.values[k] > spec.values[best]) best = k;

  PeakEstimate est;
  est.freq_hz = static_cast<double>(best) * spec.bin_hz;
  est.magnitude = spec.values[best];
  if (best > 0 && best + 1 < spec.values.size()) {
    const double ym = spec.values[best - 1];
    const double y0 = spec.values[best];
    const double yp = spec.values[best + 1];
    const double denom = ym - 2.0 * y0 + yp;
    if (denom != 0.0) {
      double delta = 0.5 * (ym - yp) / denom;
      delta = std::clamp(delta, -0.5, 0.5);
      est.freq_hz = (static_cast<double>(best) + delta) * spec.bin_hz;
      est.magnitude = y0 - 0.25 * (ym - yp) * delta;
    }
  }
  return est;
}

}  // namespace pipetone
