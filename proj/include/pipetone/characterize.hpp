#pragma once

// Channel characterization: per-frequency usability sweeps, spectral spreading
// measurement, subchannel separation planning, and minimum-volume calibration.
//
// The central test is the "clean peak" criterion: a frequency is usable at a
// given tap when the transmitted tone is still the dominant spectral peak of
// the received clip, within a small tolerance. A run-level pass requires the
// criterion to hold at every measured distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipetone/channel.hpp"
#include "pipetone/rng.hpp"
#include "pipetone/signal.hpp"

namespace pipetone {

struct SweepConfig {
  double f_min_hz = 1.0;
  double f_max_hz = 20000.0;
  double step_hz = 100.0;
  double tone_dur_s = 1.0;
  double pad_dur_s = 0.5;
  double sample_rate = 44100.0;
  double peak_tolerance_hz = 5.0;
};

// The sweep grid starts at f_min and then proceeds along multiples of the
// step: (1, 100, 200, ..., 20000) under the defaults.
inline std::vector<double> sweep_grid(const SweepConfig& cfg) {
  if (cfg.f_min_hz > cfg.f_max_hz) throw std::invalid_argument("sweep: f_min above f_max");
  if (cfg.step_hz <= 0.0) throw std::invalid_argument("sweep: step must be positive");
  std::vector<double> freqs{cfg.f_min_hz};
  for (double f = std::floor(cfg.f_min_hz / cfg.step_hz + 1.0) * cfg.step_hz;
       f <= cfg.f_max_hz + 1e-9; f += cfg.step_hz) {
    if (f > cfg.f_min_hz + 1e-9) freqs.push_back(f);
  }
  return freqs;
}

struct SweepCell {
  bool pass = false;
  double magnitude = 0.0;  // interpolated magnitude of the dominant received peak
};

struct BandwidthReport {
  std::string run_name;
  std::vector<double> freqs_hz;
  std::vector<double> distances_m;
  std::vector<std::vector<SweepCell>> cells;  // [freq][distance]
  double peak_tolerance_hz = 5.0;

  bool pass(std::size_t freq_index) const {
    const auto& row = cells.at(freq_index);
    return std::all_of(row.begin(), row.end(), [](const SweepCell& c) { return c.pass; });
  }
  std::vector<double> passing() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < freqs_hz.size(); ++i)
      if (pass(i)) out.push_back(freqs_hz[i]);
    return out;
  }
};

inline bool bandwidth_condition(double tx_freq_hz, const SampleBuffer& received,
                                double tolerance_hz) {
  if (received.samples.empty()) throw std::invalid_argument("bandwidth condition: empty buffer");
  if (tx_freq_hz >= received.sample_rate / 2.0)
    throw std::invalid_argument("bandwidth condition: frequency at or above Nyquist");
  if (tolerance_hz <= 0.0) throw std::invalid_argument("bandwidth condition: tolerance must be positive");
  const auto spec = spectrum(received);
  const auto peak = main_peak(spec, 1.0, spec.nyquist_hz());
  return std::abs(peak.freq_hz - tx_freq_hz) <= tolerance_hz;
}

// Full sweep protocol: one tone per grid frequency per tap, propagated with
// noise, judged by the peak criterion. Cell seeds are derived from the master
// seed by cell index, so the report is reproducible and any sub-grid rerun of
// the same (seed, grid) pair sees the same noise.
inline BandwidthReport run_sweep(const PipeRunModel& model, const SweepConfig& cfg,
                                 std::uint64_t seed) {
  if (model.distances_m.empty()) throw std::invalid_argument("sweep: model has no distances");
  BandwidthReport report;
  report.run_name = model.name;
  report.freqs_hz = sweep_grid(cfg);
  report.distances_m = model.distances_m;
  report.peak_tolerance_hz = cfg.peak_tolerance_hz;
  report.cells.resize(report.freqs_hz.size());

  std::uint64_t cell = 0;
  for (std::size_t fi = 0; fi < report.freqs_hz.size(); ++fi) {
    const double f = report.freqs_hz[fi];
    auto& row = report.cells[fi];
    row.resize(report.distances_m.size());
    for (std::size_t di = 0; di < report.distances_m.size(); ++di, ++cell) {
      const double d = report.distances_m[di];
      try {
        const auto tone = gen_tone(f, 1.0, cfg.tone_dur_s, cfg.pad_dur_s, cfg.sample_rate);
        const auto rx = propagate(tone, model, d, true, derive_seed(seed, cell));
        const auto spec = spectrum(rx.buffer);
        const auto peak = main_peak(spec, 1.0, spec.nyquist_hz());
        row[di].pass = std::abs(peak.freq_hz - f) <= cfg.peak_tolerance_hz;
        row[di].magnitude = peak.magnitude;
      } catch (const std::exception& e) {
        throw std::runtime_error("sweep failed at " + std::to_string(f) + " Hz, " +
                                 std::to_string(d) + " m: " + e.what());
      }
    }
  }
  return report;
}

// Frequencies passing in every report. Reports are expected to share a grid;
// frequencies are matched by value with a small tolerance so that grids built
// from the same config always intersect cleanly.
inline std::vector<double> global_bandwidth(const std::vector<BandwidthReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("global bandwidth: no reports");
  auto key = [](double f) { return std::llround(f * 1000.0); };
  std::map<long long, int> votes;
  std::map<long long, double> value;
  for (const auto& r : reports) {
    for (double f : r.passing()) {
      ++votes[key(f)];
      value[key(f)] = f;
    }
  }
  std::vector<double> out;
  for (const auto& [k, n] : votes)
    if (n == static_cast<int>(reports.size())) out.push_back(value[k]);
  return out;
}

// Width of the contiguous PSD region around the transmitted frequency that
// stays above threshold_fraction of the local peak. This is what limits how
// tightly subchannels can be packed.
//
// The 7056-sample analysis segment puts bins exactly 6.25 Hz apart, so every
// multiple of 100 Hz sits on a bin center and a clean tone contributes no
// leakage skirt of its own; what remains above the threshold is the channel's
// doing.
inline double dispersion_width(const SampleBuffer& received, double tx_freq_hz,
                               double threshold_fraction = 0.01) {
  if (threshold_fraction <= 0.0 || threshold_fraction >= 1.0)
    throw std::invalid_argument("dispersion width: threshold fraction must be in (0, 1)");
  if (!bandwidth_condition(tx_freq_hz, received, 5.0))
    throw std::runtime_error("dispersion width: no clean peak near " +
                             std::to_string(tx_freq_hz) + " Hz");
  const auto psd = power_spectral_density(received, 7056);
  const auto nbins = psd.values.size();
  const auto k0 = static_cast<std::size_t>(std::llround(tx_freq_hz / psd.bin_hz));
  // Local peak: the strongest bin within a 200 Hz window of the tone.
  const auto halo = static_cast<std::size_t>(std::ceil(200.0 / psd.bin_hz));
  std::size_t peak_bin = k0;
  const std::size_t lo_lim = k0 > halo ? k0 - halo : 0;
  const std::size_t hi_lim = std::min(nbins - 1, k0 + halo);
  for (std::size_t k = lo_lim; k <= hi_lim; ++k)
    if (psd.values[k] > psd.values[peak_bin]) peak_bin = k;
  const double floor = threshold_fraction * psd.values[peak_bin];
  std::size_t lo = peak_bin, hi = peak_bin;
  while (lo > 0 && psd.values[lo - 1] >= floor) --lo;
  while (hi + 1 < nbins && psd.values[hi + 1] >= floor) ++hi;
  return static_cast<double>(hi - lo + 1) * psd.bin_hz;
}

struct DispersionProfile {
  std::vector<double> freqs_hz;
  std::vector<double> distances_m;
  std::vector<std::vector<double>> widths_hz;  // [freq][distance]
  double threshold_fraction = 0.01;
  double grid_step_hz = 100.0;  // the sweep step the widths were sampled on
};

// Measure spreading over a frequency band of a modeled run, one width per
// (frequency, tap). Shares the sweep's seeding convention.
inline DispersionProfile dispersion_profile(const PipeRunModel& model, const SweepConfig& cfg,
                                            std::uint64_t seed, double threshold_fraction = 0.01) {
  DispersionProfile profile;
  profile.freqs_hz = sweep_grid(cfg);
  profile.distances_m = model.distances_m;
  profile.threshold_fraction = threshold_fraction;
  profile.grid_step_hz = cfg.step_hz;
  profile.widths_hz.resize(profile.freqs_hz.size());
  std::uint64_t cell = 0;
  for (std::size_t fi = 0; fi < profile.freqs_hz.size(); ++fi) {
    auto& row = profile.widths_hz[fi];
    row.resize(profile.distances_m.size());
    for (std::size_t di = 0; di < profile.distances_m.size(); ++di, ++cell) {
      const auto tone =
          gen_tone(profile.freqs_hz[fi], 1.0, cfg.tone_dur_s, cfg.pad_dur_s, cfg.sample_rate);
      const auto rx =
          propagate(tone, model, profile.distances_m[di], true, derive_seed(seed, cell));
      row[di] = dispersion_width(rx.buffer, profile.freqs_hz[fi], threshold_fraction);
    }
  }
  return profile;
}

// Smallest subchannel spacing that keeps every measured spread inside its own
// slot: the worst width in the band, rounded up to a whole sweep step (and at
// least one step, since the grid cannot resolve finer anyway).
inline double min_separation(const DispersionProfile& profile, double band_lo_hz,
                             double band_hi_hz) {
  if (band_lo_hz > band_hi_hz) throw std::invalid_argument("min separation: empty band");
  double worst = -1.0;
  for (std::size_t fi = 0; fi < profile.freqs_hz.size(); ++fi) {
    const double f = profile.freqs_hz[fi];
    if (f < band_lo_hz - 1e-9 || f > band_hi_hz + 1e-9) continue;
    for (double w : profile.widths_hz[fi]) worst = std::max(worst, w);
  }
  if (worst < 0.0) throw std::invalid_argument("min separation: no profile entries in band");
  const double steps = std::max(1.0, std::ceil(worst / profile.grid_step_hz - 1e-9));
  return steps * profile.grid_step_hz;
}

struct VolumeResult {
  bool usable = false;
  double amplitude = 0.0;  // smallest amplitude that cleared the threshold
};

// Calibrate the quietest workable transmission level: send a full-band
// descending chirp at each candidate amplitude and accept the first one whose
// received 15-20 kHz band power clears the run's own noise floor by
// snr_threshold_db. The chirp covers the whole band in one shot, so a single
// recording per amplitude suffices.
inline VolumeResult min_volume(const PipeRunModel& model, double distance_m,
                               const std::vector<double>& amplitudes,
                               double snr_threshold_db = 6.0, std::uint64_t seed = 1,
                               double sample_rate = 44100.0) {
  if (amplitudes.empty()) throw std::invalid_argument("min volume: no amplitudes");
  for (std::size_t i = 0; i + 1 < amplitudes.size(); ++i)
    if (amplitudes[i] >= amplitudes[i + 1])
      throw std::invalid_argument("min volume: amplitudes must be ascending");
  if (amplitudes.front() <= 0.0) throw std::invalid_argument("min volume: amplitudes must be positive");

  const double band_lo = 15000.0, band_hi = 20000.0, chirp_dur = 2.0;
  const auto ref = noise_floor(model, chirp_dur, sample_rate, derive_seed(seed, 1000001));
  const double noise_band = band_power(power_spectral_density(ref, 8192), band_lo, band_hi);
  const double needed = noise_band * std::pow(10.0, snr_threshold_db / 10.0);

  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    const auto chirp = gen_chirp(20000.0, 1.0, chirp_dur, amplitudes[k], sample_rate);
    const auto rx = propagate(chirp, model, distance_m, true, derive_seed(seed, k));
    const double got = band_power(power_spectral_density(rx.buffer, 8192), band_lo, band_hi);
    if (got >= needed) return {true, amplitudes[k]};
  }
  return {false, 0.0};
}

// The amplitude ladder used throughout: laptop volume steps 1..50 mapped
// linearly onto full scale.
inline std::vector<double> volume_ladder() {
  std::vector<double> out;
  for (int k = 1; k <= 50; ++k) out.push_back(k * 0.02);
  return out;
}

}  // namespace pipetone
