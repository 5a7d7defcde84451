#pragma once

// Rate analysis for the subchannel grid: the Shannon-Hartley law per
// subchannel, whole-grid totals, and water-filling power allocation.
//
// Powers are relative (uncalibrated microphone units); only ratios matter, so
// every capacity here is exact in S/N and the absolute scale cancels. The
// bandwidth that enters the rate law is carried on each measurement rather
// than fixed globally, because the physically honest value (the subchannel
// spacing) and the value used in our survey write-ups (the full usable band)
// differ by orders of magnitude.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipetone/signal.hpp"

namespace pipetone {

struct SubchannelPlan {
  double f_lo_hz = 0.0;
  double f_hi_hz = 0.0;
  double spacing_hz = 0.0;
  std::vector<double> freqs_hz;  // inclusive ascending grid

  std::size_t size() const { return freqs_hz.size(); }
};

// Inclusive arithmetic grid: f_lo, f_lo+spacing, ... up to f_hi. The default
// attack band (15-20 kHz every 100 Hz) comes out to 51 subchannels.
inline SubchannelPlan plan_subchannels(double f_lo_hz, double f_hi_hz, double spacing_hz) {
  if (spacing_hz <= 0.0) throw std::invalid_argument("plan_subchannels: spacing must be positive");
  if (f_lo_hz <= 0.0) throw std::invalid_argument("plan_subchannels: f_lo must be positive");
  if (f_lo_hz > f_hi_hz) throw std::invalid_argument("plan_subchannels: empty grid, f_lo above f_hi");
  SubchannelPlan plan;
  plan.f_lo_hz = f_lo_hz;
  plan.f_hi_hz = f_hi_hz;
  plan.spacing_hz = spacing_hz;
  const auto count =
      static_cast<std::size_t>(std::floor((f_hi_hz - f_lo_hz) / spacing_hz + 1e-9)) + 1;
  plan.freqs_hz.reserve(count);
  for (std::size_t k = 0; k < count; ++k)
    plan.freqs_hz.push_back(f_lo_hz + static_cast<double>(k) * spacing_hz);
  return plan;
}

struct ChannelMeasurement {
  double freq_hz = 0.0;
  double signal_plus_noise = 0.0;  // integrated power over the analysis band
  double noise = 0.0;              // same band, quiet baseline
  double bandwidth_hz = 0.0;       // the B that enters the rate law
  bool clamped = false;            // s+n measured below n and was raised to it
};

struct SubchannelCapacity {
  double freq_hz = 0.0;
  double bps = 0.0;
};

struct CapacityReport {
  std::string run_name;
  std::vector<SubchannelCapacity> per_subchannel;  // ascending frequency
  SubchannelCapacity best;                         // ties go to the lower frequency
  double total_bps = 0.0;
};

// C = B * log2((S+N)/N). Zero noise is rejected rather than returned as
// infinity: a silent baseline means the measurement, not the pipe, is broken.
inline double shannon_capacity(double bandwidth_hz, double s_plus_n, double n) {
  if (bandwidth_hz <= 0.0)
    throw std::invalid_argument("shannon_capacity: bandwidth must be positive");
  if (n <= 0.0) throw std::invalid_argument("shannon_capacity: noise power must be positive");
  if (s_plus_n < n)
    throw std::invalid_argument("shannon_capacity: S+N below N, inconsistent measurement");
  return bandwidth_hz * std::log2(s_plus_n / n);
}

// The S/N ratio at which the rate law hits capacity_bps: 2^(C/B) - 1.
inline double invert_capacity(double bandwidth_hz, double capacity_bps) {
  if (bandwidth_hz <= 0.0)
    throw std::invalid_argument("invert_capacity: bandwidth must be positive");
  if (capacity_bps < 0.0)
    throw std::invalid_argument("invert_capacity: capacity must be non-negative");
  return std::exp2(capacity_bps / bandwidth_hz) - 1.0;
}

namespace detail {

inline std::string hz_label(double freq_hz) {
  // Grid frequencies are whole hertz in practice; keep error text readable.
  const auto rounded = std::llround(freq_hz);
  if (std::abs(freq_hz - static_cast<double>(rounded)) < 1e-6) return std::to_string(rounded);
  return std::to_string(freq_hz);
}

}  // namespace detail

// S+N from a received clip and N from a quiet baseline, both integrated over
// freq +- bandwidth/2 of the averaged periodogram. The baseline wants at
// least half a second of quiet; the received clip a full second.
inline ChannelMeasurement measure_subchannel(const SampleBuffer& pre_noise,
                                             const SampleBuffer& received, double freq_hz,
                                             double bandwidth_hz) {
  if (freq_hz <= 0.0) throw std::invalid_argument("measure_subchannel: freq must be positive");
  if (bandwidth_hz <= 0.0)
    throw std::invalid_argument("measure_subchannel: bandwidth must be positive");
  if (pre_noise.sample_rate != received.sample_rate)
    throw std::invalid_argument("measure_subchannel: sample rates differ");
  if (pre_noise.duration_seconds() < 0.5 - 1e-9)
    throw std::invalid_argument("measure_subchannel: baseline shorter than 0.5 s");
  if (received.duration_seconds() < 1.0 - 1e-9)
    throw std::invalid_argument("measure_subchannel: received clip shorter than 1 s");

  const double lo = freq_hz - bandwidth_hz / 2.0;
  const double hi = freq_hz + bandwidth_hz / 2.0;
  ChannelMeasurement m;
  m.freq_hz = freq_hz;
  m.bandwidth_hz = bandwidth_hz;
  m.noise = band_power(power_spectral_density(pre_noise, 8192), lo, hi);
  m.signal_plus_noise = band_power(power_spectral_density(received, 8192), lo, hi);
  if (m.signal_plus_noise < m.noise) {
    // Sampling noise in the two periodograms, not negative signal.
    m.signal_plus_noise = m.noise;
    m.clamped = true;
  }
  return m;
}

// Per-subchannel rate law over the whole plan. Measurements must cover the
// plan exactly, one per grid frequency; anything missing, duplicated, or
// stray is an input error, named so sweep plumbing bugs surface immediately.
inline CapacityReport total_capacity(const std::vector<ChannelMeasurement>& measurements,
                                     const SubchannelPlan& plan, std::string run_name = "") {
  if (plan.freqs_hz.empty()) throw std::invalid_argument("total_capacity: empty plan");
  const auto key = [](double f) { return std::llround(f * 1000.0); };
  std::map<long long, const ChannelMeasurement*> by_freq;
  for (const auto& m : measurements)
    if (!by_freq.emplace(key(m.freq_hz), &m).second)
      throw std::invalid_argument("total_capacity: duplicate measurement at " +
                                  detail::hz_label(m.freq_hz) + " Hz");

  CapacityReport report;
  report.run_name = std::move(run_name);
  report.per_subchannel.reserve(plan.size());
  for (double f : plan.freqs_hz) {
    const auto it = by_freq.find(key(f));
    if (it == by_freq.end())
      throw std::invalid_argument("total_capacity: no measurement for " + detail::hz_label(f) +
                                  " Hz");
    const auto& m = *it->second;
    report.per_subchannel.push_back({f, shannon_capacity(m.bandwidth_hz, m.signal_plus_noise, m.noise)});
    by_freq.erase(it);
  }
  if (!by_freq.empty())
    throw std::invalid_argument("total_capacity: measurement at " +
                                detail::hz_label(by_freq.begin()->second->freq_hz) +
                                " Hz is not in the plan");

  report.best = report.per_subchannel.front();
  double total = 0.0;
  for (const auto& sc : report.per_subchannel) {
    total += sc.bps;
    if (sc.bps > report.best.bps) report.best = sc;  // strict: ties keep the lower freq
  }
  report.total_bps = total;
  return report;
}

struct NoiseDensity {
  double freq_hz = 0.0;
  double density = 0.0;  // power per Hz
};

struct PowerAllocation {
  double freq_hz = 0.0;
  double power = 0.0;
};

// Water filling: allocation_i = max(0, mu - N_i) with the water level mu set
// by bisection so the allocations spend exactly the budget. N_i is the
// subchannel noise power, density times bandwidth.
inline std::vector<PowerAllocation> waterfill(double power_budget,
                                              const std::vector<NoiseDensity>& noise,
                                              double subchannel_bandwidth_hz) {
  if (power_budget <= 0.0) throw std::invalid_argument("waterfill: budget must be positive");
  if (noise.empty()) throw std::invalid_argument("waterfill: no subchannels");
  if (subchannel_bandwidth_hz <= 0.0)
    throw std::invalid_argument("waterfill: bandwidth must be positive");

  std::vector<double> floor_power(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i) {
    if (noise[i].density <= 0.0)
      throw std::invalid_argument("waterfill: noise density must be positive");
    floor_power[i] = noise[i].density * subchannel_bandwidth_hz;
  }

  // Spent power is continuous and nondecreasing in the level, so plain
  // bisection converges a bit per step; 200 steps pins mu to the last ulp.
  double lo = *std::min_element(floor_power.begin(), floor_power.end());
  double hi = *std::max_element(floor_power.begin(), floor_power.end()) + power_budget;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    double spent = 0.0;
    for (double n : floor_power) spent += std::max(0.0, mid - n);
    (spent < power_budget ? lo : hi) = mid;
  }
  const double mu = 0.5 * (lo + hi);

  std::vector<PowerAllocation> alloc(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i)
    alloc[i] = {noise[i].freq_hz, std::max(0.0, mu - floor_power[i])};
  return alloc;
}

}  // namespace pipetone
