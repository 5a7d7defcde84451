#pragma once

// Defender-side tooling: statistical detection of a transmission against a
// recorded noise baseline, along-the-pipe localization from arrival-time
// differences at multiple receiver taps, and the attacker-side stealth margin
// (the detector's statistic read from the other direction).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pipetone/rng.hpp"
#include "pipetone/signal.hpp"

namespace pipetone {

inline constexpr std::size_t kBaselineSegment = 8192;

// Averaged noise spectrum from a transmission-free recording, with the band
// the defender watches. Build through build_baseline so the bin grid always
// matches what detect and stealth_margin expect.
struct NoiseBaseline {
  Spectrum psd;
  double sample_rate = 0.0;
  double train_dur_s = 0.0;
  double f_lo_hz = 0.0;
  double f_hi_hz = 0.0;
};

inline NoiseBaseline build_baseline(const SampleBuffer& noise, double f_lo_hz, double f_hi_hz) {
  if (noise.sample_rate <= 0.0)
    throw std::invalid_argument("build_baseline: sample_rate must be positive");
  const double dur = static_cast<double>(noise.samples.size()) / noise.sample_rate;
  if (dur < 5.0 - 1e-9)
    throw std::invalid_argument("build_baseline: needs at least 5 s of noise recording");
  if (f_lo_hz < 0.0 || f_lo_hz >= f_hi_hz)
    throw std::invalid_argument("build_baseline: band must satisfy 0 <= f_lo < f_hi");
  if (f_hi_hz > noise.sample_rate / 2.0 + 1e-9)
    throw std::invalid_argument("build_baseline: band reaches past Nyquist");

  NoiseBaseline b;
  b.psd = power_spectral_density(noise, kBaselineSegment);
  b.sample_rate = noise.sample_rate;
  b.train_dur_s = dur;
  b.f_lo_hz = f_lo_hz;
  b.f_hi_hz = f_hi_hz;
  return b;
}

namespace detail {

// Bin index range [first, last] covering the baseline band, bin centers
// inclusive (the band_power convention).
inline std::pair<std::size_t, std::size_t> band_bins(const Spectrum& s, double f_lo, double f_hi) {
  const auto first =
      static_cast<std::size_t>(std::max(0.0, std::ceil(f_lo / s.bin_hz - 1e-9)));
  std::size_t last = first;
  for (std::size_t k = first; k < s.values.size(); ++k) {
    if (static_cast<double>(k) * s.bin_hz > f_hi + 1e-9) break;
    last = k;
  }
  if (first >= s.values.size() || static_cast<double>(first) * s.bin_hz > f_hi + 1e-9)
    throw std::invalid_argument("defense: band contains no spectrum bins");
  return {first, last};
}

// Detector statistic: the worst bin-wise power ratio against the baseline
// inside the watched band. Bins where the baseline itself is zero carry no
// ratio information and are skipped (the count is reported to callers that
// care); a baseline that is zero across the whole band is degenerate.
inline double max_band_ratio(const Spectrum& window_psd, const NoiseBaseline& baseline,
                             std::size_t* zero_bins_out = nullptr) {
  if (std::abs(window_psd.bin_hz - baseline.psd.bin_hz) > 1e-9 * baseline.psd.bin_hz ||
      window_psd.values.size() != baseline.psd.values.size())
    throw std::invalid_argument(
        "defense: spectrum bins do not match the baseline (different sample rate or segment?)");
  const auto [first, last] = band_bins(baseline.psd, baseline.f_lo_hz, baseline.f_hi_hz);
  std::size_t zeros = 0;
  double best = -1.0;
  for (std::size_t k = first; k <= last; ++k) {
    const double n = baseline.psd.values[k];
    if (n <= 0.0) {
      ++zeros;
      continue;
    }
    best = std::max(best, window_psd.values[k] / n);
  }
  if (zero_bins_out) *zero_bins_out = zeros;
  if (best < 0.0)
    throw std::invalid_argument("defense: degenerate baseline, every bin in the band is zero");
  return best;
}

// Linear interpolation of a density spectrum, for resynthesizing draws that
// follow the baseline process.
inline double density_at(const Spectrum& psd, double f) {
  const double pos = f / psd.bin_hz;
  const auto k = static_cast<std::size_t>(std::max(0.0, pos));
  if (k + 1 >= psd.values.size()) return psd.values.back();
  const double frac = pos - static_cast<double>(k);
  return psd.values[k] + (psd.values[k + 1] - psd.values[k]) * frac;
}

}  // namespace detail

struct DetectionResult {
  bool detected = false;
  double score = 0.0;
  double threshold = 0.0;
};

// Energy detector calibrated by Monte Carlo at construction: the threshold is
// the empirical (1 - pfa) quantile of the statistic over 1000 windows drawn
// from the baseline process itself. Calibration is seeded, so a detector
// built twice from the same inputs behaves identically.
class Detector {
 public:
  Detector(NoiseBaseline baseline, double false_alarm_rate, std::size_t window_len,
           std::uint64_t seed = 20260101)
      : baseline_(std::move(baseline)),
        pfa_(false_alarm_rate),
        window_len_(window_len) {
    if (!(false_alarm_rate > 0.0 && false_alarm_rate < 0.5))
      throw std::invalid_argument("Detector: false_alarm_rate must lie in (0, 0.5)");
    if (static_cast<double>(window_len) < 0.5 * baseline_.sample_rate - 1e-9)
      throw std::invalid_argument("Detector: window must cover at least 0.5 s");

    const std::size_t draws = 1000;
    std::vector<double> scores;
    scores.reserve(draws);
    Rng rng(seed);
    const auto& psd = baseline_.psd;
    for (std::size_t i = 0; i < draws; ++i) {
      const auto draw = synth_noise(
          window_len_, baseline_.sample_rate,
          [&psd](double f) { return std::max(0.0, detail::density_at(psd, f)); }, rng);
      const auto draw_psd = power_spectral_density(draw, kBaselineSegment);
      scores.push_back(detail::max_band_ratio(draw_psd, baseline_));
    }
    std::sort(scores.begin(), scores.end());
    const auto idx = static_cast<std::size_t>(
        std::llround((1.0 - pfa_) * static_cast<double>(draws - 1)));
    threshold_ = scores[idx];
  }

  DetectionResult check(const SampleBuffer& window) const {
    if (window.sample_rate != baseline_.sample_rate)
      throw std::invalid_argument("Detector: window sample rate differs from the baseline");
    if (window.samples.size() != window_len_)
      throw std::invalid_argument("Detector: window length differs from the calibrated length");
    const auto psd = power_spectral_density(window, kBaselineSegment);
    DetectionResult r;
    r.threshold = threshold_;
    r.score = detail::max_band_ratio(psd, baseline_);
    r.detected = r.score > threshold_;
    return r;
  }

  double threshold() const { return threshold_; }
  double false_alarm_rate() const { return pfa_; }
  std::size_t window_len() const { return window_len_; }
  const NoiseBaseline& baseline() const { return baseline_; }

 private:
  NoiseBaseline baseline_;
  double pfa_;
  std::size_t window_len_;
  double threshold_ = 0.0;
};

// One-shot convenience; calibrates a throwaway detector for this window's
// length. Screening many windows is much cheaper through a shared Detector.
inline DetectionResult detect(const SampleBuffer& window, const NoiseBaseline& baseline,
                              double false_alarm_rate) {
  return Detector(baseline, false_alarm_rate, window.samples.size()).check(window);
}

// ---- localization ----------------------------------------------------------

struct ReceiverTap {
  double position_m = 0.0;
  SampleBuffer recording;
  double clock_offset_s = 0.0;  // recording start in the shared time base
};

struct LocalizationEstimate {
  double position_m = 0.0;
  double residual_s = 0.0;  // RMS pairwise arrival-time misfit
  double speed_mps = 0.0;
  // Estimate pinned to the outermost tap: the transmitter sits at or beyond
  // it. Arrival-time differences on a line cannot see farther than the span.
  bool extrapolated = false;
};

namespace detail {

inline double robust_noise_rms(const std::vector<double>& samples) {
  std::vector<double> mag(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) mag[i] = std::abs(samples[i]);
  const auto mid = mag.begin() + static_cast<std::ptrdiff_t>(mag.size() / 2);
  std::nth_element(mag.begin(), mid, mag.end());
  return *mid / 0.6745;  // median absolute deviation to Gaussian sigma
}

constexpr std::size_t kNoEdge = static_cast<std::size_t>(-1);

inline std::size_t leading_edge(const std::vector<double>& samples, double threshold) {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (std::abs(samples[i]) > threshold) return i;
  return kNoEdge;
}

// Best integer lag of a against b within [lag0 - radius, lag0 + radius],
// by plain dot product (scale never changes the argmax).
inline long long refine_lag(const std::vector<double>& a, const std::vector<double>& b,
                            long long lag0, long long radius) {
  long long best_lag = lag0;
  double best = -1.0;
  for (long long lag = lag0 - radius; lag <= lag0 + radius; ++lag) {
    const long long n_lo = std::max<long long>(0, lag);
    const long long n_hi =
        std::min<long long>(static_cast<long long>(a.size()), static_cast<long long>(b.size()) + lag);
    double dot = 0.0;
    for (long long n = n_lo; n < n_hi; ++n)
      dot += a[static_cast<std::size_t>(n)] * b[static_cast<std::size_t>(n - lag)];
    if (dot > best) {
      best = dot;
      best_lag = lag;
    }
  }
  return best_lag;
}

}  // namespace detail

// Transmitter position along the run from arrival-time differences. Arrival
// per tap is the first sample above 5x that tap's noise floor, refined
// pairwise by cross-correlation (+-2 ms) so a slow rise or a noisy edge does
// not skew the difference. Two taps invert the geometry directly; more taps
// minimize the pairwise misfit over every inter-tap segment (the objective
// is piecewise quadratic in the position).
inline LocalizationEstimate localize(const std::vector<ReceiverTap>& taps, double speed_mps) {
  if (taps.size() < 2) throw std::invalid_argument("localize: needs at least two taps");
  if (speed_mps <= 0.0) throw std::invalid_argument("localize: speed must be positive");
  const double sr = taps.front().recording.sample_rate;
  if (sr <= 0.0) throw std::invalid_argument("localize: sample_rate must be positive");
  for (const auto& t : taps)
    if (t.recording.sample_rate != sr)
      throw std::invalid_argument("localize: taps disagree on sample rate");
  for (std::size_t i = 0; i < taps.size(); ++i)
    for (std::size_t j = i + 1; j < taps.size(); ++j)
      if (taps[i].position_m == taps[j].position_m)
        throw std::invalid_argument("localize: tap positions must be distinct");

  std::vector<std::size_t> edge(taps.size());
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const auto& s = taps[i].recording.samples;
    edge[i] = s.empty() ? detail::kNoEdge
                        : detail::leading_edge(s, 5.0 * detail::robust_noise_rms(s));
    if (edge[i] == detail::kNoEdge)
      throw std::runtime_error("localize: no detectable signal at tap " +
                               std::to_string(taps[i].position_m) + " m");
  }

  // Pairwise arrival-time differences in the shared time base.
  const auto radius = static_cast<long long>(std::llround(0.002 * sr));
  std::vector<std::size_t> pi, pj;
  std::vector<double> delta;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    for (std::size_t j = i + 1; j < taps.size(); ++j) {
      const long long coarse =
          static_cast<long long>(edge[i]) - static_cast<long long>(edge[j]);
      const long long lag =
          detail::refine_lag(taps[i].recording.samples, taps[j].recording.samples, coarse, radius);
      pi.push_back(i);
      pj.push_back(j);
      delta.push_back(taps[i].clock_offset_s - taps[j].clock_offset_s +
                      static_cast<double>(lag) / sr);
    }
  }

  LocalizationEstimate est;
  est.speed_mps = speed_mps;

  if (taps.size() == 2) {
    const bool ordered = taps[0].position_m < taps[1].position_m;
    const double lo = ordered ? taps[0].position_m : taps[1].position_m;
    const double hi = ordered ? taps[1].position_m : taps[0].position_m;
    // Reach difference toward the lower-position tap.
    double r = speed_mps * delta[0] * (ordered ? 1.0 : -1.0);
    const double span = hi - lo;
    const double slack = 2.0 * speed_mps / sr;  // a couple of samples of travel
    if (std::abs(r) > span + slack)
      throw std::runtime_error(
          "localize: infeasible geometry, arrival difference exceeds the tap span");
    est.extrapolated = std::abs(r) >= span;
    r = std::clamp(r, -span, span);
    est.position_m = 0.5 * (lo + hi + r);
    est.residual_s = 0.0;
    return est;
  }

  std::vector<double> q;
  for (const auto& t : taps) q.push_back(t.position_m);
  std::sort(q.begin(), q.end());

  auto misfit = [&](double x) {
    double j2 = 0.0;
    for (std::size_t p = 0; p < delta.size(); ++p) {
      const double reach =
          std::abs(x - taps[pi[p]].position_m) - std::abs(x - taps[pj[p]].position_m);
      const double e = speed_mps * delta[p] - reach;
      j2 += e * e;
    }
    return j2;
  };

  double best_x = q.front();
  double best_j = misfit(best_x);
  for (std::size_t s = 0; s + 1 < q.size(); ++s) {
    const double left = q[s], right = q[s + 1];
    const double mid = 0.5 * (left + right);
    // On this segment each pairwise reach is a + b*x; solve the quadratic.
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < delta.size(); ++p) {
      const double b = (mid > taps[pi[p]].position_m ? 1.0 : -1.0) -
                       (mid > taps[pj[p]].position_m ? 1.0 : -1.0);
      const double a = (std::abs(mid - taps[pi[p]].position_m) -
                        std::abs(mid - taps[pj[p]].position_m)) -
                       b * mid;
      num += b * (speed_mps * delta[p] - a);
      den += b * b;
    }
    const double x = den > 0.0 ? std::clamp(num / den, left, right) : mid;
    for (double cand : {x, left, right}) {
      const double j2 = misfit(cand);
      if (j2 < best_j - 1e-15 * (1.0 + best_j)) {
        best_j = j2;
        best_x = cand;
      }
    }
  }

  est.position_m = best_x;
  est.residual_s = std::sqrt(best_j / static_cast<double>(delta.size())) / speed_mps;
  est.extrapolated = best_x <= q.front() || best_x >= q.back();
  return est;
}

// ---- stealth margin --------------------------------------------------------

struct StealthReport {
  double margin_db = 0.0;
  std::size_t zero_bins_excluded = 0;
};

// Attacker-side dual of detect: the worst-bin level of an attack spectrum
// over the baseline, in dB. Positive margins are what the detector keys on;
// a transmission aiming to stay hidden wants this at or below the
// calibrated threshold (in dB) of whatever detector it expects to face.
inline StealthReport stealth_margin(const Spectrum& attack_psd, const NoiseBaseline& baseline) {
  StealthReport rep;
  rep.margin_db = 10.0 * std::log10(detail::max_band_ratio(attack_psd, baseline,
                                                           &rep.zero_bins_excluded));
  return rep;
}

}  // namespace pipetone
