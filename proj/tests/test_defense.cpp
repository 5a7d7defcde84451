#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pipetone/capacity.hpp"
#include "pipetone/channel.hpp"
#include "pipetone/defense.hpp"
#include "pipetone/modem.hpp"
#include "pipetone/rng.hpp"
#include "pipetone/signal.hpp"

using namespace pipetone;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

SampleBuffer white_noise(double dur_s, double sigma, std::uint64_t seed,
                         double sample_rate = 44100.0) {
  SampleBuffer b;
  b.sample_rate = sample_rate;
  b.samples.resize(static_cast<std::size_t>(dur_s * sample_rate));
  Rng rng(seed);
  for (auto& x : b.samples) x = sigma * rng.gaussian();
  return b;
}

// One-sided density of white noise with per-sample standard deviation sigma.
double white_density(double sigma, double sample_rate) {
  return 2.0 * sigma * sigma / sample_rate;
}

// Decaying ping with a hard onset at sample `offset`, identical across taps
// so cross-correlation refinement lines up exactly.
ReceiverTap make_tap(double position_m, std::size_t offset, std::size_t total_len,
                     double scale = 1.0, double clock_offset_s = 0.0) {
  ReceiverTap tap;
  tap.position_m = position_m;
  tap.clock_offset_s = clock_offset_s;
  tap.recording.sample_rate = 44100.0;
  tap.recording.samples.assign(total_len, 0.0);
  for (std::size_t j = 0; j < 300 && offset + j < total_len; ++j) {
    tap.recording.samples[offset + j] =
        scale * std::cos(2.0 * 3.14159265358979323846 * 2000.0 * j / 44100.0) *
        std::exp(-static_cast<double>(j) / 180.0);
  }
  return tap;
}

}  // namespace

TEST_CASE("baseline from white noise is flat across the spectrum", "[defense]") {
  const double sigma = 1e-3;
  const auto noise = white_noise(480.0, sigma, 20260101);
  const auto base = build_baseline(noise, 15000.0, 20000.0);

  REQUIRE(base.sample_rate == 44100.0);
  REQUIRE(base.train_dur_s == Approx(480.0));
  REQUIRE(base.f_lo_hz == 15000.0);
  REQUIRE(base.f_hi_hz == 20000.0);
  REQUIRE(base.psd.values.size() == kBaselineSegment / 2 + 1);
  REQUIRE(base.psd.bin_hz == Approx(44100.0 / 8192.0));

  // Interior bins (the half-weight DC and Nyquist bins excluded) sit within
  // 10% of the true density, and the average is far tighter.
  const double d = white_density(sigma, 44100.0);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 1; k + 1 < base.psd.values.size(); ++k) {
    const double rel = base.psd.values[k] / d;
    REQUIRE(rel > 0.9);
    REQUIRE(rel < 1.1);
    sum += rel;
    ++n;
  }
  REQUIRE(sum / static_cast<double>(n) == Approx(1.0).margin(0.01));
}

TEST_CASE("baseline from silence is zero and flagged by the detector", "[defense]") {
  SampleBuffer silence;
  silence.sample_rate = 44100.0;
  silence.samples.assign(6 * 44100, 0.0);
  const auto base = build_baseline(silence, 15000.0, 20000.0);
  for (double v : base.psd.values) REQUIRE(v == 0.0);

  SampleBuffer window;
  window.sample_rate = 44100.0;
  window.samples.assign(44100, 0.0);
  REQUIRE_THROWS_WITH(detect(window, base, 0.01), ContainsSubstring("degenerate baseline"));
}

TEST_CASE("baseline input validation", "[defense]") {
  const auto short_rec = white_noise(4.0, 1e-3, 7);
  REQUIRE_THROWS_WITH(build_baseline(short_rec, 15000.0, 20000.0),
                      ContainsSubstring("at least 5 s"));

  const auto rec = white_noise(5.0, 1e-3, 7);
  REQUIRE_THROWS_WITH(build_baseline(rec, 15000.0, 30000.0), ContainsSubstring("past Nyquist"));
  REQUIRE_THROWS_WITH(build_baseline(rec, 20000.0, 15000.0), ContainsSubstring("f_lo < f_hi"));

  SampleBuffer no_rate;
  no_rate.samples.assign(300000, 0.0);
  REQUIRE_THROWS_WITH(build_baseline(no_rate, 15000.0, 20000.0),
                      ContainsSubstring("sample_rate"));
}

TEST_CASE("detector parameter validation", "[defense]") {
  const auto base = build_baseline(white_noise(5.0, 1e-3, 11), 15000.0, 20000.0);
  REQUIRE_THROWS_WITH(Detector(base, 0.0, 44100), ContainsSubstring("(0, 0.5)"));
  REQUIRE_THROWS_WITH(Detector(base, 0.6, 44100), ContainsSubstring("(0, 0.5)"));
  REQUIRE_THROWS_WITH(Detector(base, 0.01, 13230), ContainsSubstring("0.5 s"));
}

TEST_CASE("detector holds the requested false alarm rate", "[defense]") {
  const double sigma = 1e-3;
  const auto base = build_baseline(white_noise(120.0, sigma, 20260102), 15000.0, 20000.0);
  const std::size_t win_len = 44100;
  const Detector det(base, 0.01, win_len);
  REQUIRE(det.threshold() > 1.0);

  // Noise-only windows from the same process: empirical false alarms within
  // +-50% of the requested 1%.
  std::size_t false_alarms = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto w = white_noise(1.0, sigma, 5000 + i);
    if (det.check(w).detected) ++false_alarms;
  }
  REQUIRE(false_alarms >= 5);
  REQUIRE(false_alarms <= 15);

  // A tone 10 dB above the baseline in a single bin stands out, and the
  // stealth margin is the same statistic in dB: both sides of the duality
  // agree window by window.
  const std::size_t kbin = 3158;
  const double f = static_cast<double>(kbin) * base.psd.bin_hz;
  const double amp = std::sqrt(20.0 * white_density(sigma, 44100.0) * base.psd.bin_hz);
  const double threshold_db = 10.0 * std::log10(det.threshold());
  for (std::size_t i = 0; i < 5; ++i) {
    auto w = white_noise(1.0, sigma, 9000 + i);
    const auto tone = gen_tone(f, amp, 1.0, 0.0, 44100.0);
    for (std::size_t j = 0; j < w.samples.size(); ++j) w.samples[j] += tone.samples[j];
    const auto r = det.check(w);
    REQUIRE(r.detected);
    REQUIRE(r.score > r.threshold);

    const auto margin = stealth_margin(power_spectral_density(w, kBaselineSegment), base);
    REQUIRE(margin.margin_db == Approx(10.0 * std::log10(r.score)).margin(1e-9));
    REQUIRE((margin.margin_db > threshold_db) == r.detected);
  }

  // The one-shot helper calibrates identically (same seed, same length).
  auto w = white_noise(1.0, sigma, 9000);
  const auto tone = gen_tone(f, amp, 1.0, 0.0, 44100.0);
  for (std::size_t j = 0; j < w.samples.size(); ++j) w.samples[j] += tone.samples[j];
  const auto one_shot = detect(w, base, 0.01);
  REQUIRE(one_shot.threshold == det.threshold());
  REQUIRE(one_shot.detected);

  // Windows must match what the detector was calibrated for.
  SampleBuffer wrong_rate = white_noise(1.0, sigma, 42);
  wrong_rate.sample_rate = 48000.0;
  REQUIRE_THROWS_WITH(det.check(wrong_rate), ContainsSubstring("sample rate"));
  const auto wrong_len = white_noise(0.75, sigma, 42);
  REQUIRE_THROWS_WITH(det.check(wrong_len), ContainsSubstring("length"));
}

TEST_CASE("localize finds the midpoint exactly", "[defense]") {
  const std::vector<ReceiverTap> taps = {make_tap(0.0, 1000, 2500),
                                         make_tap(30.48, 1000, 2500)};
  const auto est = localize(taps, 3000.0);
  REQUIRE(est.position_m == 15.24);
  REQUIRE(est.residual_s == 0.0);
  REQUIRE(est.speed_mps == 3000.0);
  REQUIRE_FALSE(est.extrapolated);
}

TEST_CASE("localize inverts an off-center transmitter within one sample of travel",
          "[defense]") {
  // Transmitter at 7.62 m between taps at 0 and 30.48 m: arrivals at
  // 7.62/3000 s and 22.86/3000 s, rounded to the sample grid.
  const std::vector<ReceiverTap> taps = {make_tap(0.0, 112, 2500),
                                         make_tap(30.48, 336, 2500)};
  const auto est = localize(taps, 3000.0);
  REQUIRE(std::abs(est.position_m - 7.62) <= 3000.0 / 44100.0);
  REQUIRE_FALSE(est.extrapolated);
}

TEST_CASE("localize with three taps keeps the residual under a sample", "[defense]") {
  // Transmitter at 6 m, taps at 0/10/20 m: arrival samples round to 88/59/206.
  const std::vector<ReceiverTap> taps = {make_tap(0.0, 88, 2500), make_tap(10.0, 59, 2500),
                                         make_tap(20.0, 206, 2500)};
  const auto est = localize(taps, 3000.0);
  REQUIRE(std::abs(est.position_m - 6.0) <= 2.0 * 3000.0 / 44100.0);
  REQUIRE(est.residual_s < 1.0 / 44100.0);
  REQUIRE_FALSE(est.extrapolated);
}

TEST_CASE("localize corrects per-tap clock offsets", "[defense]") {
  // Tap B's recorder started 10 ms early, so the burst lands 441 samples
  // later in its buffer; the declared offset cancels the shift exactly.
  const std::vector<ReceiverTap> taps = {make_tap(0.0, 1000, 2500),
                                         make_tap(30.48, 1441, 2500, 1.0, -0.010)};
  const auto est = localize(taps, 3000.0);
  REQUIRE(est.position_m == 15.24);
}

TEST_CASE("localize is scale invariant", "[defense]") {
  const std::vector<ReceiverTap> reference = {make_tap(0.0, 112, 2500),
                                              make_tap(30.48, 336, 2500)};
  const std::vector<ReceiverTap> scaled = {make_tap(0.0, 112, 2500, 3.7),
                                           make_tap(30.48, 336, 2500)};
  REQUIRE(localize(scaled, 3000.0).position_m == localize(reference, 3000.0).position_m);
}

TEST_CASE("localize pins an outside transmitter to the outermost tap", "[defense]") {
  // Transmitter at 25.1 m, beyond taps at 0/10/20 m: every pairwise delay
  // saturates, so the best the geometry can say is "at or past the end".
  const std::vector<ReceiverTap> taps = {make_tap(0.0, 369, 2500), make_tap(10.0, 222, 2500),
                                         make_tap(20.0, 75, 2500)};
  const auto est = localize(taps, 3000.0);
  REQUIRE(est.position_m == 20.0);
  REQUIRE(est.extrapolated);
  REQUIRE(est.residual_s == Approx(0.0).margin(1e-12));
}

TEST_CASE("localize rejects impossible inputs", "[defense]") {
  // Arrival difference of 882 samples reads as 60 m of travel between taps
  // only 10 m apart.
  const std::vector<ReceiverTap> infeasible = {make_tap(0.0, 100, 2500),
                                               make_tap(10.0, 982, 2500)};
  REQUIRE_THROWS_WITH(localize(infeasible, 3000.0), ContainsSubstring("infeasible"));

  std::vector<ReceiverTap> silent = {make_tap(0.0, 100, 2500), make_tap(10.0, 120, 2500)};
  silent[1].recording.samples.assign(2500, 0.0);
  REQUIRE_THROWS_WITH(localize(silent, 3000.0), ContainsSubstring("no detectable signal"));

  const std::vector<ReceiverTap> lone = {make_tap(0.0, 100, 2500)};
  REQUIRE_THROWS_WITH(localize(lone, 3000.0), ContainsSubstring("two taps"));

  const std::vector<ReceiverTap> stacked = {make_tap(5.0, 100, 2500),
                                            make_tap(5.0, 120, 2500)};
  REQUIRE_THROWS_WITH(localize(stacked, 3000.0), ContainsSubstring("distinct"));

  std::vector<ReceiverTap> mixed_rates = {make_tap(0.0, 100, 2500), make_tap(10.0, 120, 2500)};
  mixed_rates[1].recording.sample_rate = 48000.0;
  REQUIRE_THROWS_WITH(localize(mixed_rates, 3000.0), ContainsSubstring("sample rate"));

  const std::vector<ReceiverTap> ok = {make_tap(0.0, 100, 2500), make_tap(10.0, 120, 2500)};
  REQUIRE_THROWS_WITH(localize(ok, 0.0), ContainsSubstring("speed"));
}

TEST_CASE("stealth margin measures the worst band bin", "[defense]") {
  const auto base = build_baseline(white_noise(6.0, 1e-3, 13), 15000.0, 20000.0);

  const auto level = stealth_margin(base.psd, base);
  REQUIRE(level.margin_db == Approx(0.0).margin(1e-9));
  REQUIRE(level.zero_bins_excluded == 0);

  Spectrum hot = base.psd;
  hot.values[3000] *= 10.0;
  REQUIRE(stealth_margin(hot, base).margin_db == Approx(10.0).margin(1e-9));

  const auto coarse = power_spectral_density(white_noise(1.0, 1e-3, 14), 4096);
  REQUIRE_THROWS_WITH(stealth_margin(coarse, base), ContainsSubstring("do not match"));
}

TEST_CASE("stealth margin skips baseline nulls and flags them", "[defense]") {
  NoiseBaseline base;
  base.psd.bin_hz = 100.0;
  base.psd.values.assign(65, 1e-9);
  base.psd.values[15] = 0.0;
  base.sample_rate = 12800.0;
  base.train_dur_s = 6.0;
  base.f_lo_hz = 1000.0;
  base.f_hi_hz = 3000.0;

  Spectrum attack = base.psd;
  attack.values[15] = 5e-9;  // energy only the dead bin would see
  const auto rep = stealth_margin(attack, base);
  REQUIRE(rep.zero_bins_excluded == 1);
  REQUIRE(rep.margin_db == Approx(0.0).margin(1e-9));

  NoiseBaseline dead = base;
  for (std::size_t k = 10; k <= 30; ++k) dead.psd.values[k] = 0.0;
  REQUIRE_THROWS_WITH(stealth_margin(attack, dead), ContainsSubstring("degenerate"));
}

TEST_CASE("a modem transmission stands far above the quiet preset's noise floor",
          "[defense]") {
  const auto model = load_preset(PIPETONE_PRESET_DIR "/OCS.json");
  const auto base = build_baseline(noise_floor(model, 6.0, 44100.0, 77), 15000.0, 20000.0);
  REQUIRE(base.psd.values[3000] > 0.0);

  const auto plan = plan_subchannels(15000.0, 20000.0, 100.0);
  std::vector<std::uint8_t> payload(128);
  Rng prng(31);
  for (auto& v : payload) v = static_cast<std::uint8_t>(prng.next_u64() & 0xff);
  const auto bits = encode_frame(payload, FecScheme::hamming74);
  const auto clip = modulate(bits, plan, 0.02, 0.02, 44100.0);
  const auto prop = propagate(clip, model, 51.816, true, 424242);

  // Half-second window over the data section of the received clip.
  const auto delay = static_cast<std::size_t>(std::llround(prop.delay_s * 44100.0));
  SampleBuffer window;
  window.sample_rate = 44100.0;
  const std::size_t start = delay + 11025 + 2000;
  window.samples.assign(prop.buffer.samples.begin() + start,
                        prop.buffer.samples.begin() + start + 22050);

  const auto verdict = detect(window, base, 0.01);
  REQUIRE(verdict.detected);
  REQUIRE(verdict.score > verdict.threshold);

  const auto margin = stealth_margin(power_spectral_density(window, kBaselineSegment), base);
  REQUIRE(margin.zero_bins_excluded == 0);
  REQUIRE(margin.margin_db > 20.0);
  REQUIRE(margin.margin_db == Approx(10.0 * std::log10(verdict.score)).margin(1e-9));
  REQUIRE((margin.margin_db > 10.0 * std::log10(verdict.threshold)) == verdict.detected);
}
