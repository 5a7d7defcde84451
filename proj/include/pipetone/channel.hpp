#pragma once

// Synthetic pipe-run channel. A run is described by a measured-style gain
// grid (frequency x tap distance anchors, bilinear in log-frequency and
// distance), optional echo taps, a spectral spreading width, and a noise
// floor (white + 1/f). Propagation is frequency-domain filtering:
//
//   received = IFFT(input spectrum * gain(f, d) * echo response)
//              + spread component            (seeded, energy tied to sigma)
//              + delay(distance / speed)
//              + noise                       (seeded white + 1/f)
//
// The spread component models how a narrow transmitted line smears into a
// band on a real pipe: the filtered spectrum's power is smoothed with a
// Gaussian of width dispersion_sigma_hz and re-synthesized with random
// phases. A literal complex-spectrum convolution would multiply the time
// signal by a Gaussian envelope and annihilate it, so the smearing is done
// on power and added as a separate component whose energy fraction grows
// with sigma. Everything downstream of a seed is bit-reproducible.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipetone/fft.hpp"
#include "pipetone/rng.hpp"
#include "pipetone/signal.hpp"

namespace pipetone {

struct MultipathTap {
  double delay_s = 0.0;
  double amplitude = 0.0;
};

struct PipeRunModel {
  std::string name;
  double medium_speed_mps = 0.0;
  std::vector<double> distances_m;              // tap positions, ascending
  std::vector<double> grid_freqs_hz;            // anchor frequencies, ascending
  std::vector<std::vector<double>> grid_gains;  // [anchor freq][tap]
  double dispersion_sigma_hz = 30.0;
  double noise_white = 0.0;  // power density per Hz
  double noise_pink = 0.0;   // power density per Hz at 1 Hz, falling as 1/f
  std::vector<MultipathTap> multipath_taps;
  std::string provenance;

  double min_distance_m() const { return distances_m.front(); }
  double max_distance_m() const { return distances_m.back(); }
};

struct PropagationResult {
  SampleBuffer buffer;
  double delay_s = 0.0;  // exact distance / medium_speed, before sample rounding
  double distance_m = 0.0;
};

struct FrequencyResponse {
  std::vector<double> freq_hz;
  std::vector<double> gain;
};

namespace detail {

inline double lerp(double a, double b, double w) { return a + (b - a) * w; }

// Interpolation weight of x between xs[i] and xs[i+1]; clamps outside.
inline double bracket(const std::vector<double>& xs, double x, std::size_t& i) {
  if (x <= xs.front()) {
    i = 0;
    return 0.0;
  }
  if (x >= xs.back()) {
    i = xs.size() - 2;
    return 1.0;
  }
  std::size_t lo = 0, hi = xs.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (xs[mid] <= x)
      lo = mid;
    else
      hi = mid;
  }
  i = lo;
  return (x - xs[lo]) / (xs[hi] - xs[lo]);
}

}  // namespace detail

// Anchor-grid gain, bilinear in (log f, distance). Frequencies outside the
// anchor range hold the edge value; distances must be inside the tap span.
inline double grid_gain(const PipeRunModel& m, double freq_hz, double distance_m) {
  if (distance_m < m.min_distance_m() - 1e-9 || distance_m > m.max_distance_m() + 1e-9)
    throw std::invalid_argument("channel: distance outside the modeled tap span");
  double wd = 0.0;
  std::size_t di = 0;
  if (m.distances_m.size() == 1) {
    di = 0;
    wd = 0.0;
  } else {
    wd = detail::bracket(m.distances_m, distance_m, di);
  }
  const std::size_t d2 = std::min(di + 1, m.distances_m.size() - 1);

  double wf = 0.0;
  std::size_t fi = 0;
  if (m.grid_freqs_hz.size() == 1) {
    fi = 0;
  } else if (freq_hz <= m.grid_freqs_hz.front()) {
    fi = 0;
    wf = 0.0;
  } else if (freq_hz >= m.grid_freqs_hz.back()) {
    fi = m.grid_freqs_hz.size() - 2;
    wf = 1.0;
  } else {
    std::size_t lo = 0, hi = m.grid_freqs_hz.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (m.grid_freqs_hz[mid] <= freq_hz)
        lo = mid;
      else
        hi = mid;
    }
    fi = lo;
    wf = (std::log(freq_hz) - std::log(m.grid_freqs_hz[lo])) /
         (std::log(m.grid_freqs_hz[hi]) - std::log(m.grid_freqs_hz[lo]));
  }
  const std::size_t f2 = std::min(fi + 1, m.grid_freqs_hz.size() - 1);
  const double g_lo = detail::lerp(m.grid_gains[fi][di], m.grid_gains[fi][d2], wd);
  const double g_hi = detail::lerp(m.grid_gains[f2][di], m.grid_gains[f2][d2], wd);
  return detail::lerp(g_lo, g_hi, wf);
}

// Echo response: direct path plus the configured taps.
inline cdouble multipath_response(const PipeRunModel& m, double freq_hz) {
  cdouble h{1.0, 0.0};
  for (const auto& tap : m.multipath_taps)
    h += tap.amplitude * std::polar(1.0, -2.0 * kPi * freq_hz * tap.delay_s);
  return h;
}

inline double gain_at(const PipeRunModel& m, double freq_hz, double distance_m) {
  return grid_gain(m, freq_hz, distance_m) * std::abs(multipath_response(m, freq_hz));
}

inline FrequencyResponse frequency_response(const PipeRunModel& m, double distance_m,
                                            const std::vector<double>& freqs_hz) {
  if (freqs_hz.empty()) throw std::invalid_argument("frequency_response: no frequencies given");
  FrequencyResponse r;
  r.freq_hz = freqs_hz;
  r.gain.reserve(freqs_hz.size());
  for (double f : freqs_hz) r.gain.push_back(gain_at(m, f, distance_m));
  return r;
}

namespace detail {

// Energy fraction of the spread component as a function of the spreading
// width. Zero width means a clean line; the cap keeps the direct path
// dominant so peak readings stay anchored at the transmitted frequency.
inline double spread_energy_fraction(double sigma_hz) {
  return std::min(0.8, 0.025 * sigma_hz);
}

inline void add_noise(const PipeRunModel& m, std::vector<double>& samples, double sample_rate,
                      std::uint64_t seed) {
  if (m.noise_white > 0.0) {
    Rng rng(derive_seed(seed, 2));
    const double sd = std::sqrt(m.noise_white * sample_rate / 2.0);
    for (auto& s : samples) s += sd * rng.gaussian();
  }
  if (m.noise_pink > 0.0) {
    Rng rng(derive_seed(seed, 3));
    const double pink = m.noise_pink;
    const auto buf =
        synth_noise(samples.size(), sample_rate, [pink](double f) { return pink / f; }, rng);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] += buf.samples[i];
  }
}

}  // namespace detail

inline PropagationResult propagate(const SampleBuffer& input, const PipeRunModel& m,
                                   double distance_m, bool noise_on, std::uint64_t seed) {
  if (input.samples.empty()) throw std::invalid_argument("propagate: empty input");
  if (input.sample_rate <= 0.0) throw std::invalid_argument("propagate: sample_rate must be positive");
  if (distance_m < m.min_distance_m() - 1e-9 || distance_m > m.max_distance_m() + 1e-9)
    throw std::invalid_argument("channel: distance outside the modeled tap span");

  const double sr = input.sample_rate;
  const std::size_t L = input.samples.size();
  std::size_t tap_max = 0;
  for (const auto& tap : m.multipath_taps)
    tap_max = std::max(tap_max, static_cast<std::size_t>(std::llround(tap.delay_s * sr)));
  const std::size_t keep = L + tap_max;
  const std::size_t P = next_pow2(keep + 64);

  auto Y = fft_real(input.samples, P);
  const double bin_hz = sr / static_cast<double>(P);
  for (std::size_t k = 0; k <= P / 2; ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    const cdouble h = grid_gain(m, f, distance_m) * multipath_response(m, f);
    Y[k] *= h;
    if (k > 0 && k < P / 2) Y[P - k] = std::conj(Y[k]);
  }

  // Spread component: Gaussian smear of the filtered power spectrum,
  // random-phase resynthesis, energy pinned to a fraction of the direct
  // path's. Computed before the inverse transform consumes Y.
  std::vector<double> spread_power;
  const double rho = detail::spread_energy_fraction(m.dispersion_sigma_hz);
  if (rho > 0.0) {
    const double sigma_bins = m.dispersion_sigma_hz / bin_hz;
    const int reach = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_bins)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * reach + 1));
    double ksum = 0.0;
    for (int j = -reach; j <= reach; ++j) {
      const double w = std::exp(-0.5 * (j / sigma_bins) * (j / sigma_bins));
      kernel[static_cast<std::size_t>(j + reach)] = w;
      ksum += w;
    }
    for (auto& w : kernel) w /= ksum;
    const int half = static_cast<int>(P / 2);
    spread_power.assign(static_cast<std::size_t>(half) + 1, 0.0);
    for (int k = 0; k <= half; ++k) {
      double acc = 0.0;
      for (int j = -reach; j <= reach; ++j) {
        int idx = k - j;
        if (idx < 0) idx = -idx;            // Hermitian reflection at DC
        if (idx > half) idx = 2 * half - idx;  // and at Nyquist
        acc += kernel[static_cast<std::size_t>(j + reach)] * std::norm(Y[static_cast<std::size_t>(idx)]);
      }
      spread_power[static_cast<std::size_t>(k)] = acc;
    }
  }

  std::vector<cdouble> y = Y;
  ifft(y);
  std::vector<double> direct(keep);
  for (std::size_t i = 0; i < keep; ++i) direct[i] = y[i].real();

  if (rho > 0.0) {
    double direct_energy = 0.0;
    for (double v : direct) direct_energy += v * v;
    if (direct_energy > 0.0) {
      Rng rng(derive_seed(seed, 1));
      std::vector<cdouble> Z(P, cdouble{0.0, 0.0});
      for (std::size_t k = 1; k < P / 2; ++k) {
        const double mag = std::sqrt(spread_power[k]);
        const double theta = 2.0 * kPi * rng.uniform();
        Z[k] = std::polar(mag, theta);
        Z[P - k] = std::conj(Z[k]);
      }
      ifft(Z);
      double ped_energy = 0.0;
      for (std::size_t i = 0; i < keep; ++i) ped_energy += Z[i].real() * Z[i].real();
      if (ped_energy > 0.0) {
        const double scale = std::sqrt(rho * direct_energy / ped_energy);
        for (std::size_t i = 0; i < keep; ++i) direct[i] += scale * Z[i].real();
      }
    }
  }

  const double delay_s = distance_m / m.medium_speed_mps;
  const std::size_t delay_samples = static_cast<std::size_t>(std::llround(delay_s * sr));

  PropagationResult out;
  out.delay_s = delay_s;
  out.distance_m = distance_m;
  out.buffer.sample_rate = sr;
  out.buffer.samples.assign(delay_samples, 0.0);
  out.buffer.samples.insert(out.buffer.samples.end(), direct.begin(), direct.end());

  if (noise_on) detail::add_noise(m, out.buffer.samples, sr, seed);
  return out;
}

// Noise-only recording at a tap: what a receiver hears with no transmission.
inline SampleBuffer noise_floor(const PipeRunModel& m, double dur_s, double sample_rate,
                                std::uint64_t seed) {
  if (dur_s <= 0.0) throw std::invalid_argument("noise_floor: dur_s must be positive");
  if (sample_rate <= 0.0) throw std::invalid_argument("noise_floor: sample_rate must be positive");
  SampleBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.assign(static_cast<std::size_t>(std::llround(dur_s * sample_rate)), 0.0);
  detail::add_noise(m, buf.samples, sample_rate, seed);
  return buf;
}

// ---- preset files -----------------------------------------------------------

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) throw std::runtime_error("preset: missing field '" + key + "'");
  if (!j[key].is_number()) throw std::runtime_error("preset: field '" + key + "' must be a number");
  return j[key].get<double>();
}

}  // namespace detail

inline PipeRunModel load_preset_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("preset: not valid JSON: ") + e.what());
  }

  PipeRunModel m;
  if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty())
    throw std::runtime_error("preset: missing field 'name'");
  m.name = j["name"].get<std::string>();

  m.medium_speed_mps = detail::require_number(j, "medium_speed_mps");
  if (m.medium_speed_mps <= 0.0)
    throw std::runtime_error("preset: field 'medium_speed_mps' must be positive");

  if (!j.contains("distances") || !j["distances"].is_object())
    throw std::runtime_error("preset: missing field 'distances'");
  const auto& dist = j["distances"];
  if (!dist.contains("unit") || !dist["unit"].is_string())
    throw std::runtime_error("preset: missing field 'distances.unit'");
  const std::string unit = dist["unit"].get<std::string>();
  double to_m = 0.0;
  if (unit == "m")
    to_m = 1.0;
  else if (unit == "ft")
    to_m = 0.3048;
  else
    throw std::runtime_error("preset: field 'distances.unit' must be 'm' or 'ft'");
  if (!dist.contains("values") || !dist["values"].is_array() || dist["values"].empty())
    throw std::runtime_error("preset: field 'distances.values' must be a non-empty array");
  for (const auto& v : dist["values"]) {
    if (!v.is_number() || v.get<double>() <= 0.0)
      throw std::runtime_error("preset: field 'distances.values' entries must be positive numbers");
    m.distances_m.push_back(v.get<double>() * to_m);
  }
  for (std::size_t i = 1; i < m.distances_m.size(); ++i)
    if (m.distances_m[i] <= m.distances_m[i - 1])
      throw std::runtime_error("preset: field 'distances.values' must be strictly ascending");

  if (!j.contains("gain_grid") || !j["gain_grid"].is_array() || j["gain_grid"].empty())
    throw std::runtime_error("preset: field 'gain_grid' must be a non-empty array");
  for (const auto& row : j["gain_grid"]) {
    const double f = detail::require_number(row, "freq_hz");
    if (f <= 0.0) throw std::runtime_error("preset: field 'gain_grid.freq_hz' must be positive");
    if (!row.contains("gains") || !row["gains"].is_array() ||
        row["gains"].size() != m.distances_m.size())
      throw std::runtime_error(
          "preset: field 'gain_grid.gains' must list one gain per distance");
    std::vector<double> gains;
    for (const auto& g : row["gains"]) {
      if (!g.is_number())
        throw std::runtime_error("preset: field 'gain_grid.gains' entries must be numbers");
      const double gv = g.get<double>();
      if (gv < 0.0 || !std::isfinite(gv))
        throw std::runtime_error("preset: field 'gain_grid.gains' entries must be >= 0 and finite");
      gains.push_back(gv);
    }
    m.grid_freqs_hz.push_back(f);
    m.grid_gains.push_back(std::move(gains));
  }
  for (std::size_t i = 1; i < m.grid_freqs_hz.size(); ++i)
    if (m.grid_freqs_hz[i] <= m.grid_freqs_hz[i - 1])
      throw std::runtime_error("preset: field 'gain_grid.freq_hz' must be strictly ascending");

  m.noise_white = detail::require_number(j, "noise_white");
  m.noise_pink = detail::require_number(j, "noise_pink");
  if (m.noise_white < 0.0) throw std::runtime_error("preset: field 'noise_white' must be >= 0");
  if (m.noise_pink < 0.0) throw std::runtime_error("preset: field 'noise_pink' must be >= 0");

  if (j.contains("dispersion_sigma_hz")) {
    if (!j["dispersion_sigma_hz"].is_number() || j["dispersion_sigma_hz"].get<double>() < 0.0)
      throw std::runtime_error("preset: field 'dispersion_sigma_hz' must be a number >= 0");
    m.dispersion_sigma_hz = j["dispersion_sigma_hz"].get<double>();
  }

  if (j.contains("multipath_taps")) {
    if (!j["multipath_taps"].is_array())
      throw std::runtime_error("preset: field 'multipath_taps' must be an array");
    for (const auto& t : j["multipath_taps"]) {
      MultipathTap tap;
      tap.delay_s = detail::require_number(t, "delay_s");
      tap.amplitude = detail::require_number(t, "amplitude");
      if (tap.delay_s < 0.0)
        throw std::runtime_error("preset: field 'multipath_taps.delay_s' must be >= 0");
      if (!std::isfinite(tap.amplitude))
        throw std::runtime_error("preset: field 'multipath_taps.amplitude' must be finite");
      m.multipath_taps.push_back(tap);
    }
  }

  if (j.contains("provenance")) {
    if (!j["provenance"].is_string())
      throw std::runtime_error("preset: field 'provenance' must be a string");
    m.provenance = j["provenance"].get<std::string>();
  }
  return m;
}

inline PipeRunModel load_preset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("preset: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_preset_text(ss.str());
}

}  // namespace pipetone
