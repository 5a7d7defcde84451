#pragma once

// Multi-tone modem over the subchannel grid: CRC-framed payloads, simple FEC,
// chirp-preamble synchronization, on-off keyed tones, adaptive-threshold
// demodulation.
//
// Every subchannel carries one bit per symbol by switching its tone on or
// off. With the grid spacing at 100 Hz and 20 ms symbols, each symbol window
// holds a whole number of cycles of every grid tone, so the single-frequency
// correlations are exactly orthogonal and a subchannel never reads its
// neighbor's energy. The preamble is a full-band descending chirp, the same
// shape the volume calibration uses, found by normalized cross-correlation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipetone/capacity.hpp"
#include "pipetone/fft.hpp"
#include "pipetone/signal.hpp"

namespace pipetone {

enum class FecScheme { none, hamming74, repetition3 };

inline constexpr double kPreambleSeconds = 0.25;

// The sync chirp rides well below the drive level. Correlation detection only
// needs contrast, not loudness, and on a dispersive run a hot broadband chirp
// would carry most of the clip's energy and smear into a noise pedestal that
// sits on top of the much quieter data tones for the rest of the frame.
inline constexpr double kPreambleLevel = 0.1;

namespace detail {

inline const std::array<std::uint32_t, 256>& crc32_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

}  // namespace detail

// Plain CRC-32 (the zip/ethernet one): reflected, init and final xor all-ones.
inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    c = detail::crc32_table()[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32(const std::vector<std::uint8_t>& data) {
  return crc32(data.data(), data.size());
}

// Bit order is LSB-first within each byte, both directions.
inline std::vector<std::uint8_t> bytes_to_bits(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::uint8_t> bits;
  bits.reserve(bytes.size() * 8);
  for (std::uint8_t b : bytes)
    for (int i = 0; i < 8; ++i) bits.push_back((b >> i) & 1u);
  return bits;
}

// Trailing bits short of a whole byte are dropped.
inline std::vector<std::uint8_t> bits_to_bytes(const std::vector<std::uint8_t>& bits) {
  std::vector<std::uint8_t> bytes(bits.size() / 8, 0);
  for (std::size_t i = 0; i < bytes.size() * 8; ++i)
    if (bits[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return bytes;
}

namespace detail {

// Hamming(7,4), parity bits in the classic 1-2-4 positions. d is 4 data
// bits in stream order; the syndrome of a received word is the 1-based
// position of a single flipped bit, or zero.
inline std::array<std::uint8_t, 7> hamming_encode(const std::uint8_t* d) {
  const std::uint8_t p1 = d[0] ^ d[1] ^ d[3];
  const std::uint8_t p2 = d[0] ^ d[2] ^ d[3];
  const std::uint8_t p3 = d[1] ^ d[2] ^ d[3];
  return {p1, p2, d[0], p3, d[1], d[2], d[3]};
}

}  // namespace detail

struct FecDecodeResult {
  std::vector<std::uint8_t> bits;
  std::size_t corrected = 0;
};

// hamming74 consumes the stream four bits at a time (a short tail is
// zero-padded); repetition3 triples every bit.
inline std::vector<std::uint8_t> fec_encode(const std::vector<std::uint8_t>& bits,
                                            FecScheme scheme) {
  switch (scheme) {
    case FecScheme::none:
      return bits;
    case FecScheme::repetition3: {
      std::vector<std::uint8_t> out;
      out.reserve(bits.size() * 3);
      for (std::uint8_t b : bits) {
        out.push_back(b);
        out.push_back(b);
        out.push_back(b);
      }
      return out;
    }
    case FecScheme::hamming74: {
      std::vector<std::uint8_t> padded = bits;
      while (padded.size() % 4 != 0) padded.push_back(0);
      std::vector<std::uint8_t> out;
      out.reserve(padded.size() / 4 * 7);
      for (std::size_t i = 0; i < padded.size(); i += 4) {
        const auto cw = detail::hamming_encode(&padded[i]);
        out.insert(out.end(), cw.begin(), cw.end());
      }
      return out;
    }
  }
  throw std::invalid_argument("fec_encode: unknown scheme");
}

// Decodes whole codewords; a trailing partial codeword is dropped.
inline FecDecodeResult fec_decode(const std::vector<std::uint8_t>& bits, FecScheme scheme) {
  FecDecodeResult res;
  switch (scheme) {
    case FecScheme::none:
      res.bits = bits;
      return res;
    case FecScheme::repetition3: {
      res.bits.reserve(bits.size() / 3);
      for (std::size_t i = 0; i + 3 <= bits.size(); i += 3) {
        const int votes = bits[i] + bits[i + 1] + bits[i + 2];
        res.bits.push_back(votes >= 2 ? 1 : 0);
        if (votes == 1 || votes == 2) ++res.corrected;
      }
      return res;
    }
    case FecScheme::hamming74: {
      res.bits.reserve(bits.size() / 7 * 4);
      for (std::size_t i = 0; i + 7 <= bits.size(); i += 7) {
        std::array<std::uint8_t, 7> w;
        std::copy_n(bits.begin() + static_cast<std::ptrdiff_t>(i), 7, w.begin());
        const int syndrome = (w[0] ^ w[2] ^ w[4] ^ w[6]) | ((w[1] ^ w[2] ^ w[5] ^ w[6]) << 1) |
                             ((w[3] ^ w[4] ^ w[5] ^ w[6]) << 2);
        if (syndrome != 0) {
          w[syndrome - 1] ^= 1u;
          ++res.corrected;
        }
        res.bits.push_back(w[2]);
        res.bits.push_back(w[4]);
        res.bits.push_back(w[5]);
        res.bits.push_back(w[6]);
      }
      return res;
    }
  }
  throw std::invalid_argument("fec_decode: unknown scheme");
}

// Wire format, pre-FEC: [length LE16][payload][crc32 LE32], CRC over
// length and payload. The result is the FEC-expanded bit sequence ready for
// modulate().
inline std::vector<std::uint8_t> encode_frame(const std::vector<std::uint8_t>& payload,
                                              FecScheme fec) {
  if (payload.size() > 65535)
    throw std::invalid_argument("encode_frame: payload above the 64 KiB framing limit");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(payload.size() + 6);
  bytes.push_back(static_cast<std::uint8_t>(payload.size() & 0xFFu));
  bytes.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  const std::uint32_t crc = crc32(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>((crc >> (8 * i)) & 0xFFu));
  return fec_encode(bytes_to_bits(bytes), fec);
}

// The sync template: a descending chirp across the plan's band.
inline SampleBuffer preamble_for_plan(const SubchannelPlan& plan, double amplitude,
                                      double sample_rate) {
  return gen_chirp(plan.f_hi_hz, plan.f_lo_hz, kPreambleSeconds, amplitude, sample_rate);
}

// Preamble, then one symbol per group of |plan| bits: bit i of the group
// gates the tone at plan.freqs[i]. The drive level is shared across tones so
// the total stays comparable to a single tone at `amplitude`. Bits are
// zero-padded to a whole symbol.
inline SampleBuffer modulate(const std::vector<std::uint8_t>& bits, const SubchannelPlan& plan,
                             double symbol_dur_s = 0.02, double amplitude = 1.0,
                             double sample_rate = 44100.0) {
  if (plan.freqs_hz.empty()) throw std::invalid_argument("modulate: empty plan");
  if (plan.f_hi_hz >= sample_rate / 2.0)
    throw std::invalid_argument("modulate: plan reaches past Nyquist");
  if (amplitude <= 0.0) throw std::invalid_argument("modulate: amplitude must be positive");
  if (symbol_dur_s < 2.0 / plan.spacing_hz - 1e-12)
    throw std::invalid_argument(
        "modulate: symbol too short for the subchannel spacing, tones would smear together");

  SampleBuffer out = preamble_for_plan(plan, amplitude * kPreambleLevel, sample_rate);
  const auto preamble_len = out.samples.size();
  const auto symbol_len = static_cast<std::size_t>(std::llround(symbol_dur_s * sample_rate));
  const std::size_t n_sym = (bits.size() + plan.size() - 1) / plan.size();
  out.samples.resize(preamble_len + n_sym * symbol_len, 0.0);

  const double per_tone = amplitude / static_cast<double>(plan.size());
  for (std::size_t sym = 0; sym < n_sym; ++sym) {
    double* w = out.samples.data() + preamble_len + sym * symbol_len;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const std::size_t bit_index = sym * plan.size() + i;
      if (bit_index >= bits.size() || bits[bit_index] == 0) continue;
      const double step = 2.0 * kPi * plan.freqs_hz[i] / sample_rate;
      for (std::size_t n = 0; n < symbol_len; ++n)
        w[n] += per_tone * std::sin(step * static_cast<double>(n));
    }
  }
  return out;
}

// Offset of the preamble start, by normalized cross-correlation against the
// known chirp. The detection gate compares the best peak to the strongest
// correlation found outside a small exclusion zone around it; a chirp's
// autocorrelation collapses within a few cycles of lag, so the zone only
// needs to cover the main lobe, and pure noise (which has no such contrast)
// is rejected rather than mis-synced. Plans whose band collapses to a single
// frequency degenerate to a tone preamble and lose this sharpness.
inline std::size_t synchronize(const SampleBuffer& received, const SubchannelPlan& plan) {
  const auto tmpl = preamble_for_plan(plan, 1.0, received.sample_rate);
  const std::size_t m = tmpl.samples.size();
  const std::size_t n = received.samples.size();
  if (n <= m) throw std::invalid_argument("synchronize: clip shorter than the preamble");

  const std::size_t P = next_pow2(n + m - 1);
  std::vector<cdouble> X(P, cdouble{0.0, 0.0});
  std::vector<cdouble> T(P, cdouble{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) X[i] = cdouble{received.samples[i], 0.0};
  for (std::size_t i = 0; i < m; ++i) T[i] = cdouble{tmpl.samples[m - 1 - i], 0.0};
  fft(X);
  fft(T);
  for (std::size_t i = 0; i < P; ++i) X[i] *= T[i];
  ifft(X);

  double tmpl_energy = 0.0;
  for (double v : tmpl.samples) tmpl_energy += v * v;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + received.samples[i] * received.samples[i];

  const std::size_t last = n - m;
  std::vector<double> ncc(last + 1, 0.0);
  for (std::size_t k = 0; k <= last; ++k) {
    const double window_energy = prefix[k + m] - prefix[k];
    if (window_energy <= 0.0) continue;
    ncc[k] = std::abs(X[k + m - 1].real()) / std::sqrt(tmpl_energy * window_energy);
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k <= last; ++k)
    if (ncc[k] > ncc[best]) best = k;

  const std::size_t guard = std::max<std::size_t>(64, m / 32);
  double floor = 0.0;
  for (std::size_t k = 0; k <= last; ++k) {
    if (k + guard > best && k < best + guard) continue;  // inside the exclusion zone
    floor = std::max(floor, ncc[k]);
  }
  if (ncc[best] <= 0.0 || ncc[best] < 3.0 * floor)
    throw std::runtime_error("synchronize: no signal found (peak below 3x the correlation floor)");
  return best;
}

struct DemodResult {
  bool ok = false;
  std::vector<std::uint8_t> payload;
  std::size_t bit_errors_corrected = 0;
  std::size_t sync_offset = 0;
  std::vector<double> soft_metrics;  // per subchannel: on/off cluster contrast in [0, 1]
  std::string failure;               // empty when ok
};

namespace detail {

// Single-frequency correlation energy of one symbol window.
inline double window_energy(const double* w, std::size_t len, double freq_hz, double sample_rate) {
  const cdouble rot = std::polar(1.0, -2.0 * kPi * freq_hz / sample_rate);
  cdouble phase{1.0, 0.0};
  cdouble acc{0.0, 0.0};
  for (std::size_t i = 0; i < len; ++i) {
    acc += w[i] * phase;
    phase *= rot;
  }
  return std::norm(acc);
}

struct ColumnSplit {
  double off_mean = 0.0;
  double on_mean = 0.0;
  bool split = false;  // the column really has two levels
};

// Two-means clustering of one subchannel's energies, seeded at the extremes.
inline ColumnSplit split_column(const std::vector<double>& e) {
  ColumnSplit c;
  const auto [lo_it, hi_it] = std::minmax_element(e.begin(), e.end());
  double lo = *lo_it, hi = *hi_it;
  for (int round = 0; round < 12; ++round) {
    const double mid = 0.5 * (lo + hi);
    double lo_sum = 0.0, hi_sum = 0.0;
    std::size_t lo_n = 0, hi_n = 0;
    for (double v : e) {
      if (v <= mid) {
        lo_sum += v;
        ++lo_n;
      } else {
        hi_sum += v;
        ++hi_n;
      }
    }
    if (lo_n == 0 || hi_n == 0) break;
    lo = lo_sum / static_cast<double>(lo_n);
    hi = hi_sum / static_cast<double>(hi_n);
  }
  c.off_mean = lo;
  c.on_mean = hi;
  c.split = hi > 4.0 * lo && hi > 0.0;
  return c;
}

struct FrameBytes {
  bool ok = false;
  std::vector<std::uint8_t> payload;
  std::string failure;
};

inline FrameBytes parse_frame(const std::vector<std::uint8_t>& bytes) {
  FrameBytes f;
  if (bytes.size() < 6) {
    f.failure = "frame truncated: fewer than 6 bytes decoded";
    return f;
  }
  const std::size_t len = bytes[0] | (static_cast<std::size_t>(bytes[1]) << 8);
  if (bytes.size() < len + 6) {
    f.failure = "frame truncated: length field wants " + std::to_string(len + 6) +
                " bytes, decoded " + std::to_string(bytes.size());
    return f;
  }
  const std::uint32_t want = crc32(bytes.data(), len + 2);
  std::uint32_t got = 0;
  for (int i = 0; i < 4; ++i) got |= static_cast<std::uint32_t>(bytes[len + 2 + i]) << (8 * i);
  if (want != got) {
    f.failure = "checksum mismatch";
    return f;
  }
  f.ok = true;
  f.payload.assign(bytes.begin() + 2, bytes.begin() + 2 + static_cast<std::ptrdiff_t>(len));
  return f;
}

}  // namespace detail

// Synchronize, slice symbols, threshold each subchannel, undo FEC, check the
// checksum. Thresholds are per subchannel (a two-cluster midpoint), since
// per-frequency gain varies a lot across runs; a subchannel that stayed in
// one state the whole frame borrows its level from the nearest subchannel
// that toggled, scaled to half its on-level.
inline DemodResult demodulate(const SampleBuffer& received, const SubchannelPlan& plan,
                              double symbol_dur_s = 0.02, FecScheme fec = FecScheme::hamming74) {
  DemodResult res;
  if (plan.freqs_hz.empty()) throw std::invalid_argument("demodulate: empty plan");
  try {
    res.sync_offset = synchronize(received, plan);
  } catch (const std::runtime_error& e) {
    res.failure = e.what();
    return res;
  }

  const auto preamble_len =
      static_cast<std::size_t>(std::llround(kPreambleSeconds * received.sample_rate));
  const auto symbol_len = static_cast<std::size_t>(std::llround(symbol_dur_s * received.sample_rate));
  if (symbol_len == 0) throw std::invalid_argument("demodulate: symbol duration too short");
  const std::size_t data_start = res.sync_offset + preamble_len;
  if (data_start >= received.samples.size()) {
    res.failure = "no symbols after the preamble";
    return res;
  }
  const std::size_t n_sym = (received.samples.size() - data_start) / symbol_len;
  if (n_sym == 0) {
    res.failure = "no symbols after the preamble";
    return res;
  }

  // energies[j] holds subchannel j's level per symbol.
  std::vector<std::vector<double>> energies(plan.size(), std::vector<double>(n_sym, 0.0));
  for (std::size_t sym = 0; sym < n_sym; ++sym) {
    const double* w = received.samples.data() + data_start + sym * symbol_len;
    for (std::size_t j = 0; j < plan.size(); ++j)
      energies[j][sym] = detail::window_energy(w, symbol_len, plan.freqs_hz[j], received.sample_rate);
  }

  std::vector<detail::ColumnSplit> splits(plan.size());
  for (std::size_t j = 0; j < plan.size(); ++j) splits[j] = detail::split_column(energies[j]);

  // A noise-only column can split by chance, so a real split must also reach
  // a sane fraction of the frame's typical on-level.
  std::vector<double> on_levels;
  for (const auto& s : splits)
    if (s.split) on_levels.push_back(s.on_mean);
  double on_ref = 0.0;
  if (!on_levels.empty()) {
    std::nth_element(on_levels.begin(), on_levels.begin() + on_levels.size() / 2, on_levels.end());
    on_ref = on_levels[on_levels.size() / 2];
  }
  std::vector<bool> valid(plan.size(), false);
  for (std::size_t j = 0; j < plan.size(); ++j)
    valid[j] = splits[j].split && splits[j].on_mean > 0.1 * on_ref;

  double global_max = 0.0;
  for (const auto& col : energies)
    for (double v : col) global_max = std::max(global_max, v);

  std::vector<double> thresholds(plan.size(), 0.0);
  res.soft_metrics.resize(plan.size(), 0.0);
  for (std::size_t j = 0; j < plan.size(); ++j) {
    const auto& s = splits[j];
    if (s.on_mean + s.off_mean > 0.0)
      res.soft_metrics[j] = (s.on_mean - s.off_mean) / (s.on_mean + s.off_mean);
    if (valid[j]) {
      thresholds[j] = 0.5 * (s.off_mean + s.on_mean);
      continue;
    }
    std::size_t nearest = plan.size();
    for (std::size_t k = 0; k < plan.size(); ++k) {
      if (!valid[k]) continue;
      const auto dist = j > k ? j - k : k - j;
      if (nearest == plan.size() ||
          dist < (nearest > j ? nearest - j : j - nearest))
        nearest = k;
    }
    thresholds[j] = nearest < plan.size() ? 0.5 * splits[nearest].on_mean : 0.5 * global_max;
  }

  std::vector<std::uint8_t> raw_bits;
  raw_bits.reserve(n_sym * plan.size());
  for (std::size_t sym = 0; sym < n_sym; ++sym)
    for (std::size_t j = 0; j < plan.size(); ++j)
      raw_bits.push_back(energies[j][sym] > thresholds[j] ? 1 : 0);

  const auto decoded = fec_decode(raw_bits, fec);
  res.bit_errors_corrected = decoded.corrected;
  auto frame = detail::parse_frame(bits_to_bytes(decoded.bits));
  res.ok = frame.ok;
  res.payload = std::move(frame.payload);
  res.failure = std::move(frame.failure);
  return res;
}

}  // namespace pipetone
