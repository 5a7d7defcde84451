#pragma once

// Minimal RIFF/WAVE reader and writer for the one format the toolkit uses:
// PCM, 16-bit signed little-endian, mono. Unknown chunks are skipped on read;
// anything structurally off errors out naming the offending field.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipetone/signal.hpp"

namespace pipetone {

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(static_cast<std::uint32_t>(p[0]) |
                                    (static_cast<std::uint32_t>(p[1]) << 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace detail

// Encode to the full file image. Out-of-range samples clip; the count is
// reported through clipped_out when the caller cares.
inline std::string encode_wav(const SampleBuffer& buf, std::size_t* clipped_out = nullptr) {
  if (buf.sample_rate <= 0.0) throw std::invalid_argument("encode_wav: sample_rate must be positive");
  const std::uint32_t rate = static_cast<std::uint32_t>(buf.sample_rate);
  if (static_cast<double>(rate) != buf.sample_rate)
    throw std::invalid_argument("encode_wav: sample_rate must be integral for PCM output");

  std::size_t clipped = 0;
  std::string data;
  data.reserve(buf.samples.size() * 2);
  for (double s : buf.samples) {
    // Round half away from zero, then clip to the int16 range.
    double scaled = s * 32768.0;
    long v = std::lround(scaled);
    if (v > 32767) {
      v = 32767;
      ++clipped;
    } else if (v < -32768) {
      v = -32768;
      ++clipped;
    }
    detail::put_u16(data, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }

  std::string out;
  out.reserve(44 + data.size());
  out += "RIFF";
  detail::put_u32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVE";
  out += "fmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * 2);  // byte rate
  detail::put_u16(out, 2);         // block align
  detail::put_u16(out, 16);        // bits per sample
  out += "data";
  detail::put_u32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  if (clipped_out) *clipped_out = clipped;
  return out;
}

inline SampleBuffer decode_wav(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0)
    throw std::runtime_error("wav: missing RIFF header");
  if (std::memcmp(p + 8, "WAVE", 4) != 0) throw std::runtime_error("wav: missing WAVE tag");

  bool have_fmt = false;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_data = false;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const char* id = reinterpret_cast<const char*>(p + off);
    const std::uint32_t len = detail::read_u32(p + off + 4);
    const std::size_t body = off + 8;
    if (body + len > n) throw std::runtime_error("wav: truncated chunk body");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw std::runtime_error("wav: fmt chunk too short");
      const std::uint16_t format = detail::read_u16(p + body);
      const std::uint16_t channels = detail::read_u16(p + body + 2);
      rate = detail::read_u32(p + body + 4);
      const std::uint16_t bits = detail::read_u16(p + body + 14);
      if (format != 1) throw std::runtime_error("wav: audio format must be PCM (1)");
      if (channels != 1) throw std::runtime_error("wav: channel count must be mono (1)");
      if (bits != 16) throw std::runtime_error("wav: bits per sample must be 16");
      if (rate == 0) throw std::runtime_error("wav: sample rate must be positive");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (have_data) throw std::runtime_error("wav: multiple data chunks");
      data_off = body;
      data_len = len;
      have_data = true;
    }
    off = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw std::runtime_error("wav: missing fmt chunk");
  if (!have_data) throw std::runtime_error("wav: missing data chunk");
  if (data_len % 2 != 0) throw std::runtime_error("wav: data chunk length not sample-aligned");

  SampleBuffer buf;
  buf.sample_rate = static_cast<double>(rate);
  buf.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < buf.samples.size(); ++i) {
    const std::int16_t v =
        static_cast<std::int16_t>(detail::read_u16(p + data_off + 2 * i));
    buf.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return buf;
}

inline SampleBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

// Atomic: writes a sibling temp file, then renames over the target.
inline std::size_t write_wav(const std::string& path, const SampleBuffer& buf) {
  std::size_t clipped = 0;
  const std::string bytes = encode_wav(buf, &clipped);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("wav: cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("wav: short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("wav: rename failed for " + path);
  return clipped;
}

}  // namespace pipetone
