#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>

#include "pipetone/signal.hpp"
#include "pipetone/wav.hpp"

using namespace pipetone;

TEST_CASE("wav quantization round trip stays within half an LSB step", "[wav]") {
  const auto tone = gen_tone(1000.0, 0.5, 0.2, 0.0, 44100.0);
  const auto bytes = encode_wav(tone);
  const auto back = decode_wav(bytes);
  REQUIRE(back.sample_rate == 44100.0);
  REQUIRE(back.samples.size() == tone.samples.size());
  for (std::size_t i = 0; i < tone.samples.size(); ++i)
    REQUIRE(std::abs(back.samples[i] - tone.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("wav data chunk size matches duration", "[wav]") {
  SampleBuffer buf;
  buf.sample_rate = 44100.0;
  buf.samples.assign(88200, 0.0);  // 2 seconds
  const auto bytes = encode_wav(buf);
  REQUIRE(bytes.size() == 44 + 176400);
  // data chunk length field lives at offset 40 in the canonical layout
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t len = static_cast<std::uint32_t>(p[40]) | (p[41] << 8) | (p[42] << 16) |
                            (static_cast<std::uint32_t>(p[43]) << 24);
  REQUIRE(len == 176400);
}

TEST_CASE("wav re-encoding already quantized samples is bit exact", "[wav]") {
  const auto tone = gen_tone(777.0, 0.9, 0.1, 0.0, 8000.0);
  const auto first = encode_wav(tone);
  const auto second = encode_wav(decode_wav(first));
  REQUIRE(first == second);
}

TEST_CASE("wav clipping is counted", "[wav]") {
  SampleBuffer buf;
  buf.sample_rate = 8000.0;
  buf.samples = {0.0, 0.5, 1.5, -2.0, 1.0};  // 1.0 maps to 32768 -> clipped
  std::size_t clipped = 0;
  encode_wav(buf, &clipped);
  REQUIRE(clipped == 3);
}

TEST_CASE("wav rejects malformed input", "[wav]") {
  const auto tone = gen_tone(1000.0, 0.5, 0.05, 0.0, 8000.0);
  auto bytes = encode_wav(tone);

  SECTION("truncated header") {
    REQUIRE_THROWS_WITH(decode_wav(bytes.substr(0, 10)), Catch::Matchers::ContainsSubstring("RIFF"));
  }
  SECTION("truncated data") {
    REQUIRE_THROWS_WITH(decode_wav(bytes.substr(0, bytes.size() - 11)),
                        Catch::Matchers::ContainsSubstring("truncated"));
  }
  SECTION("stereo rejected, error names the field") {
    bytes[22] = 2;  // channel count
    REQUIRE_THROWS_WITH(decode_wav(bytes), Catch::Matchers::ContainsSubstring("channel"));
  }
  SECTION("non-PCM rejected") {
    bytes[20] = 3;  // format code
    REQUIRE_THROWS_WITH(decode_wav(bytes), Catch::Matchers::ContainsSubstring("PCM"));
  }
  SECTION("24-bit rejected") {
    bytes[34] = 24;  // bits per sample
    REQUIRE_THROWS_WITH(decode_wav(bytes), Catch::Matchers::ContainsSubstring("16"));
  }
}

TEST_CASE("wav skips unknown chunks", "[wav]") {
  const auto tone = gen_tone(440.0, 0.4, 0.05, 0.0, 8000.0);
  auto bytes = encode_wav(tone);
  // Splice a LIST chunk between fmt and data.
  const std::string extra = std::string("LIST") + std::string{4, 0, 0, 0} + "INFO";
  bytes.insert(36, extra);
  // Fix the RIFF size field.
  const std::uint32_t riff = static_cast<std::uint32_t>(bytes.size() - 8);
  bytes[4] = static_cast<char>(riff & 0xFF);
  bytes[5] = static_cast<char>((riff >> 8) & 0xFF);
  bytes[6] = static_cast<char>((riff >> 16) & 0xFF);
  bytes[7] = static_cast<char>((riff >> 24) & 0xFF);
  const auto back = decode_wav(bytes);
  REQUIRE(back.samples.size() == tone.samples.size());
}

TEST_CASE("wav file round trip through disk", "[wav]") {
  const auto tone = gen_tone(2000.0, 0.7, 0.1, 0.0, 44100.0);
  const std::string path = "test_roundtrip_tmp.wav";
  REQUIRE(write_wav(path, tone) == 0);
  const auto back = read_wav(path);
  REQUIRE(back.samples.size() == tone.samples.size());
  REQUIRE(back.sample_rate == tone.sample_rate);
  std::remove(path.c_str());
}
