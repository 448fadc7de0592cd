// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "stutter/audio.hpp"
#include "stutter/error.hpp"
#include "test_support.hpp"

using namespace stutter;
using testing_support::TempDir;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}
void tag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

// Minimal RIFF writer for formats the library itself never emits.
std::vector<std::uint8_t> make_wav(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                   std::uint16_t bits, const std::vector<std::uint8_t>& data,
                                   bool extensible = false) {
  std::vector<std::uint8_t> fmt;
  put16(fmt, extensible ? 0xFFFE : format);
  put16(fmt, channels);
  put32(fmt, rate);
  put32(fmt, rate * channels * bits / 8);
  put16(fmt, channels * bits / 8);
  put16(fmt, bits);
  if (extensible) {
    put16(fmt, 22);
    put16(fmt, bits);
    put32(fmt, 0);
    put16(fmt, format);
    const std::uint8_t guid_tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                        0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
    fmt.insert(fmt.end(), guid_tail, guid_tail + 14);
  }
  std::vector<std::uint8_t> b;
  tag(b, "RIFF");
  put32(b, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + data.size()));
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, static_cast<std::uint32_t>(fmt.size()));
  b.insert(b.end(), fmt.begin(), fmt.end());
  tag(b, "data");
  put32(b, static_cast<std::uint32_t>(data.size()));
  b.insert(b.end(), data.begin(), data.end());
  return b;
}

std::vector<std::uint8_t> pcm16(const std::vector<std::int16_t>& v) {
  std::vector<std::uint8_t> d;
  for (auto s : v) put16(d, static_cast<std::uint16_t>(s));
  return d;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no stutter::Error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(ParseWav, SilenceOneSecond) {
  auto bytes = make_wav(1, 1, 22050, 16, pcm16(std::vector<std::int16_t>(22050, 0)));
  ASSERT_EQ(bytes.size(), 44u + 2 * 22050);
  AudioClip c = parse_wav(bytes);
  EXPECT_EQ(c.sample_rate, 22050);
  ASSERT_EQ(c.samples.size(), 22050u);
  for (double s : c.samples) EXPECT_EQ(s, 0.0);
}

TEST(ParseWav, RandomPcm16RoundTripsByteExact) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> sample(-32768, 32767);
  std::uniform_int_distribution<int> len(1, 5000);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int16_t> v(len(rng));
    for (auto& s : v) s = static_cast<std::int16_t>(sample(rng));
    auto bytes = make_wav(1, 1, 16000 + trial, 16, pcm16(v));
    EXPECT_EQ(write_wav(parse_wav(bytes)), bytes) << "trial " << trial;
  }
}

TEST(ParseWav, RifxIsMalformed) {
  auto bytes = make_wav(1, 1, 8000, 16, pcm16({0, 1}));
  std::memcpy(bytes.data(), "RIFX", 4);
  EXPECT_EQ(code_of([&] { parse_wav(bytes); }), ErrorCode::MalformedHeader);
}

TEST(ParseWav, TruncatedHeaderIsMalformed) {
  auto bytes = make_wav(1, 1, 8000, 16, pcm16({0, 1}));
  bytes.resize(20);
  EXPECT_EQ(code_of([&] { parse_wav(bytes); }), ErrorCode::MalformedHeader);
}

TEST(ParseWav, CompressedFormatIsUnsupported) {
  auto bytes = make_wav(2, 1, 8000, 16, pcm16({0, 1}));  // MS ADPCM tag
  EXPECT_EQ(code_of([&] { parse_wav(bytes); }), ErrorCode::UnsupportedEncoding);
}

TEST(ParseWav, DecodesOtherDepths) {
  auto c8 = parse_wav(make_wav(1, 1, 8000, 8, {0, 128, 255}));
  ASSERT_EQ(c8.samples.size(), 3u);
  EXPECT_DOUBLE_EQ(c8.samples[0], -1.0);
  EXPECT_DOUBLE_EQ(c8.samples[1], 0.0);
  EXPECT_DOUBLE_EQ(c8.samples[2], 127.0 / 128.0);

  auto c24 = parse_wav(make_wav(1, 1, 8000, 24, {0x00, 0x00, 0x40, 0x00, 0x00, 0xC0}));
  EXPECT_DOUBLE_EQ(c24.samples[0], 0.5);
  EXPECT_DOUBLE_EQ(c24.samples[1], -0.5);

  std::vector<std::uint8_t> d32;
  put32(d32, 0x40000000u);
  auto c32 = parse_wav(make_wav(1, 1, 8000, 32, d32));
  EXPECT_DOUBLE_EQ(c32.samples[0], 0.5);

  std::vector<std::uint8_t> df;
  float f = -0.25f;
  std::uint32_t raw;
  std::memcpy(&raw, &f, 4);
  put32(df, raw);
  auto cf = parse_wav(make_wav(3, 1, 8000, 32, df));
  EXPECT_DOUBLE_EQ(cf.samples[0], -0.25);

  auto ce = parse_wav(make_wav(1, 1, 8000, 16, pcm16({16384}), true));
  EXPECT_DOUBLE_EQ(ce.samples[0], 0.5);
}

TEST(ParseWav, StereoIsAveraged) {
  auto c = parse_wav(make_wav(1, 2, 8000, 16, pcm16({16384, 0, -16384, -16384})));
  ASSERT_EQ(c.samples.size(), 2u);
  EXPECT_DOUBLE_EQ(c.samples[0], 0.25);
  EXPECT_DOUBLE_EQ(c.samples[1], -0.5);
}

TEST(WriteWav, OneSampleLayout) {
  auto bytes = write_wav(AudioClip{{0.0}, 8000});
  ASSERT_EQ(bytes.size(), 46u);
  EXPECT_EQ(bytes[44], 0);
  EXPECT_EQ(bytes[45], 0);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RIFF");
}

TEST(WriteWav, FullScaleClamps) {
  auto bytes = write_wav(AudioClip{{1.0, -1.0, 3.0}, 8000});
  auto v = [&](std::size_t i) { return static_cast<std::int16_t>(bytes[44 + 2 * i] | (bytes[45 + 2 * i] << 8)); };
  EXPECT_EQ(v(0), 32767);
  EXPECT_EQ(v(1), -32768);
  EXPECT_EQ(v(2), 32767);
}

TEST(WriteWav, RandomClipWithinOneLsb) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AudioClip c{std::vector<double>(10000), 22050};
  for (auto& s : c.samples) s = u(rng);
  AudioClip back = parse_wav(write_wav(c));
  ASSERT_EQ(back.samples.size(), c.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < c.samples.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - c.samples[i]));
  EXPECT_LE(worst, 1.0 / 32768.0);
}

TEST(WavFiles, MissingFileIsIoFailure) {
  EXPECT_EQ(code_of([] { read_wav_file("/nonexistent/nowhere.wav"); }), ErrorCode::IoFailure);
}

TEST(Resample, SameRateIsIdentity) {
  AudioClip c{{0.1, -0.2, 0.3, 0.4}, 16000};
  EXPECT_EQ(resample(c, 16000).samples, c.samples);
}

TEST(Resample, ConstantStaysConstant) {
  AudioClip c{std::vector<double>(1000, 0.375), 44100};
  for (int rate : {8000, 22050, 48000}) {
    auto r = resample(c, rate);
    EXPECT_EQ(r.sample_rate, rate);
    EXPECT_EQ(r.samples.size(), static_cast<std::size_t>(std::llround(1000.0 * rate / 44100)));
    for (double s : r.samples) EXPECT_NEAR(s, 0.375, 1e-15);
  }
}

TEST(Resample, ToneKeepsItsDftBin) {
  const int src = 44100, dst = 22050;
  AudioClip c{std::vector<double>(src), src};
  for (int i = 0; i < src; ++i) c.samples[i] = std::sin(2 * std::numbers::pi * 440.0 * i / src);
  auto r = resample(c, dst);
  // naive DFT over bins 0..1000 Hz, 1 s of signal so bin k == k Hz
  const std::size_t n = r.samples.size();
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t k = 0; k <= 1000; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += r.samples[i] * std::polar(1.0, -2 * std::numbers::pi * k * i / n);
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  EXPECT_NEAR(static_cast<double>(best), 440.0, 1.0);
}

TEST(Segment, ExactTiling) {
  AudioClip c{std::vector<double>(3 * 22050, 0.1), 22050};
  auto segs = segment(c);
  ASSERT_EQ(segs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(segs[i].samples.size(), 22050u);
    EXPECT_EQ(segs[i].origin_offset, i * 22050);
    EXPECT_EQ(segs[i].valid_length, 22050u);
  }
}

TEST(Segment, LongTailIsPadded) {
  AudioClip c{std::vector<double>(static_cast<std::size_t>(3.6 * 22050), 0.1), 22050};
  auto segs = segment(c);
  ASSERT_EQ(segs.size(), 4u);
  const auto tail = c.samples.size() - 3 * 22050;
  EXPECT_EQ(segs[3].valid_length, tail);
  EXPECT_EQ(segs[3].samples[tail - 1], 0.1);
  EXPECT_EQ(segs[3].samples[tail], 0.0);
  EXPECT_EQ(segs[3].samples.back(), 0.0);
}

TEST(Segment, ShortTailIsDropped) {
  AudioClip c{std::vector<double>(static_cast<std::size_t>(3.2 * 22050), 0.1), 22050};
  EXPECT_EQ(segment(c).size(), 3u);
  EXPECT_TRUE(segment(AudioClip{{}, 22050}).empty());
}

TEST(Manifest, RoundTripWithNaAndRelativePaths) {
  TempDir dir("manifest");
  std::vector<ManifestEntry> in{{"a.wav", 1, 0}, {"sub/b.wav", std::nullopt, 1}, {"/abs/c.wav", 0, std::nullopt}};
  write_manifest(dir / "m.csv", in);
  auto out = read_manifest(dir / "m.csv");
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].path, dir.path() / "a.wav");
  EXPECT_EQ(out[1].path, dir.path() / "sub/b.wav");
  EXPECT_EQ(out[2].path, std::filesystem::path("/abs/c.wav"));
  EXPECT_EQ(out[0].label_prolongation, 1);
  EXPECT_FALSE(out[1].label_prolongation.has_value());
  EXPECT_FALSE(out[2].label_repetition.has_value());
}

TEST(Manifest, BadLabelIsRejected) {
  TempDir dir("manifest_bad");
  {
    std::ofstream f(dir / "m.csv");
    f << "path,label_prolongation,label_repetition\nx.wav,2,0\n";
  }
  EXPECT_EQ(code_of([&] { read_manifest(dir / "m.csv"); }), ErrorCode::InvalidArgument);
}
