#include "specdetect/audio.h"

#include <gtest/gtest.h>

#include <cstdint>
#include <fstream>

#include "test_util.h"

namespace specdetect::audio {
namespace {

using testing::TempDir;

void write_raw(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string le16(int v) { return {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)}; }
std::string le32(std::uint32_t v) {
  std::string s;
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  return s;
}

std::string wav_bytes(int format, int channels, int rate, int bits, const std::string& data) {
  std::string fmt = le16(format) + le16(channels) + le32(rate) + le32(rate * channels * bits / 8) +
                    le16(channels * bits / 8) + le16(bits);
  std::string body = "WAVEfmt " + le32(16) + fmt + "data" + le32(static_cast<std::uint32_t>(data.size())) + data;
  return "RIFF" + le32(static_cast<std::uint32_t>(body.size())) + body;
}

WavErrorKind read_error_kind(const std::filesystem::path& path) {
  try {
    read_wav(path);
  } catch (const WavError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected WavError for " << path;
  return WavErrorKind::kNonFiniteSample;
}

TEST(ReadWav, SilenceRoundTrip) {
  TempDir dir("audio");
  AudioBuffer silence{std::vector<float>(16000, 0.0f), 16000};
  write_wav(dir / "s.wav", silence);
  const AudioBuffer got = read_wav(dir / "s.wav");
  EXPECT_EQ(got.sample_rate_hz, 16000);
  ASSERT_EQ(got.samples.size(), 16000u);
  for (float s : got.samples) EXPECT_EQ(s, 0.0f);
}

TEST(ReadWav, MaxSampleScalesBy32768) {
  TempDir dir("audio");
  write_raw(dir / "max.wav", wav_bytes(1, 1, 16000, 16, le16(32767) + le16(-32768)));
  const AudioBuffer got = read_wav(dir / "max.wav");
  ASSERT_EQ(got.samples.size(), 2u);
  EXPECT_FLOAT_EQ(got.samples[0], 32767.0f / 32768.0f);
  EXPECT_FLOAT_EQ(got.samples[1], -1.0f);
}

TEST(ReadWav, TakesRateFromHeaderWithoutResampling) {
  TempDir dir("audio");
  write_raw(dir / "r.wav", wav_bytes(1, 1, 22050, 16, le16(5) + le16(6)));
  EXPECT_EQ(read_wav(dir / "r.wav").sample_rate_hz, 22050);
}

TEST(ReadWav, DistinctErrorsPerDefect) {
  TempDir dir("audio");
  write_raw(dir / "stereo.wav", wav_bytes(1, 2, 16000, 16, le16(0) + le16(0)));
  write_raw(dir / "float.wav", wav_bytes(3, 1, 16000, 32, le32(0)));
  write_raw(dir / "pcm8.wav", wav_bytes(1, 1, 16000, 8, "\x80\x80"));
  write_raw(dir / "junk.wav", "this is not a wav file at all");
  std::string truncated = wav_bytes(1, 1, 16000, 16, le16(1) + le16(2) + le16(3));
  truncated.resize(truncated.size() - 4);
  write_raw(dir / "trunc.wav", truncated);

  EXPECT_EQ(read_error_kind(dir / "stereo.wav"), WavErrorKind::kUnsupportedChannelCount);
  EXPECT_EQ(read_error_kind(dir / "float.wav"), WavErrorKind::kUnsupportedCodec);
  EXPECT_EQ(read_error_kind(dir / "pcm8.wav"), WavErrorKind::kUnsupportedBitDepth);
  EXPECT_EQ(read_error_kind(dir / "junk.wav"), WavErrorKind::kMalformedHeader);
  EXPECT_EQ(read_error_kind(dir / "trunc.wav"), WavErrorKind::kMalformedHeader);
  EXPECT_THROW(read_wav(dir / "missing.wav"), IoError);
}

TEST(ReadWav, SkipsUnknownChunks) {
  TempDir dir("audio");
  std::string bytes = wav_bytes(1, 1, 16000, 16, le16(100));
  // Insert an odd-sized LIST chunk (with its pad byte) before "data".
  const auto pos = bytes.find("data");
  bytes.insert(pos, "LIST" + le32(3) + "abc" + std::string(1, '\0'));
  write_raw(dir / "list.wav", bytes);
  const AudioBuffer got = read_wav(dir / "list.wav");
  ASSERT_EQ(got.samples.size(), 1u);
  EXPECT_FLOAT_EQ(got.samples[0], 100.0f / 32768.0f);
}

TEST(ReadWav, Pcm16RoundTripIsExact) {
  TempDir dir("audio");
  AudioBuffer buf;
  buf.sample_rate_hz = 16000;
  for (int v = -32768; v <= 32767; v += 97) buf.samples.push_back(static_cast<float>(v) / 32768.0f);
  buf.samples.push_back(32767.0f / 32768.0f);
  write_wav(dir / "rt.wav", buf);
  const AudioBuffer got = read_wav(dir / "rt.wav");
  ASSERT_EQ(got.samples.size(), buf.samples.size());
  for (std::size_t i = 0; i < buf.samples.size(); ++i) ASSERT_EQ(got.samples[i], buf.samples[i]) << i;
}

TEST(Validate, RejectsNonFiniteAndEmpty) {
  EXPECT_THROW(validate(AudioBuffer{{}, 16000}), InvalidArgument);
  EXPECT_THROW(validate(AudioBuffer{{0.0f, std::nanf("")}, 16000}), InvalidArgument);
  EXPECT_THROW(validate(AudioBuffer{{0.0f}, 0}), InvalidArgument);
  EXPECT_NO_THROW(validate(AudioBuffer{{0.5f}, 8000}));
}

AudioBuffer ramp(std::size_t n) {
  AudioBuffer buf;
  for (std::size_t i = 0; i < n; ++i) buf.samples.push_back(static_cast<float>(i % 1000) / 1000.0f);
  return buf;
}

TEST(FitToDuration, TilesShortInput) {
  const AudioBuffer in = ramp(32000);
  const AudioBuffer out = fit_to_duration(in, 5.12);
  ASSERT_EQ(out.samples.size(), 81920u);
  for (std::size_t i = 0; i < 81920; ++i) ASSERT_EQ(out.samples[i], in.samples[i % 32000]) << i;
  // Two full copies then the first 17920 samples.
  EXPECT_EQ(81920 - 2 * 32000, 17920);
}

TEST(FitToDuration, ExactLengthIsIdentity) {
  const AudioBuffer in = ramp(81920);
  EXPECT_EQ(fit_to_duration(in, 5.12).samples, in.samples);
}

TEST(FitToDuration, TruncatesLongInput) {
  const AudioBuffer in = ramp(7 * 16000);
  const AudioBuffer out = fit_to_duration(in, 5.12);
  ASSERT_EQ(out.samples.size(), 81920u);
  EXPECT_TRUE(std::equal(out.samples.begin(), out.samples.end(), in.samples.begin()));
}

TEST(FitToDuration, IdempotentAndPrefixPreservingForManyLengths) {
  for (std::size_t len : {1u, 7u, 160u, 16000u, 40000u, 81919u, 81921u, 100000u}) {
    const AudioBuffer in = ramp(len);
    const AudioBuffer once = fit_to_duration(in, 5.12);
    EXPECT_EQ(fit_to_duration(once, 5.12).samples, once.samples) << len;
    const std::size_t prefix = std::min<std::size_t>(len, 81920);
    EXPECT_TRUE(std::equal(once.samples.begin(), once.samples.begin() + static_cast<std::ptrdiff_t>(prefix),
                           in.samples.begin()))
        << len;
  }
  EXPECT_THROW(fit_to_duration(AudioBuffer{}, 5.12), InvalidArgument);
}

TEST(Resample, SameRateIsIdentity) {
  const AudioBuffer in = testing::sine(440.0, 0.3, 1000);
  EXPECT_EQ(resample(in, 16000).samples, in.samples);
}

TEST(Resample, PreservesDc) {
  AudioBuffer dc{std::vector<float>(16000, 0.5f), 16000};
  const AudioBuffer out = resample(dc, 8000);
  EXPECT_EQ(out.sample_rate_hz, 8000);
  ASSERT_EQ(out.samples.size(), 8000u);
  for (float s : out.samples) ASSERT_NEAR(s, 0.5, 1e-3);
}

TEST(Resample, OneKilohertzSineMatchesAnalyticSine) {
  const AudioBuffer in = testing::sine(1000.0, 0.8, 16000);
  const AudioBuffer out = resample(in, 8000);
  const AudioBuffer expected = testing::sine(1000.0, 0.8, 8000, 8000);
  ASSERT_EQ(out.samples.size(), 8000u);
  // Mid-signal, away from edge effects: within 1 % of the amplitude.
  for (std::size_t i = 1000; i < 7000; ++i) ASSERT_NEAR(out.samples[i], expected.samples[i], 0.01 * 0.8) << i;
}

TEST(Resample, RemovesContentAboveNewNyquist) {
  const AudioBuffer in = testing::sine(5000.0, 0.8, 16000);
  const AudioBuffer out = resample(in, 8000);
  // Energy per sample, compared on the interior of both signals.
  const double in_power = testing::energy(in.samples, 2000, 14000) / 12000.0;
  const double out_power = testing::energy(out.samples, 1000, 7000) / 6000.0;
  EXPECT_LT(10.0 * std::log10(out_power / in_power), -40.0);
}

TEST(Resample, OutputLengthIsRounded) {
  EXPECT_EQ(resample(AudioBuffer{std::vector<float>(441, 0.1f), 44100}, 16000).samples.size(), 160u);
  EXPECT_EQ(resample(AudioBuffer{std::vector<float>(3, 0.1f), 16000}, 8000).samples.size(), 2u);
  EXPECT_EQ(resample(AudioBuffer{std::vector<float>(100, 0.1f), 8000}, 16000).samples.size(), 200u);
}

}  // namespace
}  // namespace specdetect::audio
