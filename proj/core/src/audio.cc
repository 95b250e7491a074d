#include "specdetect/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

namespace specdetect::audio {
namespace {

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

constexpr double kKaiserBeta = 8.6;
constexpr int kTapsPerPhase = 64;
// Passband edge as a fraction of the lower of the two Nyquist rates.
constexpr double kCutoffFraction = 0.9;

}  // namespace

const char* to_string(WavErrorKind kind) {
  switch (kind) {
    case WavErrorKind::kMalformedHeader:
      return "malformed header";
    case WavErrorKind::kUnsupportedCodec:
      return "unsupported codec";
    case WavErrorKind::kUnsupportedBitDepth:
      return "unsupported bit depth";
    case WavErrorKind::kUnsupportedChannelCount:
      return "unsupported channel count";
    case WavErrorKind::kNonFiniteSample:
      return "non-finite sample";
  }
  return "unknown";
}

void validate(const AudioBuffer& buf) {
  if (buf.sample_rate_hz <= 0) throw InvalidArgument("audio: sample rate must be positive");
  if (buf.samples.empty()) throw InvalidArgument("audio: buffer is empty");
  for (float s : buf.samples)
    if (!std::isfinite(s)) throw InvalidArgument("audio: non-finite sample");
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(name + ": cannot open");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  auto malformed = [&](const std::string& detail) {
    return WavError(WavErrorKind::kMalformedHeader, name, detail);
  };
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw malformed("missing RIFF/WAVE signature");

  bool have_fmt = false;
  int channels = 0;
  int bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t chunk_size = read_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > n) throw malformed("truncated fmt chunk");
      const std::uint16_t format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      if (format != 1)
        throw WavError(WavErrorKind::kUnsupportedCodec, name,
                       "format tag " + std::to_string(format) + ", expected 1 (PCM)");
      if (channels != 1)
        throw WavError(WavErrorKind::kUnsupportedChannelCount, name,
                       std::to_string(channels) + " channels, expected 1");
      if (bits != 16)
        throw WavError(WavErrorKind::kUnsupportedBitDepth, name,
                       std::to_string(bits) + " bits, expected 16");
      if (rate == 0) throw malformed("zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw malformed("data chunk before fmt chunk");
      if (body + chunk_size > n) throw malformed("data chunk exceeds file size");
      if (chunk_size % 2 != 0) throw malformed("odd data chunk size for 16-bit samples");
      if (chunk_size == 0) throw malformed("empty data chunk");
      AudioBuffer buf;
      buf.sample_rate_hz = static_cast<int>(rate);
      buf.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < buf.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(p + body + 2 * i));
        buf.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return buf;
    }
    // Chunks are padded to even sizes.
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw malformed(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf) {
  if (buf.sample_rate_hz <= 0) throw InvalidArgument("write_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (float s : buf.samples) {
    if (!std::isfinite(s))
      throw WavError(WavErrorKind::kNonFiniteSample, path.string(), "cannot encode");
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(path.string() + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError(path.string() + ": write failed");
}

AudioBuffer fit_to_duration(const AudioBuffer& buf, double target_seconds) {
  if (buf.samples.empty()) throw InvalidArgument("fit_to_duration: empty buffer");
  if (!(target_seconds > 0.0)) throw InvalidArgument("fit_to_duration: target must be positive");
  const auto target = static_cast<std::size_t>(std::llround(target_seconds * buf.sample_rate_hz));
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.samples.resize(target);
  const std::size_t len = buf.samples.size();
  for (std::size_t start = 0; start < target; start += len) {
    const std::size_t count = std::min(len, target - start);
    std::copy_n(buf.samples.begin(), count, out.samples.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

AudioBuffer resample(const AudioBuffer& buf, int target_rate_hz) {
  if (buf.sample_rate_hz <= 0 || target_rate_hz <= 0)
    throw InvalidArgument("resample: rates must be positive");
  if (buf.sample_rate_hz == target_rate_hz) return buf;

  const long long src = buf.sample_rate_hz;
  const long long dst = target_rate_hz;
  const long long g = std::gcd(src, dst);
  const long long up = dst / g;    // output phases
  const long long down = src / g;  // input step per `up` outputs

  // Filter in input-sample units; cutoff relative to the input rate.
  const double cutoff = kCutoffFraction * 0.5 * static_cast<double>(std::min(src, dst)) /
                        static_cast<double>(src);  // cycles per input sample
  constexpr int kHalf = kTapsPerPhase / 2;
  const double i0_beta = bessel_i0(kKaiserBeta);

  // taps[phase][j] weights input sample base - kHalf + 1 + j, where the
  // output lies at base + phase / up.
  std::vector<double> taps(static_cast<std::size_t>(up) * kTapsPerPhase);
  for (long long phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    double sum = 0.0;
    double* row = taps.data() + phase * kTapsPerPhase;
    for (int j = 0; j < kTapsPerPhase; ++j) {
      const double t = static_cast<double>(j - kHalf + 1) - frac;
      const double x = 2.0 * cutoff * t;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double r = t / static_cast<double>(kHalf);
      const double w = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      row[j] = sinc * w;
      sum += row[j];
    }
    // Unit DC gain per phase.
    for (int j = 0; j < kTapsPerPhase; ++j) row[j] /= sum;
  }

  const auto in_len = static_cast<long long>(buf.samples.size());
  const auto out_len = static_cast<long long>(
      std::llround(static_cast<double>(in_len) * static_cast<double>(dst) / static_cast<double>(src)));
  AudioBuffer out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(std::max(out_len, 1LL)));
  for (long long n = 0; n < static_cast<long long>(out.samples.size()); ++n) {
    const long long pos = n * down;
    const long long base = pos / up;
    const long long phase = pos % up;
    const double* row = taps.data() + phase * kTapsPerPhase;
    double acc = 0.0;
    for (int j = 0; j < kTapsPerPhase; ++j) {
      // Edge samples are held constant beyond the buffer.
      const long long idx = std::clamp(base - kHalf + 1 + j, 0LL, in_len - 1);
      acc += row[j] * buf.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace specdetect::audio
