#ifndef SPECDETECT_AUDIO_H_
#define SPECDETECT_AUDIO_H_

#include <filesystem>
#include <string>
#include <vector>

#include "specdetect/error.h"

namespace specdetect::audio {

inline constexpr int kCanonicalRateHz = 16000;
inline constexpr double kInputSeconds = 5.12;

// Mono time-domain signal. Samples are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate_hz = kCanonicalRateHz;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Throws InvalidArgument unless rate > 0, length >= 1 and all samples finite.
void validate(const AudioBuffer& buf);

enum class WavErrorKind {
  kMalformedHeader,
  kUnsupportedCodec,
  kUnsupportedBitDepth,
  kUnsupportedChannelCount,
  kNonFiniteSample,
};

const char* to_string(WavErrorKind kind);

class WavError : public Error {
 public:
  WavError(WavErrorKind kind, const std::string& path, const std::string& detail)
      : Error(path + ": " + to_string(kind) + ": " + detail), kind_(kind) {}

  WavErrorKind kind() const { return kind_; }

 private:
  WavErrorKind kind_;
};

// Decodes a RIFF/WAVE file holding 16-bit linear PCM mono. Samples are
// divided by 32768; the sample rate is taken from the header as is.
AudioBuffer read_wav(const std::filesystem::path& path);

// Writes 16-bit PCM mono. Samples are scaled by 32768, rounded and clipped.
void write_wav(const std::filesystem::path& path, const AudioBuffer& buf);

// Tiles a short signal (whole copies, then a truncated copy) or truncates a
// long one so the result holds round(target_seconds * rate) samples.
AudioBuffer fit_to_duration(const AudioBuffer& buf, double target_seconds);

// Kaiser-windowed sinc resampler (beta 8.6, 64 taps per output sample).
// Output length is round(len * target / source). Same rate is the identity.
AudioBuffer resample(const AudioBuffer& buf, int target_rate_hz);

}  // namespace specdetect::audio

#endif  // SPECDETECT_AUDIO_H_
