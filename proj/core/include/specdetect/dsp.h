#ifndef SPECDETECT_DSP_H_
#define SPECDETECT_DSP_H_

#include <filesystem>
#include <vector>

#include "specdetect/audio.h"

namespace specdetect::dsp {

inline constexpr int kNumMels = 80;
inline constexpr int kNumFrames = 512;
inline constexpr double kLogFloor = 1e-10;

// Hz to mel: 2595 * log10(1 + f / 700). Negative input throws.
double hz_to_mel(double f_hz);
// Inverse of hz_to_mel. Negative input throws.
double mel_to_hz(double mel);

struct StftParams {
  int win_samples = 400;  // 25 ms at 16 kHz
  int hop_samples = 160;  // 10 ms
  int fft_size = 512;
  std::vector<double> window;  // periodic Hann, win_samples long

  static StftParams canonical();
  static StftParams make(int win_samples, int hop_samples, int fft_size);
  int num_bins() const { return fft_size / 2 + 1; }
};

// Dense row-major real matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

struct MelFilterbank {
  Matrix weights;  // n_mels x (fft_size / 2 + 1)
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
  std::vector<double> center_hz;  // peak frequency of each triangle

  int num_mels() const { return weights.rows; }
};

// Triangular filters with centers evenly spaced on the mel axis between
// hz_to_mel(fmin) and hz_to_mel(fmax); each triangle reaches zero at the
// centers of its two neighbours. Peaks are unnormalized (height 1).
MelFilterbank make_mel_filterbank(int n_mels, const StftParams& params, int sr_hz,
                                  double fmin_hz, double fmax_hz);

// Magnitude STFT, (fft_size/2 + 1) x (len / hop). Frame k is centered on
// sample k * hop; the signal is reflection-padded by win/2 at both ends.
Matrix stft_magnitude(const audio::AudioBuffer& buf, const StftParams& params);

// Standardized log-mel matrix, n_mels x n_frames, row-major.
struct MelSpectrogram {
  int n_mels = 0;
  int n_frames = 0;
  std::vector<float> data;
  StftParams params;

  float at(int mel, int frame) const {
    return data[static_cast<std::size_t>(mel) * n_frames + frame];
  }
};

// Canonical front end for a 5.12 s, 16 kHz buffer: magnitude STFT, 80-band
// mel projection (0 to 8 kHz), natural log with a 1e-10 floor, then
// zero-mean/unit-variance over the whole matrix. A constant matrix (pure
// silence) standardizes to all zeros.
MelSpectrogram mel_spectrogram(const audio::AudioBuffer& buf);

// Resamples to 16 kHz if needed, fits to 5.12 s and calls mel_spectrogram.
MelSpectrogram extract_features(const audio::AudioBuffer& buf);

// Feature dump: int32 n_mels, int32 n_frames, then n_mels * n_frames
// float32 values row-major, all little-endian.
void write_feature_dump(const std::filesystem::path& path, const MelSpectrogram& spec);
MelSpectrogram read_feature_dump(const std::filesystem::path& path);

}  // namespace specdetect::dsp

#endif  // SPECDETECT_DSP_H_
