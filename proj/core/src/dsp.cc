#include "specdetect/dsp.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "specdetect/fft.h"

namespace specdetect::dsp {

double hz_to_mel(double f_hz) {
  if (!(f_hz >= 0.0)) throw InvalidArgument("hz_to_mel: frequency must be >= 0");
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_to_hz(double mel) {
  if (!(mel >= 0.0)) throw InvalidArgument("mel_to_hz: mel value must be >= 0");
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

StftParams StftParams::make(int win_samples, int hop_samples, int fft_size) {
  if (win_samples < 1 || hop_samples < 1 || win_samples > fft_size)
    throw InvalidArgument("StftParams: need 1 <= win <= fft_size and hop >= 1");
  StftParams p;
  p.win_samples = win_samples;
  p.hop_samples = hop_samples;
  p.fft_size = fft_size;
  p.window.resize(static_cast<std::size_t>(win_samples));
  // Periodic Hann.
  for (int n = 0; n < win_samples; ++n)
    p.window[static_cast<std::size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win_samples);
  return p;
}

StftParams StftParams::canonical() { return make(400, 160, 512); }

MelFilterbank make_mel_filterbank(int n_mels, const StftParams& params, int sr_hz, double fmin_hz,
                                  double fmax_hz) {
  if (n_mels < 1) throw InvalidArgument("make_mel_filterbank: n_mels must be >= 1");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sr_hz / 2.0))
    throw InvalidArgument("make_mel_filterbank: need 0 <= fmin < fmax <= sr/2");

  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));

  MelFilterbank fb;
  fb.fmin_hz = fmin_hz;
  fb.fmax_hz = fmax_hz;
  fb.weights = Matrix(n_mels, params.num_bins());
  fb.center_hz.assign(edges.begin() + 1, edges.end() - 1);
  const double bin_hz = static_cast<double>(sr_hz) / params.fft_size;
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    for (int k = 0; k < params.num_bins(); ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > left && f <= center)
        w = (f - left) / (center - left);
      else if (f > center && f < right)
        w = (right - f) / (right - center);
      fb.weights.at(m, k) = w;
    }
  }
  return fb;
}

Matrix stft_magnitude(const audio::AudioBuffer& buf, const StftParams& params) {
  const int len = static_cast<int>(buf.samples.size());
  const int hop = params.hop_samples;
  const int win = params.win_samples;
  const int pad = win / 2;
  if (len % hop != 0) throw InvalidArgument("stft_magnitude: length is not a multiple of the hop");
  if (len <= pad) throw InvalidArgument("stft_magnitude: signal shorter than half a window");
  if (static_cast<int>(params.window.size()) != win)
    throw InvalidArgument("stft_magnitude: window length mismatch");

  std::vector<double> padded(static_cast<std::size_t>(len + 2 * pad));
  for (int i = 0; i < len + 2 * pad; ++i) {
    int src = i - pad;
    if (src < 0) src = -src;
    if (src >= len) src = 2 * (len - 1) - src;
    padded[static_cast<std::size_t>(i)] = buf.samples[static_cast<std::size_t>(src)];
  }

  const int n_frames = len / hop;
  Matrix mag(params.num_bins(), n_frames);
  std::vector<double> frame(static_cast<std::size_t>(params.fft_size), 0.0);
  for (int t = 0; t < n_frames; ++t) {
    const double* src = padded.data() + static_cast<std::ptrdiff_t>(t) * hop;
    for (int n = 0; n < win; ++n) frame[static_cast<std::size_t>(n)] = src[n] * params.window[n];
    const auto bins = fft::forward_real(frame);
    for (int k = 0; k < params.num_bins(); ++k) mag.at(k, t) = std::abs(bins[k]);
  }
  return mag;
}

namespace {

const MelFilterbank& canonical_filterbank() {
  static const MelFilterbank fb = make_mel_filterbank(
      kNumMels, StftParams::canonical(), audio::kCanonicalRateHz, 0.0, audio::kCanonicalRateHz / 2.0);
  return fb;
}

}  // namespace

MelSpectrogram mel_spectrogram(const audio::AudioBuffer& buf) {
  const auto expected_len =
      static_cast<std::size_t>(std::llround(audio::kInputSeconds * audio::kCanonicalRateHz));
  if (buf.sample_rate_hz != audio::kCanonicalRateHz || buf.samples.size() != expected_len)
    throw InvalidArgument("mel_spectrogram: expected 5.12 s at 16 kHz");

  const StftParams params = StftParams::canonical();
  const Matrix mag = stft_magnitude(buf, params);
  const MelFilterbank& fb = canonical_filterbank();

  const int n_frames = mag.cols;
  std::vector<double> logmel(static_cast<std::size_t>(kNumMels) * n_frames);
  for (int m = 0; m < kNumMels; ++m) {
    for (int t = 0; t < n_frames; ++t) {
      double acc = 0.0;
      for (int k = 0; k < mag.rows; ++k) acc += fb.weights.at(m, k) * mag.at(k, t);
      logmel[static_cast<std::size_t>(m) * n_frames + t] = std::log(acc + kLogFloor);
    }
  }

  double mean = 0.0;
  for (double v : logmel) mean += v;
  mean /= static_cast<double>(logmel.size());
  double var = 0.0;
  for (double v : logmel) var += (v - mean) * (v - mean);
  var /= static_cast<double>(logmel.size());
  double stddev = std::sqrt(var);
  // A constant matrix leaves only rounding residue in the variance.
  if (stddev <= 1e-12 * std::max(1.0, std::abs(mean))) stddev = 0.0;

  MelSpectrogram spec;
  spec.n_mels = kNumMels;
  spec.n_frames = n_frames;
  spec.params = params;
  spec.data.resize(logmel.size());
  for (std::size_t i = 0; i < logmel.size(); ++i)
    spec.data[i] = stddev > 0.0 ? static_cast<float>((logmel[i] - mean) / stddev) : 0.0f;
  return spec;
}

MelSpectrogram extract_features(const audio::AudioBuffer& buf) {
  audio::validate(buf);
  const audio::AudioBuffer at_rate = audio::resample(buf, audio::kCanonicalRateHz);
  return mel_spectrogram(audio::fit_to_duration(at_rate, audio::kInputSeconds));
}

void write_feature_dump(const std::filesystem::path& path, const MelSpectrogram& spec) {
  std::string out;
  out.reserve(8 + spec.data.size() * 4);
  auto put32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put32(static_cast<std::uint32_t>(spec.n_mels));
  put32(static_cast<std::uint32_t>(spec.n_frames));
  for (float v : spec.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put32(bits);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(path.string() + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError(path.string() + ": write failed");
}

MelSpectrogram read_feature_dump(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError(path.string() + ": cannot open");
  auto get32 = [&]() {
    unsigned char b[4];
    if (!file.read(reinterpret_cast<char*>(b), 4)) throw IoError(path.string() + ": truncated dump");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  MelSpectrogram spec;
  spec.n_mels = static_cast<int>(get32());
  spec.n_frames = static_cast<int>(get32());
  if (spec.n_mels <= 0 || spec.n_frames <= 0) throw IoError(path.string() + ": bad dump dimensions");
  spec.params = StftParams::canonical();
  spec.data.resize(static_cast<std::size_t>(spec.n_mels) * spec.n_frames);
  for (float& v : spec.data) {
    const std::uint32_t bits = get32();
    std::memcpy(&v, &bits, 4);
  }
  return spec;
}

}  // namespace specdetect::dsp
