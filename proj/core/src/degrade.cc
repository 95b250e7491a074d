#include "specdetect/degrade.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "specdetect/fft.h"

namespace specdetect::data {
namespace {

using audio::AudioBuffer;

constexpr int kWideRateHz = audio::kCanonicalRateHz;
constexpr int kNarrowRateHz = 8000;

// Butterworth 4th order as two biquads.
constexpr double kButterworthQ[2] = {0.54119610014619701, 1.3065629648763764};

class Biquad {
 public:
  static Biquad lowpass(double fc, double fs, double q) { return make(fc, fs, q, false); }
  static Biquad highpass(double fc, double fs, double q) { return make(fc, fs, q, true); }

  void run(std::vector<double>& x) const {
    double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
    for (double& v : x) {
      const double y = b0_ * v + b1_ * x1 + b2_ * x2 - a1_ * y1 - a2_ * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }

 private:
  // Bilinear-transform biquad (audio EQ cookbook form).
  static Biquad make(double fc, double fs, double q, bool high) {
    const double w = 2.0 * std::numbers::pi * fc / fs;
    const double alpha = std::sin(w) / (2.0 * q);
    const double c = std::cos(w);
    const double a0 = 1.0 + alpha;
    Biquad b;
    if (high) {
      b.b0_ = (1.0 + c) / 2.0 / a0;
      b.b1_ = -(1.0 + c) / a0;
    } else {
      b.b0_ = (1.0 - c) / 2.0 / a0;
      b.b1_ = (1.0 - c) / a0;
    }
    b.b2_ = b.b0_;
    b.a1_ = -2.0 * c / a0;
    b.a2_ = (1.0 - alpha) / a0;
    return b;
  }

  double b0_ = 1.0, b1_ = 0.0, b2_ = 0.0, a1_ = 0.0, a2_ = 0.0;
};

void band_pass(std::vector<double>& x, double lo_hz, double hi_hz, double fs) {
  for (double q : kButterworthQ) Biquad::highpass(lo_hz, fs, q).run(x);
  for (double q : kButterworthQ) Biquad::lowpass(hi_hz, fs, q).run(x);
}

std::vector<double> to_double(const AudioBuffer& buf) {
  return {buf.samples.begin(), buf.samples.end()};
}

AudioBuffer to_buffer(const std::vector<double>& x, int rate) {
  AudioBuffer out;
  out.sample_rate_hz = rate;
  out.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] = static_cast<float>(x[i]);
  return out;
}

// Resamples down to `rate`, applies `body`, resamples back and restores the
// original length.
template <typename F>
std::vector<double> at_rate(const std::vector<double>& x, int rate, F body) {
  if (rate == kWideRateHz) {
    std::vector<double> y = x;
    body(y, rate);
    return y;
  }
  AudioBuffer low = audio::resample(to_buffer(x, kWideRateHz), rate);
  std::vector<double> y = to_double(low);
  body(y, rate);
  AudioBuffer back = audio::resample(to_buffer(y, rate), kWideRateHz);
  back.samples.resize(x.size(), back.samples.empty() ? 0.0f : back.samples.back());
  return to_double(back);
}

void compand_8bit(std::vector<double>& x, double (*compress)(double), double (*expand)(double)) {
  for (double& v : x) {
    const double code = std::round(compress(std::clamp(v, -1.0, 1.0)) * 127.0);
    v = expand(std::clamp(code, -127.0, 127.0) / 127.0);
  }
}

void quantize_uniform(std::vector<double>& x, int bits) {
  const double levels = std::ldexp(1.0, bits - 1);
  for (double& v : x) v = std::clamp(std::round(v * levels), -levels, levels - 1.0) / levels;
}

constexpr double kHumHz = 60.0;
constexpr double kHumAmplitude = 1e-3;  // -60 dBFS

void add_hum(std::vector<double>& x, int rate) {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] += kHumAmplitude * std::sin(2.0 * std::numbers::pi * kHumHz * static_cast<double>(i) / rate);
}

// Scales each 20 ms frame so its RMS level lands on a multiple of step_db.
void quantize_frame_energy(std::vector<double>& x, int rate, double step_db) {
  const std::size_t frame = static_cast<std::size_t>(rate / 50);
  for (std::size_t start = 0; start < x.size(); start += frame) {
    const std::size_t end = std::min(x.size(), start + frame);
    double acc = 0.0;
    for (std::size_t i = start; i < end; ++i) acc += x[i] * x[i];
    const double level = std::sqrt(acc / static_cast<double>(end - start));
    if (level <= 0.0) continue;
    const double db = 20.0 * std::log10(level);
    const double gain = std::pow(10.0, (std::round(db / step_db) * step_db - db) / 20.0);
    for (std::size_t i = start; i < end; ++i) x[i] *= gain;
  }
}

double compression_cutoff_hz(Codec codec, RateClass rate) {
  const bool low = rate == RateClass::kLow;
  switch (codec) {
    case Codec::kMp3Like:
      return low ? 5500.0 : 7500.0;
    case Codec::kAacLike:
      return low ? 6000.0 : 7800.0;
    case Codec::kOggLike:
      return low ? 6500.0 : 7800.0;
    default:
      throw InvalidArgument("compression_cutoff_hz: not a compression codec");
  }
}

constexpr int kCodecFrame = 512;
constexpr int kCodecHop = kCodecFrame / 2;
constexpr int kCodecBands = 32;

// Block transform codec stand-in: periodic-Hann frames at 50 % overlap
// (which sum to one), spectrum zeroed above the cutoff, and each bin's
// magnitude rounded to a step proportional to its band's peak magnitude.
std::vector<double> transform_code(const std::vector<double>& x, double cutoff_hz, double step_fraction) {
  const std::size_t n = x.size();
  const std::size_t frames = (n + kCodecHop - 1) / kCodecHop + 1;
  std::vector<double> padded((frames + 1) * kCodecHop, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + kCodecHop);
  std::vector<double> out(padded.size(), 0.0);

  std::vector<double> window(kCodecFrame);
  for (int i = 0; i < kCodecFrame; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kCodecFrame);

  const int n_bins = kCodecFrame / 2 + 1;
  const double bin_hz = static_cast<double>(kWideRateHz) / kCodecFrame;
  std::vector<double> frame(kCodecFrame);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * kCodecHop;
    for (int i = 0; i < kCodecFrame; ++i) frame[i] = padded[start + i] * window[i];
    auto bins = fft::forward_real(frame);

    double band_peak[kCodecBands] = {};
    for (int k = 0; k < n_bins; ++k) {
      if (k * bin_hz > cutoff_hz) bins[k] = 0.0;
      const int b = k * kCodecBands / n_bins;
      band_peak[b] = std::max(band_peak[b], std::abs(bins[k]));
    }
    for (int k = 0; k < n_bins; ++k) {
      const double step = band_peak[k * kCodecBands / n_bins] * step_fraction;
      const double mag = std::abs(bins[k]);
      if (step <= 0.0 || mag <= 0.0) continue;
      bins[k] *= std::round(mag / step) * step / mag;
    }
    const auto y = fft::inverse_real(bins, kCodecFrame);
    for (int i = 0; i < kCodecFrame; ++i) out[start + i] += y[i];
  }
  return {out.begin() + kCodecHop, out.begin() + kCodecHop + static_cast<std::ptrdiff_t>(n)};
}

std::vector<double> run_stage(const std::vector<double>& x, const CodecStage& stage) {
  const bool low = stage.rate == RateClass::kLow;
  switch (stage.codec) {
    case Codec::kMuLaw:
    case Codec::kALaw: {
      std::vector<double> y = x;
      band_pass(y, 300.0, 3400.0, kWideRateHz);
      const bool mu = stage.codec == Codec::kMuLaw;
      return at_rate(y, kNarrowRateHz, [mu](std::vector<double>& v, int) {
        if (mu)
          compand_8bit(v, mu_law_compress, mu_law_expand);
        else
          compand_8bit(v, a_law_compress, a_law_expand);
      });
    }
    case Codec::kGsmLike: {
      // Low rate: narrowband 8 kHz leg. High rate: wideband at 16 kHz.
      std::vector<double> y = x;
      if (low)
        band_pass(y, 300.0, 3400.0, kWideRateHz);
      else
        band_pass(y, 50.0, 7000.0, kWideRateHz);
      return at_rate(y, low ? kNarrowRateHz : kWideRateHz, [](std::vector<double>& v, int rate) {
        quantize_uniform(v, 13);
        add_hum(v, rate);
      });
    }
    case Codec::kOpusLike: {
      const double step_db = low ? 6.0 : 1.5;
      return at_rate(x, low ? kNarrowRateHz : kWideRateHz, [step_db](std::vector<double>& v, int rate) {
        quantize_frame_energy(v, rate, step_db);
      });
    }
    case Codec::kMp3Like:
    case Codec::kAacLike:
    case Codec::kOggLike:
      return transform_code(x, compression_cutoff_hz(stage.codec, stage.rate), low ? 1.0 / 8.0 : 1.0 / 32.0);
  }
  throw InvalidArgument("degrade: unknown codec");
}

Condition identity(std::string name, std::string description) {
  return {std::move(name), std::move(description), std::nullopt};
}

Condition single(std::string name, Codec codec, RateClass rate) {
  std::string description = std::string(to_string(codec)) + " (" + to_string(rate) + ")";
  return {std::move(name), std::move(description), DegradeSpec{{{codec, rate}}}};
}

Condition chain(std::string name, CodecStage first, CodecStage second) {
  std::string description = std::string(to_string(first.codec)) + " (" + to_string(first.rate) + ") -> " +
                            to_string(second.codec) + " (" + to_string(second.rate) + ")";
  return {std::move(name), std::move(description), DegradeSpec{{first, second}}};
}

}  // namespace

DegradeKind kind_of(Codec codec) {
  switch (codec) {
    case Codec::kMuLaw:
    case Codec::kALaw:
    case Codec::kGsmLike:
    case Codec::kOpusLike:
      return DegradeKind::kTelephone;
    default:
      return DegradeKind::kCompression;
  }
}

const char* to_string(Codec codec) {
  switch (codec) {
    case Codec::kMuLaw:
      return "mu_law";
    case Codec::kALaw:
      return "a_law";
    case Codec::kGsmLike:
      return "gsm_like";
    case Codec::kOpusLike:
      return "opus_like";
    case Codec::kMp3Like:
      return "mp3_like";
    case Codec::kAacLike:
      return "aac_like";
    case Codec::kOggLike:
      return "ogg_like";
  }
  return "unknown";
}

const char* to_string(RateClass rate) { return rate == RateClass::kLow ? "low" : "high"; }

double mu_law_compress(double x) {
  constexpr double kMu = 255.0;
  return std::copysign(std::log1p(kMu * std::abs(x)) / std::log1p(kMu), x);
}

double mu_law_expand(double y) {
  constexpr double kMu = 255.0;
  return std::copysign(std::expm1(std::abs(y) * std::log1p(kMu)) / kMu, y);
}

double a_law_compress(double x) {
  constexpr double kA = 87.6;
  const double ax = std::abs(x);
  const double denom = 1.0 + std::log(kA);
  const double y = ax < 1.0 / kA ? kA * ax / denom : (1.0 + std::log(kA * ax)) / denom;
  return std::copysign(y, x);
}

double a_law_expand(double y) {
  constexpr double kA = 87.6;
  const double ay = std::abs(y);
  const double denom = 1.0 + std::log(kA);
  const double x = ay < 1.0 / denom ? ay * denom / kA : std::exp(ay * denom - 1.0) / kA;
  return std::copysign(x, y);
}

AudioBuffer apply_stage(const AudioBuffer& buf, const CodecStage& stage) {
  if (buf.sample_rate_hz != kWideRateHz) throw InvalidArgument("degrade: input must be 16 kHz");
  if (buf.samples.empty()) return buf;
  return to_buffer(run_stage(to_double(buf), stage), kWideRateHz);
}

AudioBuffer degrade(const AudioBuffer& buf, const DegradeSpec& spec) {
  if (buf.sample_rate_hz != kWideRateHz) throw InvalidArgument("degrade: input must be 16 kHz");
  if (spec.chain.empty()) throw InvalidArgument("degrade: empty codec chain");
  AudioBuffer out = buf;
  for (const CodecStage& stage : spec.chain) out = apply_stage(out, stage);
  return out;
}

AudioBuffer apply(const AudioBuffer& buf, const Condition& condition) {
  if (!condition.spec) return buf;
  return degrade(buf, *condition.spec);
}

const ConditionMatrix& condition_matrix() {
  static const ConditionMatrix m = [] {
    using enum Codec;
    constexpr RateClass kLow = RateClass::kLow;
    constexpr RateClass kHigh = RateClass::kHigh;
    ConditionMatrix cm;
    cm.compression = {
        identity("DF-C1", "no compression"),
        single("DF-C2", kMp3Like, kLow),
        single("DF-C3", kMp3Like, kHigh),
        single("DF-C4", kAacLike, kLow),
        single("DF-C5", kAacLike, kHigh),
        single("DF-C6", kOggLike, kLow),
        single("DF-C7", kOggLike, kHigh),
        chain("DF-C8", {kMp3Like, kLow}, {kAacLike, kHigh}),
        chain("DF-C9", {kOggLike, kLow}, {kAacLike, kHigh}),
    };
    cm.telephone = {
        identity("LA-C1", "no transmission"),
        single("LA-C2", kALaw, kLow),
        single("LA-C3", kMuLaw, kLow),
        single("LA-C4", kGsmLike, kLow),
        single("LA-C5", kGsmLike, kHigh),
        single("LA-C6", kOpusLike, kLow),
        single("LA-C7", kOpusLike, kHigh),
    };
    return cm;
  }();
  return m;
}

std::vector<std::string> condition_names() {
  std::vector<std::string> names;
  for (const auto* set : {&condition_matrix().compression, &condition_matrix().telephone})
    for (const Condition& c : *set) names.push_back(c.name);
  return names;
}

const Condition& find_condition(const std::string& name) {
  for (const auto* set : {&condition_matrix().compression, &condition_matrix().telephone})
    for (const Condition& c : *set)
      if (c.name == name) return c;
  std::string valid;
  for (const std::string& n : condition_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw InvalidArgument("unknown condition '" + name + "'; valid conditions: " + valid);
}

}  // namespace specdetect::data
