#include "specdetect/datasets.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "specdetect/fft.h"
#include "specdetect/parallel.h"
#include "specdetect/rng.h"

namespace specdetect::data {
namespace {

constexpr int kToyRateHz = audio::kCanonicalRateHz;
constexpr int kHarmonics = 8;
constexpr int kPhaseResetSamples = kToyRateHz / 100;  // 10 ms
constexpr double kNoiseFloorDb = -30.0;
constexpr double kPeakAmplitude = 0.5;

enum class Artifact { kNone, kPhaseReset, kNotch };

std::string pad_index(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05d", prefix, index);
  return buf;
}

// Paul Kellet's economy pink filter over Gaussian white noise.
std::vector<double> pink_noise(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double white = rng.normal();
    b0 = 0.99765 * b0 + white * 0.0990460;
    b1 = 0.96300 * b1 + white * 0.2965164;
    b2 = 0.57000 * b2 + white * 1.0526913;
    out[i] = b0 + b1 + b2 + white * 0.1848;
  }
  return out;
}

double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

void apply_notch(std::vector<double>& x) {
  auto bins = fft::forward_real(x);
  const int n = static_cast<int>(x.size());
  const double gain = std::pow(10.0, kNotchDepthDb / 20.0);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double f = static_cast<double>(k) * kToyRateHz / n;
    if (f >= kNotchLowHz && f <= kNotchHighHz) bins[k] *= gain;
  }
  x = fft::inverse_real(bins, n);
}

// Harmonic "voice": vibrato f0, 1/k harmonic rolloff, syllabic amplitude
// envelope and a pink noise floor 30 dB under the harmonic RMS.
std::vector<double> synth_voice(Rng& rng, std::size_t n, Artifact artifact) {
  const double f0 = rng.uniform(90.0, 260.0);
  const double vib_rate = rng.uniform(4.0, 6.0);
  const double vib_depth = rng.uniform(0.01, 0.03);
  const double syl_rate = rng.uniform(2.0, 5.0);
  const double syl_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double offsets[kHarmonics];
  for (double& o : offsets) o = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<double> voice(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (artifact == Artifact::kPhaseReset && i % kPhaseResetSamples == 0) phase = 0.0;
    const double t = static_cast<double>(i) / kToyRateHz;
    const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * syl_rate * t + syl_phase);
    double s = 0.0;
    for (int k = 1; k <= kHarmonics; ++k) s += std::sin(k * phase + offsets[k - 1]) / k;
    voice[i] = env * s;
    const double f = f0 * (1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t));
    phase = std::fmod(phase + 2.0 * std::numbers::pi * f / kToyRateHz, 2.0 * std::numbers::pi);
  }

  double peak = 0.0;
  for (double v : voice) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : voice) v *= kPeakAmplitude / peak;

  std::vector<double> noise = pink_noise(rng, n);
  const double noise_rms = rms(noise);
  const double target = rms(voice) * std::pow(10.0, kNoiseFloorDb / 20.0);
  for (std::size_t i = 0; i < n; ++i) voice[i] += noise_rms > 0.0 ? noise[i] * target / noise_rms : 0.0;

  if (artifact == Artifact::kNotch) apply_notch(voice);
  return voice;
}

audio::AudioBuffer to_pcm16_buffer(std::size_t silence, const std::vector<double>& voiced) {
  audio::AudioBuffer buf;
  buf.sample_rate_hz = kToyRateHz;
  buf.samples.assign(silence + voiced.size(), 0.0f);
  for (std::size_t i = 0; i < voiced.size(); ++i) {
    // Quantized exactly as write_wav stores it, so files and buffers agree.
    const double q = std::clamp(std::round(voiced[i] * 32768.0), -32768.0, 32767.0);
    buf.samples[silence + i] = static_cast<float>(q / 32768.0);
  }
  return buf;
}

}  // namespace

std::vector<TrialRecord> parse_protocol_text(const std::string& text, const std::string& source_name) {
  std::vector<TrialRecord> records;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (f.size() != 5)
      throw ParseError(source_name, line_no, "expected 5 fields, got " + std::to_string(f.size()));
    TrialRecord r;
    r.speaker_id = f[0];
    r.utt_id = f[1];
    if (f[3] != "-") r.system_id = f[3];
    if (f[4] == "bonafide")
      r.key = Key::kBonaFide;
    else if (f[4] == "spoof")
      r.key = Key::kSpoof;
    else
      throw ParseError(source_name, line_no, "unknown key '" + f[4] + "' (expected bonafide or spoof)");
    if (!seen.insert(r.utt_id).second)
      throw ParseError(source_name, line_no, "duplicate utterance id " + r.utt_id);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<TrialRecord> parse_protocol(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open protocol");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_protocol_text(text.str(), path.string());
}

std::string format_protocol(const std::vector<TrialRecord>& records) {
  std::string out;
  for (const TrialRecord& r : records) {
    out += r.speaker_id + " " + r.utt_id + " - " + r.system_id.value_or("-") + " " +
           (r.key == Key::kBonaFide ? "bonafide" : "spoof") + "\n";
  }
  return out;
}

void write_protocol(const std::filesystem::path& path, const std::vector<TrialRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << format_protocol(records);
  if (!out) throw IoError(path.string() + ": write failed");
}

std::vector<ToyUtterance> generate_toy_pair(std::uint64_t seed, int index) {
  // Duration and leading silence are shared by both members of the pair, so
  // neither statistic separates the classes.
  Rng shared(derive_seed(seed, 3 * static_cast<std::uint64_t>(index)));
  const double duration = shared.uniform(3.0, 6.0);
  const double silence = shared.uniform(0.0, 0.6);
  const auto total = static_cast<std::size_t>(std::llround(duration * kToyRateHz));
  const auto lead = static_cast<std::size_t>(std::llround(silence * kToyRateHz));
  const std::size_t voiced = total - lead;

  Rng bona_rng(derive_seed(seed, 3 * static_cast<std::uint64_t>(index) + 1));
  Rng spoof_rng(derive_seed(seed, 3 * static_cast<std::uint64_t>(index) + 2));
  const bool reset = index % 2 == 0;
  const std::string speaker = pad_index("TSPK", index % 20);

  std::vector<ToyUtterance> out(2);
  out[0].record = {speaker, pad_index("TOY_B", index), std::nullopt, Key::kBonaFide};
  out[0].audio = to_pcm16_buffer(lead, synth_voice(bona_rng, voiced, Artifact::kNone));
  out[0].leading_silence_s = static_cast<double>(lead) / kToyRateHz;
  out[1].record = {speaker, pad_index("TOY_S", index), std::string(reset ? "T01" : "T02"), Key::kSpoof};
  out[1].audio = to_pcm16_buffer(
      lead, synth_voice(spoof_rng, voiced, reset ? Artifact::kPhaseReset : Artifact::kNotch));
  out[1].leading_silence_s = out[0].leading_silence_s;
  return out;
}

ToyCorpus generate_toy_corpus(int n_per_class, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (n_per_class < 1) throw InvalidArgument("generate_toy_corpus: n_per_class must be >= 1");
  ToyCorpus corpus;
  corpus.wav_dir = out_dir / "wav";
  corpus.protocol_path = out_dir / "protocol.txt";
  std::error_code ec;
  std::filesystem::create_directories(corpus.wav_dir, ec);
  if (ec) throw IoError(corpus.wav_dir.string() + ": cannot create directory: " + ec.message());

  std::vector<std::vector<TrialRecord>> slots(static_cast<std::size_t>(n_per_class));
  parallel_for(slots.size(), [&](std::size_t j) {
    for (ToyUtterance& u : generate_toy_pair(seed, static_cast<int>(j))) {
      audio::write_wav(corpus.wav_dir / (u.record.utt_id + ".wav"), u.audio);
      slots[j].push_back(std::move(u.record));
    }
  });
  for (auto& s : slots)
    for (auto& r : s) corpus.records.push_back(std::move(r));
  write_protocol(corpus.protocol_path, corpus.records);
  return corpus;
}

}  // namespace specdetect::data
