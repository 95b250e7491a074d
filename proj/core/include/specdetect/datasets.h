#ifndef SPECDETECT_DATASETS_H_
#define SPECDETECT_DATASETS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specdetect/audio.h"

namespace specdetect::data {

enum class Key { kBonaFide, kSpoof };

struct TrialRecord {
  std::string speaker_id;
  std::string utt_id;
  std::optional<std::string> system_id;  // "-" in the file maps to nullopt
  Key key = Key::kBonaFide;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

// ASVspoof CM protocol: five whitespace-separated fields per line
// (speaker, utterance, ignored, system or "-", bonafide|spoof). Blank lines
// are skipped. Throws ParseError naming the line on a wrong field count,
// an unknown key token or a duplicate utterance id.
std::vector<TrialRecord> parse_protocol(const std::filesystem::path& path);
std::vector<TrialRecord> parse_protocol_text(const std::string& text,
                                             const std::string& source_name = "<text>");
std::string format_protocol(const std::vector<TrialRecord>& records);
void write_protocol(const std::filesystem::path& path, const std::vector<TrialRecord>& records);

// Toy corpus layout: <out_dir>/wav/<utt_id>.wav and <out_dir>/protocol.txt.
struct ToyCorpus {
  std::filesystem::path protocol_path;
  std::filesystem::path wav_dir;
  std::vector<TrialRecord> records;
};

// Synthesized parameters of one toy utterance; exposed for tests.
struct ToyUtterance {
  TrialRecord record;
  audio::AudioBuffer audio;
  double leading_silence_s = 0.0;
};

inline constexpr double kNotchLowHz = 2800.0;
inline constexpr double kNotchHighHz = 3200.0;
inline constexpr double kNotchDepthDb = -25.0;

// Generates pair `index` of a toy corpus: a bona fide utterance and a
// synthetic one sharing duration and leading silence. Even pairs use the
// per-10 ms phase-reset artifact (system T01), odd pairs the 2.8-3.2 kHz
// notch (system T02).
std::vector<ToyUtterance> generate_toy_pair(std::uint64_t seed, int index);

// Writes 2 * n_per_class utterances and the protocol. Deterministic in seed.
ToyCorpus generate_toy_corpus(int n_per_class, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

}  // namespace specdetect::data

#endif  // SPECDETECT_DATASETS_H_
