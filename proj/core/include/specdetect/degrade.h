#ifndef SPECDETECT_DEGRADE_H_
#define SPECDETECT_DEGRADE_H_

#include <optional>
#include <string>
#include <vector>

#include "specdetect/audio.h"

namespace specdetect::data {

enum class DegradeKind { kTelephone, kCompression };

enum class Codec {
  // telephone
  kMuLaw,
  kALaw,
  kGsmLike,
  kOpusLike,
  // compression
  kMp3Like,
  kAacLike,
  kOggLike,
};

enum class RateClass { kLow, kHigh };

DegradeKind kind_of(Codec codec);
const char* to_string(Codec codec);
const char* to_string(RateClass rate);

struct CodecStage {
  Codec codec = Codec::kMuLaw;
  RateClass rate = RateClass::kLow;
};

// Ordered codec chain; more than one stage models transcoding.
struct DegradeSpec {
  std::vector<CodecStage> chain;
};

// Applies every stage of `spec` in order to a 16 kHz buffer. Deterministic.
// Throws InvalidArgument for other rates or an empty chain.
audio::AudioBuffer degrade(const audio::AudioBuffer& buf, const DegradeSpec& spec);
audio::AudioBuffer apply_stage(const audio::AudioBuffer& buf, const CodecStage& stage);

// Named evaluation condition; no spec means the identity.
struct Condition {
  std::string name;
  std::string description;
  std::optional<DegradeSpec> spec;
};

audio::AudioBuffer apply(const audio::AudioBuffer& buf, const Condition& condition);

struct ConditionMatrix {
  std::vector<Condition> compression;  // DF-C1 .. DF-C9
  std::vector<Condition> telephone;    // LA-C1 .. LA-C7
};

const ConditionMatrix& condition_matrix();

// Looks a condition up by name in both sets. Throws InvalidArgument listing
// every valid name when it is unknown.
const Condition& find_condition(const std::string& name);
std::vector<std::string> condition_names();

// G.711 companding curves on [-1, 1].
double mu_law_compress(double x);
double mu_law_expand(double y);
double a_law_compress(double x);
double a_law_expand(double y);

}  // namespace specdetect::data

#endif  // SPECDETECT_DEGRADE_H_
