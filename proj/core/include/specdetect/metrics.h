#ifndef SPECDETECT_METRICS_H_
#define SPECDETECT_METRICS_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "specdetect/audio.h"
#include "specdetect/datasets.h"

namespace specdetect::metrics {

// Scores are "higher is more bona fide".
struct ScoreSet {
  std::vector<double> bona;
  std::vector<double> spoof;
};

// At threshold t a trial is accepted as bona fide iff score >= t.
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;  // spoof scores >= t
  double fnr = 0.0;  // bona scores < t
};

struct RocCurve {
  std::vector<RocPoint> points;  // ascending threshold, -inf and +inf included
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Evaluated at every distinct score plus -inf and +inf.
RocCurve roc(const ScoreSet& scores);

// Exact FNR == FPR point if the curve has one, otherwise the intersection
// of the segment where FNR - FPR changes sign.
EerResult eer(const ScoreSet& scores);
EerResult eer(const RocCurve& curve);

// CSV with header "threshold,fpr,fnr".
std::string roc_csv(const RocCurve& curve);

// correct / total. Throws InvalidArgument on empty or mismatched input.
template <typename L>
double accuracy(std::span<const L> labels, std::span<const L> predictions) {
  if (labels.size() != predictions.size())
    throw InvalidArgument("accuracy: labels and predictions differ in length");
  if (labels.empty()) throw InvalidArgument("accuracy: no classifications");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == predictions[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

struct GroupAccuracy {
  int correct = 0;
  int total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

inline constexpr const char* kBonaFideGroup = "bonafide";
inline constexpr const char* kUnknownGroup = "unknown";

struct SystemBreakdown {
  std::map<std::string, GroupAccuracy> groups;
  // Records whose system id is missing (spoof) or outside A01-A19/T01-T02.
  std::vector<std::string> unknown_utts;
};

// `correct[i]` says whether records[i] was classified correctly. Bona fide
// trials form one group, spoof trials are grouped by system id.
SystemBreakdown per_system_accuracy(std::span<const data::TrialRecord> records,
                                    std::span<const bool> correct);

bool is_known_system(const std::string& system_id);

// Markdown table, one row per group.
std::string per_system_markdown(const SystemBreakdown& breakdown);

inline constexpr double kSilenceFrameSeconds = 0.010;
inline constexpr double kSilenceThresholdDb = -40.0;

// Fraction of the buffer before the first 10 ms frame whose RMS exceeds
// -40 dB relative to the loudest frame. An all-zero buffer gives 1.
double leading_silence_ratio(const audio::AudioBuffer& buf);

}  // namespace specdetect::metrics

#endif  // SPECDETECT_METRICS_H_
