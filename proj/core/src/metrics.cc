#include "specdetect/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace specdetect::metrics {
namespace {

void require_nonempty(const ScoreSet& scores, const char* op) {
  if (scores.bona.empty() || scores.spoof.empty())
    throw InvalidArgument(std::string(op) + ": both bona fide and spoof scores are required");
  for (const auto* v : {&scores.bona, &scores.spoof})
    for (double s : *v)
      if (!std::isfinite(s)) throw InvalidArgument(std::string(op) + ": non-finite score");
}

}  // namespace

RocCurve roc(const ScoreSet& scores) {
  require_nonempty(scores, "roc");
  std::vector<double> bona = scores.bona;
  std::vector<double> spoof = scores.spoof;
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());

  std::vector<double> thresholds;
  thresholds.reserve(bona.size() + spoof.size());
  std::merge(bona.begin(), bona.end(), spoof.begin(), spoof.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nb = static_cast<double>(bona.size());
  const double ns = static_cast<double>(spoof.size());
  RocCurve curve;
  curve.points.reserve(thresholds.size() + 2);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  curve.points.push_back({-kInf, 1.0, 0.0});
  for (double t : thresholds) {
    const auto spoof_below = std::lower_bound(spoof.begin(), spoof.end(), t) - spoof.begin();
    const auto bona_below = std::lower_bound(bona.begin(), bona.end(), t) - bona.begin();
    curve.points.push_back({t, (ns - static_cast<double>(spoof_below)) / ns, static_cast<double>(bona_below) / nb});
  }
  curve.points.push_back({kInf, 0.0, 1.0});
  return curve;
}

EerResult eer(const RocCurve& curve) {
  const auto& pts = curve.points;
  if (pts.size() < 2) throw InvalidArgument("eer: curve needs at least two points");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].fnr - pts[i].fpr;
    if (d < 0.0) continue;
    if (d == 0.0 || i == 0) return {pts[i].fpr, pts[i].threshold};

    const RocPoint& a = pts[i - 1];
    const RocPoint& b = pts[i];
    const double da = a.fnr - a.fpr;
    const double alpha = -da / (d - da);
    const double rate = a.fpr + alpha * (b.fpr - a.fpr);
    double threshold;
    if (std::isfinite(a.threshold) && std::isfinite(b.threshold))
      threshold = a.threshold + alpha * (b.threshold - a.threshold);
    else
      threshold = std::isfinite(b.threshold) ? b.threshold : a.threshold;
    return {rate, threshold};
  }
  // Unreachable for a curve ending at (fpr 0, fnr 1).
  return {pts.back().fpr, pts.back().threshold};
}

EerResult eer(const ScoreSet& scores) { return eer(roc(scores)); }

std::string roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,fnr\n";
  char line[128];
  for (const RocPoint& p : curve.points) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g\n", p.threshold, p.fpr, p.fnr);
    out += line;
  }
  return out;
}

bool is_known_system(const std::string& id) {
  if (id.size() != 3) return false;
  if (!std::isdigit(static_cast<unsigned char>(id[1])) || !std::isdigit(static_cast<unsigned char>(id[2])))
    return false;
  const int n = (id[1] - '0') * 10 + (id[2] - '0');
  if (id[0] == 'A') return n >= 1 && n <= 19;
  if (id[0] == 'T') return n >= 1 && n <= 2;
  return false;
}

SystemBreakdown per_system_accuracy(std::span<const data::TrialRecord> records,
                                    std::span<const bool> correct) {
  if (records.size() != correct.size())
    throw InvalidArgument("per_system_accuracy: records and predictions differ in length");
  SystemBreakdown out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const data::TrialRecord& r = records[i];
    std::string group;
    if (r.key == data::Key::kBonaFide) {
      group = kBonaFideGroup;
    } else if (!r.system_id) {
      group = kUnknownGroup;
      out.unknown_utts.push_back(r.utt_id);
    } else {
      group = *r.system_id;
      if (!is_known_system(group)) out.unknown_utts.push_back(r.utt_id);
    }
    GroupAccuracy& g = out.groups[group];
    ++g.total;
    g.correct += correct[i] ? 1 : 0;
  }
  return out;
}

std::string per_system_markdown(const SystemBreakdown& breakdown) {
  std::ostringstream out;
  out << "| system | trials | correct | accuracy (%) |\n";
  out << "|---|---:|---:|---:|\n";
  char pct[32];
  for (const auto& [name, g] : breakdown.groups) {
    std::snprintf(pct, sizeof pct, "%.2f", 100.0 * g.accuracy());
    out << "| " << name << " | " << g.total << " | " << g.correct << " | " << pct << " |\n";
  }
  return out.str();
}

double leading_silence_ratio(const audio::AudioBuffer& buf) {
  if (buf.samples.empty()) throw InvalidArgument("leading_silence_ratio: empty buffer");
  const std::size_t len = buf.samples.size();
  const auto frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(kSilenceFrameSeconds * buf.sample_rate_hz)));
  const std::size_t n_frames = (len + frame - 1) / frame;

  std::vector<double> rms(n_frames, 0.0);
  for (std::size_t k = 0; k < n_frames; ++k) {
    const std::size_t begin = k * frame;
    const std::size_t end = std::min(len, begin + frame);
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += static_cast<double>(buf.samples[i]) * buf.samples[i];
    rms[k] = std::sqrt(acc / static_cast<double>(end - begin));
  }
  const double peak = *std::max_element(rms.begin(), rms.end());
  if (peak <= 0.0) return 1.0;
  const double threshold = peak * std::pow(10.0, kSilenceThresholdDb / 20.0);
  for (std::size_t k = 0; k < n_frames; ++k)
    if (rms[k] > threshold)
      return std::min(1.0, static_cast<double>(k * frame) / static_cast<double>(len));
  return 1.0;
}

}  // namespace specdetect::metrics
