#include "commands.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "run_config.h"
#include "specdetect/audio.h"
#include "specdetect/datasets.h"
#include "specdetect/degrade.h"
#include "specdetect/dsp.h"
#include "specdetect/error.h"
#include "specdetect/metrics.h"
#include "specdetect/parallel.h"
#include "specdetect/training.h"

namespace specdetect::cli {
namespace {

namespace fs = std::filesystem;

// Raised for problems the user fixes by changing the invocation.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

KeyValues parse_overrides(const std::vector<std::string>& sets) {
  KeyValues kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

RunConfig resolve(const std::string& config_path, KeyValues flags) {
  KeyValues file;
  try {
    if (!config_path.empty()) file = read_key_values(config_path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return resolve_run_config(file, std::getenv("SPECDETECT_SEED"), flags);
}

// --- featurize ---

struct FeaturizeArgs {
  std::string in;
  std::string out;
};

int cmd_featurize(const FeaturizeArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(a.in)) {
    for (const auto& e : fs::directory_iterator(a.in))
      if (e.is_regular_file() && e.path().extension() == ".wav")
        jobs.emplace_back(e.path(), fs::path(a.out) / (e.path().stem().string() + ".feat"));
    std::sort(jobs.begin(), jobs.end());
    if (jobs.empty()) throw UsageError(a.in + ": no .wav files");
    fs::create_directories(a.out);
  } else {
    if (!fs::exists(a.in)) throw UsageError(a.in + ": no such file or directory");
    jobs.emplace_back(a.in, a.out);
  }

  std::vector<std::string> messages(jobs.size());
  std::vector<char> ok(jobs.size(), 0);
  parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      const dsp::MelSpectrogram spec = dsp::extract_features(audio::read_wav(jobs[i].first));
      dsp::write_feature_dump(jobs[i].second, spec);
      messages[i] = jobs[i].first.string() + " -> " + jobs[i].second.string() + " (" +
                    std::to_string(spec.n_mels) + "x" + std::to_string(spec.n_frames) + ")";
      ok[i] = 1;
    } catch (const Error& e) {
      messages[i] = e.what();
    }
  });
  int failed = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (ok[i]) {
      out << messages[i] << "\n";
    } else {
      err << "error: " << messages[i] << "\n";
      ++failed;
    }
  }
  out << "featurized " << jobs.size() - static_cast<std::size_t>(failed) << " of " << jobs.size() << " files\n";
  return failed ? kExitDataFailure : kExitOk;
}

// --- generate-toy ---

struct ToyArgs {
  int n_per_class = 200;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int cmd_generate_toy(const ToyArgs& a, std::ostream& out) {
  if (a.n_per_class < 1) throw UsageError("--n-per-class must be >= 1");
  const data::ToyCorpus c = data::generate_toy_corpus(a.n_per_class, a.seed, a.out_dir);
  out << "wrote " << c.records.size() << " utterances to " << c.wav_dir.string() << "\n"
      << "protocol: " << c.protocol_path.string() << "\n";
  return kExitOk;
}

// --- train ---

struct TrainArgs {
  std::string config;
  std::string protocol;
  std::string wav_dir;
  std::string val_protocol;
  std::string val_wav_dir;
  std::string out;
  std::string seed;
  std::vector<std::string> sets;
};

training::LoadedDataset load_or_report(const std::string& protocol, const std::string& wav_dir,
                                       const data::Condition* condition, std::ostream& err) {
  training::LoadedDataset d = training::load_dataset(data::parse_protocol(protocol), wav_dir, condition);
  for (const auto& [utt, msg] : d.failures) err << "error: " << utt << ": " << msg << "\n";
  return d;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  KeyValues flags = parse_overrides(a.sets);
  if (!a.protocol.empty()) flags["data.protocol"] = a.protocol;
  if (!a.wav_dir.empty()) flags["data.wav_dir"] = a.wav_dir;
  if (!a.val_protocol.empty()) flags["data.val_protocol"] = a.val_protocol;
  if (!a.val_wav_dir.empty()) flags["data.val_wav_dir"] = a.val_wav_dir;
  if (!a.seed.empty()) flags["seed"] = a.seed;
  const RunConfig cfg = resolve(a.config, flags);
  if (cfg.protocol.empty() || cfg.wav_dir.empty()) throw UsageError("train: --protocol and --wav-dir are required");
  if (cfg.val_protocol.empty()) throw UsageError("train: --val-protocol is required");
  if (!cfg.condition.empty()) throw UsageError("train: degrade.condition applies to scoring only");

  fs::path ckpt = a.out;
  if (ckpt.empty()) {
    if (cfg.out_dir.empty()) throw UsageError("train: --out or io.out_dir is required");
    ckpt = fs::path(cfg.out_dir) / "model.ckpt";
  }
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  write_text(ckpt.string() + ".run.cfg", to_text(cfg));

  const auto train_set = load_or_report(cfg.protocol, cfg.wav_dir, nullptr, err);
  const auto val_set = load_or_report(cfg.val_protocol, cfg.val_wav_dir, nullptr, err);
  out << "train " << train_set.examples.size() << " utterances, validation " << val_set.examples.size() << "\n";

  std::ostringstream log;
  log << "epoch,train_loss,val_accuracy\n";
  const training::TrainResult r =
      training::train(train_set.examples, val_set.examples, cfg.model, cfg.train, [&](const training::EpochStats& s) {
        log << s.epoch << "," << fmt("%.9g", s.train_loss) << "," << fmt("%.9g", s.val_accuracy) << "\n";
        out << "epoch " << s.epoch << " loss " << fmt("%.6f", s.train_loss) << " val_acc "
            << fmt("%.4f", s.val_accuracy) << "\n";
      });
  training::save_checkpoint(ckpt, r.best);
  write_text(ckpt.string() + ".log.csv", log.str());
  out << "best epoch " << r.best.epoch << " (val_acc " << fmt("%.4f", r.best.val_accuracy) << ") -> "
      << ckpt.string() << "\n";
  return train_set.failures.empty() && val_set.failures.empty() ? kExitOk : kExitDataFailure;
}

// --- score ---

struct ScoreArgs {
  std::string config;
  std::string checkpoint;
  std::string protocol;
  std::string wav_dir;
  std::string out;
  std::string degrade;
  std::vector<std::string> sets;
};

const data::Condition* lookup_condition(const std::string& name) {
  if (name.empty()) return nullptr;
  try {
    return &data::find_condition(name);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

int cmd_score(const ScoreArgs& a, std::ostream& out, std::ostream& err) {
  KeyValues flags = parse_overrides(a.sets);
  if (!a.protocol.empty()) flags["data.protocol"] = a.protocol;
  if (!a.wav_dir.empty()) flags["data.wav_dir"] = a.wav_dir;
  if (!a.degrade.empty()) flags["degrade.condition"] = a.degrade;
  if (!a.checkpoint.empty()) flags["io.checkpoint"] = a.checkpoint;
  const RunConfig cfg = resolve(a.config, flags);
  if (cfg.protocol.empty() || cfg.wav_dir.empty()) throw UsageError("score: --protocol and --wav-dir are required");
  const data::Condition* condition = lookup_condition(cfg.condition);

  if (cfg.checkpoint.empty()) throw UsageError("score: --checkpoint is required");
  const training::Checkpoint ckpt = training::load_checkpoint(cfg.checkpoint);
  const auto records = data::parse_protocol(cfg.protocol);
  const training::ScoreResult r = training::score_dataset(ckpt, records, cfg.wav_dir, condition);
  for (const auto& [utt, msg] : r.skipped) err << "error: skipped " << utt << ": " << msg << "\n";

  RunConfig snapshot = cfg;
  snapshot.model = ckpt.model;
  training::write_score_file(a.out, r.records);
  write_text(a.out + ".run.cfg", to_text(snapshot));
  out << "scored " << r.records.size() << " of " << records.size() << " trials"
      << (condition ? " under " + condition->name : std::string()) << " -> " << a.out << "\n";
  return r.skipped.empty() ? kExitOk : kExitDataFailure;
}

// --- eval ---

struct EvalArgs {
  std::string scores;
  std::string protocol;
  std::string out_dir;
};

// Condition recorded by `score` next to a score file, if any.
std::string condition_of_scores(const std::string& scores) {
  const fs::path snap = scores + ".run.cfg";
  if (!fs::exists(snap)) return "";
  std::ifstream in(snap);
  for (std::string line; std::getline(in, line);)
    if (line.starts_with("degrade.condition=")) return line.substr(18);
  return "";
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto scores = training::read_score_file(a.scores);
  const auto records = data::parse_protocol(a.protocol);
  std::map<std::string, const data::TrialRecord*> by_utt;
  for (const auto& r : records) by_utt[r.utt_id] = &r;

  metrics::ScoreSet set;
  std::vector<data::TrialRecord> scored;
  std::unordered_set<std::string> seen;
  for (const auto& s : scores) {
    const auto it = by_utt.find(s.utt_id);
    if (it == by_utt.end()) throw Error(a.scores + ": utterance " + s.utt_id + " is not in " + a.protocol);
    if (!seen.insert(s.utt_id).second) throw Error(a.scores + ": utterance " + s.utt_id + " scored twice");
    (it->second->key == data::Key::kBonaFide ? set.bona : set.spoof).push_back(s.score);
    scored.push_back(*it->second);
  }
  if (set.bona.empty() || set.spoof.empty())
    throw Error(a.scores + ": need scores for both bona fide and spoof trials");

  const metrics::RocCurve curve = metrics::roc(set);
  const metrics::EerResult e = metrics::eer(curve);

  // Decision rule p1 > p2, i.e. score > 0.
  std::unique_ptr<bool[]> correct(new bool[scores.size()]);
  int n_correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool says_bona = scores[i].score > 0.0;
    correct[i] = says_bona == (scored[i].key == data::Key::kBonaFide);
    n_correct += correct[i];
  }
  const auto breakdown = metrics::per_system_accuracy(scored, std::span<const bool>(correct.get(), scores.size()));

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_text(dir / "eer.txt", "EER = " + fmt("%.3f", 100.0 * e.eer) + "%\nthreshold = " + fmt("%.6f", e.threshold) + "\n");
  write_text(dir / "roc.csv", metrics::roc_csv(curve));
  std::string md = metrics::per_system_markdown(breakdown);
  if (!breakdown.unknown_utts.empty()) {
    md += "\nTrials with a missing or unrecognized system id:";
    for (const auto& u : breakdown.unknown_utts) md += " " + u;
    md += "\n";
  }
  write_text(dir / "per_system.md", md);
  const double acc = static_cast<double>(n_correct) / static_cast<double>(scores.size());
  write_text(dir / "accuracy.txt", "accuracy = " + fmt("%.3f", 100.0 * acc) + "%\ncorrect = " +
                                       std::to_string(n_correct) + "\ntotal = " + std::to_string(scores.size()) + "\n");
  write_text(dir / "run.cfg", "scores=" + a.scores + "\ndata.protocol=" + a.protocol +
                                  "\ndegrade.condition=" + condition_of_scores(a.scores) + "\n");
  out << "EER " << fmt("%.3f", 100.0 * e.eer) << "% accuracy " << fmt("%.3f", 100.0 * acc) << "% ("
      << scores.size() << " trials) -> " << dir.string() << "\n";
  return kExitOk;
}

// --- report ---

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
  std::string title = "Robustness (EER %)";
};

double read_eer_percent(const fs::path& run) {
  const fs::path p = run / "eer.txt";
  std::ifstream in(p);
  if (!in) throw Error("run " + run.string() + ": missing eer.txt");
  std::string line;
  std::getline(in, line);
  static const std::regex re(R"(EER = ([0-9.]+)%)");
  std::smatch m;
  if (!std::regex_search(line, m, re)) throw Error(p.string() + ": malformed EER line");
  return std::stod(m[1]);
}

std::string condition_label(const fs::path& run) {
  std::ifstream in(run / "run.cfg");
  for (std::string line; std::getline(in, line);)
    if (line.starts_with("degrade.condition=") && line.size() > 18) return line.substr(18);
  return run.filename().string();
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (a.runs.empty()) throw UsageError("report: at least one --runs directory is required");
  std::ostringstream md;
  md << "## " << a.title << "\n\n| condition | description | EER (%) |\n|---|---|---:|\n";
  for (const auto& r : a.runs) {
    const fs::path run = fs::path(r).lexically_normal();
    const double eer = read_eer_percent(run);
    const std::string label = condition_label(run);
    std::string desc;
    try {
      desc = data::find_condition(label).description;
    } catch (const InvalidArgument&) {
      desc = "-";
    }
    md << "| " << label << " | " << desc << " | " << fmt("%.3f", eer) << " |\n";
  }
  if (a.out.empty()) out << md.str();
  else {
    write_text(a.out, md.str());
    out << "wrote " << a.runs.size() << "-row table to " << a.out << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"specdetect: spectrogram-transformer synthetic speech detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "specdetect 0.1.0");

  FeaturizeArgs fa;
  auto* featurize = app.add_subcommand("featurize", "Compute 80x512 log-mel feature dumps");
  featurize->add_option("--in", fa.in, "WAV file or directory of WAV files")->required();
  featurize->add_option("--out", fa.out, "Output dump file, or directory for a directory input")->required();

  ToyArgs ta;
  auto* toy = app.add_subcommand("generate-toy", "Write a seeded toy corpus (WAVs + protocol)");
  toy->add_option("--n-per-class", ta.n_per_class, "Utterances per class")->capture_default_str();
  toy->add_option("--seed", ta.seed, "Corpus seed")->capture_default_str();
  toy->add_option("--out-dir", ta.out_dir, "Output directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a detector and keep the best validation snapshot");
  train->add_option("--config", tr.config, "key=value config file");
  train->add_option("--protocol", tr.protocol, "Training protocol");
  train->add_option("--wav-dir", tr.wav_dir, "Training audio directory");
  train->add_option("--val-protocol", tr.val_protocol, "Validation protocol");
  train->add_option("--val-wav-dir", tr.val_wav_dir, "Validation audio directory (default: --wav-dir)");
  train->add_option("--out", tr.out, "Checkpoint path (default: <io.out_dir>/model.ckpt)");
  train->add_option("--seed", tr.seed, "Seed for initialization and shuffling");
  train->add_option("--set", tr.sets, "Override a config key, KEY=VALUE (repeatable)");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score trials with a checkpoint");
  score->add_option("--config", sc.config, "key=value config file");
  score->add_option("--checkpoint", sc.checkpoint, "Checkpoint written by train");
  score->add_option("--protocol", sc.protocol, "Trial protocol");
  score->add_option("--wav-dir", sc.wav_dir, "Audio directory");
  score->add_option("--out", sc.out, "Score file")->required();
  score->add_option("--degrade", sc.degrade, "Apply a named condition (DF-C1..C9, LA-C1..C7) before featurization");
  score->add_option("--set", sc.sets, "Override a config key, KEY=VALUE (repeatable)");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "EER, ROC, accuracy and per-system breakdown of a score file");
  eval->add_option("--scores", ev.scores, "Score file")->required();
  eval->add_option("--protocol", ev.protocol, "Protocol with the trial keys")->required();
  eval->add_option("--out-dir", ev.out_dir, "Report directory")->required();

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Markdown table of EER across evaluation runs");
  report->add_option("--runs", rp.runs, "Eval output directories")->expected(1, -1);
  report->add_option("--out", rp.out, "Markdown file (default: stdout)");
  report->add_option("--title", rp.title, "Table heading")->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*featurize) return cmd_featurize(fa, out, err);
    if (*toy) return cmd_generate_toy(ta, out);
    if (*train) return cmd_train(tr, out, err);
    if (*score) return cmd_score(sc, out, err);
    if (*eval) return cmd_eval(ev, out);
    if (*report) return cmd_report(rp, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataFailure;
  }
  return kExitUsage;
}

}  // namespace specdetect::cli
