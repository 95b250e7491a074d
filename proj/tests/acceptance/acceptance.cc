// Acceptance driver: one PASS/FAIL line per criterion, exit 1 on any FAIL.
//   acceptance [--work-dir DIR] [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.h"
#include "specdetect/audio.h"
#include "specdetect/datasets.h"
#include "specdetect/degrade.h"
#include "specdetect/dsp.h"
#include "specdetect/graph.h"
#include "specdetect/metrics.h"
#include "specdetect/model.h"
#include "specdetect/training.h"

namespace fs = std::filesystem;
using namespace specdetect;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs a CLI command; throws with its stderr on a non-zero exit.
std::string cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (code != cli::kExitOk) {
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    throw std::runtime_error("`" + joined + "` exited " + std::to_string(code) + ": " + err.str());
  }
  return out.str();
}

audio::AudioBuffer tone_mix(double seconds, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  audio::AudioBuffer b;
  b.samples.resize(static_cast<std::size_t>(seconds * b.sample_rate_hz));
  const double f1 = 200 + 2000 * u(gen), f2 = 300 + 5000 * u(gen);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double t = static_cast<double>(i) / b.sample_rate_hz;
    b.samples[i] = static_cast<float>(0.3 * std::sin(2 * M_PI * f1 * t) + 0.1 * std::sin(2 * M_PI * f2 * t) +
                                      0.01 * (u(gen) - 0.5));
  }
  return b;
}

// ---------------------------------------------------------------- 1
Outcome shapes() {
  const model::ModelConfig c = model::ModelConfig::canonical();
  const dsp::MelSpectrogram spec = dsp::extract_features(tone_mix(3.0, 1));
  const auto patches = model::patchify<double>(spec, c.patch_h, c.patch_w);
  const int n = patches.rows.rows();
  nn::Tensor<double> tokens({n, c.d_model});
  const auto frames = model::rearrange_to_frames(tokens, patches.freq_patches);
  const bool ok = spec.n_mels == 80 && spec.n_frames == 512 && n == 160 && c.num_patches() == 160 &&
                  patches.rows.cols() == 256 && frames.rows() == 32 && frames.cols() == 3840 &&
                  c.time_patches() == 32 && c.frame_dim() == 3840;
  return {ok, "mel " + std::to_string(spec.n_mels) + "x" + std::to_string(spec.n_frames) + ", N=" +
                  std::to_string(n) + ", L=" + std::to_string(frames.rows()) + ", frame " +
                  std::to_string(frames.cols())};
}

// ---------------------------------------------------------------- 2
Outcome mel_formula() {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 8000.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double f = u(gen);
    const double back = dsp::mel_to_hz(dsp::hz_to_mel(f));
    worst = std::max(worst, std::abs(back - f) / std::max(f, std::numeric_limits<double>::min()));
  }
  const double zero = dsp::hz_to_mel(0.0);
  return {zero == 0.0 && worst < 1e-9, "hz_to_mel(0)=" + fmt("%g", zero) + ", max rel err " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 3
Outcome gradients() {
  const model::ModelConfig c = model::ModelConfig::toy();
  const auto utt = data::generate_toy_pair(5, 0);
  const dsp::MelSpectrogram spec = dsp::extract_features(utt[1].audio);
  const auto patches = model::patchify<double>(spec, c.patch_h, c.patch_w);
  const auto patches_ld = model::patchify<long double>(spec, c.patch_h, c.patch_w);
  const nn::Tensor<double> target = training::one_hot<double>(model::Label::kSynthetic);
  const nn::Tensor<long double> target_ld = target.cast<long double>();

  nn::LossFunction<double> f = [&](const nn::ParamStore<double>& p, nn::ParamStore<double>* grads) {
    nn::Graph<double> g;
    model::BoundParams<double> b(g, p, grads);
    const nn::Var loss = g.binary_cross_entropy(model::forward(g, patches, b, c), target, training::kBceEps);
    if (grads) g.backward(loss);
    return g.value(loss)[0];
  };
  nn::PreciseLoss<double> precise = [&](const nn::ParamStore<double>& p) {
    const nn::ParamStore<long double> pl = p.cast<long double>();
    nn::Graph<long double> g;
    model::BoundParams<long double> b(g, pl, nullptr);
    const nn::Var out = model::forward(g, patches_ld, b, c);
    return g.value(g.binary_cross_entropy(out, target_ld, static_cast<long double>(training::kBceEps)))[0];
  };
  const auto params = model::init_parameters<double>(c);
  const auto r = nn::check_gradients(f, precise, params, 1e-5, 50, 3, 1e-7);

  int coords = 0, refined = 0;
  bool enough = r.per_param.size() == params.size();
  for (std::size_t i = 0; i < r.per_param.size(); ++i) {
    coords += r.per_param[i].coords;
    refined += r.per_param[i].refined;
    enough = enough && r.per_param[i].coords >= std::min<int>(50, static_cast<int>(params[i].value.size()));
  }
  return {enough && r.max_rel_error < 1e-6,
          std::to_string(r.per_param.size()) + " groups, " + std::to_string(coords) + " coords (" +
              std::to_string(refined) + " refined), max rel err " + fmt("%.3g", r.max_rel_error) + " at " +
              r.worst_param};
}

// ---------------------------------------------------------------- 4
// Independent oracle: threshold sweep over midpoints, nearest-to-equal point,
// linear interpolation towards the neighbour across the crossing.
double midpoint_eer(const metrics::ScoreSet& s) {
  std::vector<double> all = s.bona;
  all.insert(all.end(), s.spoof.begin(), s.spoof.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> th{all.front() - 1.0};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) th.push_back(0.5 * (all[i] + all[i + 1]));
  th.push_back(all.back() + 1.0);
  std::vector<double> fpr, fnr;
  for (double t : th) {
    double fp = 0, fn = 0;
    for (double x : s.spoof) fp += x >= t;
    for (double x : s.bona) fn += x < t;
    fpr.push_back(fp / static_cast<double>(s.spoof.size()));
    fnr.push_back(fn / static_cast<double>(s.bona.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < th.size(); ++i)
    if (std::abs(fnr[i] - fpr[i]) < std::abs(fnr[best] - fpr[best])) best = i;
  const double db = fnr[best] - fpr[best];
  if (db == 0.0) return fnr[best];
  const std::size_t other = db < 0 ? best + 1 : best - 1;
  const double dother = fnr[other] - fpr[other];
  return fnr[best] + db / (db - dother) * (fnr[other] - fnr[best]);
}

Outcome eer_oracle() {
  std::mt19937_64 gen(4);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int size = 2 + static_cast<int>(gen() % 199);
    const int n_bona = 1 + static_cast<int>(gen() % static_cast<std::uint64_t>(size - 1));
    const bool coarse = trial % 3 == 0;  // many ties
    std::normal_distribution<double> bona(0.5 * static_cast<double>(gen() % 5), 1.0), spoof(0.0, 1.0);
    metrics::ScoreSet s;
    for (int i = 0; i < size; ++i) {
      double v = i < n_bona ? bona(gen) : spoof(gen);
      if (coarse) v = std::round(v * 2.0) / 2.0;
      (i < n_bona ? s.bona : s.spoof).push_back(v);
    }
    worst = std::max(worst, std::abs(metrics::eer(s).eer - midpoint_eer(s)));
  }
  const double hand = metrics::eer(metrics::ScoreSet{{0.9, 0.8, 0.6, 0.4}, {0.7, 0.5, 0.3, 0.1}}).eer;
  const double perfect = metrics::eer(metrics::ScoreSet{{0.9, 0.8, 0.7}, {0.1, 0.2, 0.3}}).eer;
  std::normal_distribution<double> d;
  metrics::ScoreSet same;
  for (int i = 0; i < 5000; ++i) same.bona.push_back(d(gen));
  for (int i = 0; i < 5000; ++i) same.spoof.push_back(d(gen));
  const double chance = metrics::eer(same).eer;
  return {worst <= 1e-9 && hand == 0.25 && perfect == 0.0 && std::abs(chance - 0.5) <= 0.05,
          "max |fast - oracle| " + fmt("%.3g", worst) + " over 200 sets, hand " + fmt("%g", hand) + ", perfect " +
              fmt("%g", perfect) + ", same-distribution " + fmt("%.4f", chance)};
}

// ---------------------------------------------------------------- 5
Outcome invariants() {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::vector<std::string> failed;

  const model::ModelConfig canon = model::ModelConfig::canonical();
  nn::Tensor<double> tokens({canon.num_patches(), canon.d_model});
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = nd(gen);
  const auto frames = model::rearrange_to_frames(tokens, canon.freq_patches());
  if (!(model::frames_to_tokens(frames, canon.freq_patches()) == tokens)) failed.push_back("rearrange");
  const dsp::MelSpectrogram spec = dsp::extract_features(tone_mix(5.12, 6));
  const auto patches = model::patchify<float>(spec, 16, 16);
  if (model::unpatchify(patches, 16, 16).vector() != spec.data) failed.push_back("patchify");

  // Pooled head output under frame permutations, through the graph.
  const model::ModelConfig toy = model::ModelConfig::toy();
  const auto params = model::init_parameters<float>(toy);
  nn::Tensor<float> t({toy.num_patches(), toy.d_model});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(nd(gen));
  const auto tf = model::rearrange_to_frames(t, toy.freq_patches());
  auto head = [&](const nn::Tensor<float>& fr) {
    nn::Graph<float> g;
    model::BoundParams<float> b(g, params, nullptr);
    return g.value(model::mlp_head(g, model::mean_pool(g, g.constant(fr)), b));
  };
  const auto base_pool = model::mean_pool(tf);
  const auto base_head = head(tf);
  std::vector<int> order(static_cast<std::size_t>(tf.rows()));
  for (int trial = 0; trial < 50; ++trial) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    nn::Tensor<float> perm(tf.shape());
    for (int r = 0; r < tf.rows(); ++r)
      for (int c = 0; c < tf.cols(); ++c) perm.at(r, c) = tf.at(order[static_cast<std::size_t>(r)], c);
    if (!(model::mean_pool(perm) == base_pool) || !(head(perm) == base_head)) {
      failed.push_back("mean_pool");
      break;
    }
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::function<double(double)>> transforms{
      [](double x) { return std::exp(x); }, [](double x) { return x * x * x + 2 * x; },
      [](double x) { return 3 * x - 7; }, [](double x) { return std::log(x + 1e-3); }};
  for (int i = 0; i < 10000; ++i) {
    model::Probabilities p{u(gen), u(gen)};
    if (i % 10 == 0) p.p2 = p.p1;
    for (const auto& tr : transforms)
      if (model::classify({tr(p.p1), tr(p.p2)}) != model::classify(p)) {
        failed.push_back("classify");
        i = 10000;
        break;
      }
  }

  for (double secs : {0.01, 1.0, 2.5, 5.12, 5.13, 9.0}) {
    const auto once = audio::fit_to_duration(tone_mix(secs, 7), audio::kInputSeconds);
    if (once.samples != audio::fit_to_duration(once, audio::kInputSeconds).samples) {
      failed.push_back("fit_to_duration");
      break;
    }
  }
  std::string detail = failed.empty() ? "all hold" : "broken:";
  for (const auto& f : failed) detail += " " + f;
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------- 6-8
constexpr std::uint64_t kTrainCorpusSeed = 101, kValCorpusSeed = 202, kEvalCorpusSeed = 303, kModelSeed = 7;

struct Experiment {
  fs::path root;
  fs::path ckpt() const { return root / "model.ckpt"; }
  fs::path scores(const std::string& tag) const { return root / "scores" / (tag + ".txt"); }
  fs::path eval_dir(const std::string& tag) const { return root / "eval" / tag; }
  fs::path corpus(const std::string& split) const { return root / "corpus" / split; }
};

// Every condition plus the undegraded run ("plain").
std::vector<std::string> score_tags() {
  std::vector<std::string> tags{"plain"};
  for (const auto& n : data::condition_names()) tags.push_back(n);
  return tags;
}

void run_experiment(const Experiment& x) {
  fs::remove_all(x.root);
  cli({"generate-toy", "--n-per-class", "200", "--seed", std::to_string(kTrainCorpusSeed), "--out-dir",
       x.corpus("train").string()});
  cli({"generate-toy", "--n-per-class", "50", "--seed", std::to_string(kValCorpusSeed), "--out-dir",
       x.corpus("val").string()});
  cli({"generate-toy", "--n-per-class", "100", "--seed", std::to_string(kEvalCorpusSeed), "--out-dir",
       x.corpus("eval").string()});
  const std::string eval_protocol = (x.corpus("eval") / "protocol.txt").string();
  const std::string eval_wavs = (x.corpus("eval") / "wav").string();
  std::cout << "  " << x.root.filename().string() << ": training\n" << std::flush;
  cli({"train", "--protocol", (x.corpus("train") / "protocol.txt").string(), "--wav-dir",
       (x.corpus("train") / "wav").string(), "--val-protocol", (x.corpus("val") / "protocol.txt").string(),
       "--val-wav-dir", (x.corpus("val") / "wav").string(), "--out", x.ckpt().string(), "--seed",
       std::to_string(kModelSeed), "--set", "train.epochs=15"});
  fs::create_directories(x.root / "scores");
  for (const auto& tag : score_tags()) {
    std::vector<std::string> args{"score", "--checkpoint", x.ckpt().string(), "--protocol", eval_protocol,
                                  "--wav-dir", eval_wavs, "--out", x.scores(tag).string()};
    if (tag != "plain") {
      args.push_back("--degrade");
      args.push_back(tag);
    }
    cli(args);
    cli({"eval", "--scores", x.scores(tag).string(), "--protocol", eval_protocol, "--out-dir",
         x.eval_dir(tag).string()});
  }
  std::vector<std::string> df{"report", "--out", (x.root / "report_df.md").string(), "--title", "Compression", "--runs"};
  std::vector<std::string> la{"report", "--out", (x.root / "report_la.md").string(), "--title", "Telephone", "--runs"};
  for (const auto& c : data::condition_matrix().compression) df.push_back(x.eval_dir(c.name).string());
  for (const auto& c : data::condition_matrix().telephone) la.push_back(x.eval_dir(c.name).string());
  cli(df);
  cli(la);
}

double eer_percent(const fs::path& eval_dir) {
  const std::string s = slurp(eval_dir / "eer.txt");
  return std::stod(s.substr(s.find('=') + 1));
}

int table_rows_for(const std::string& table, const std::vector<data::Condition>& conds) {
  int n = 0;
  for (const auto& c : conds) n += table.find("| " + c.name + " | ") != std::string::npos;
  return n;
}

Outcome end_to_end(const Experiment& x) {
  run_experiment(x);
  const double eer = eer_percent(x.eval_dir("plain"));
  const bool identical = slurp(x.scores("plain")) == slurp(x.scores("DF-C1"));
  const bool mu_law = fs::exists(x.eval_dir("LA-C3") / "eer.txt");
  const auto& m = data::condition_matrix();
  const int df_rows = table_rows_for(slurp(x.root / "report_df.md"), m.compression);
  const int la_rows = table_rows_for(slurp(x.root / "report_la.md"), m.telephone);
  std::string log = slurp(x.ckpt().string() + ".log.csv");
  const long epochs = std::count(log.begin(), log.end(), '\n') - 1;
  return {eer <= 5.0 && identical && mu_law && df_rows == 9 && la_rows == 7 && epochs <= 15,
          "eval EER " + fmt("%.3f", eer) + "% after " + std::to_string(epochs) + " epochs, DF-C1 " +
              (identical ? "bit-identical" : "DIFFERS") + ", mu_law EER " +
              (mu_law ? fmt("%.3f", eer_percent(x.eval_dir("LA-C3"))) + "%" : std::string("missing")) +
              ", report rows DF " + std::to_string(df_rows) + "/9 LA " + std::to_string(la_rows) + "/7"};
}

Outcome shortcuts(const Experiment& x) {
  metrics::ScoreSet duration, silence;
  for (const char* split : {"train", "val", "eval"}) {
    for (const auto& rec : data::parse_protocol(x.corpus(split) / "protocol.txt")) {
      const auto buf = audio::read_wav(x.corpus(split) / "wav" / (rec.utt_id + ".wav"));
      auto& d = rec.key == data::Key::kBonaFide ? duration.bona : duration.spoof;
      auto& s = rec.key == data::Key::kBonaFide ? silence.bona : silence.spoof;
      d.push_back(buf.duration_seconds());
      s.push_back(metrics::leading_silence_ratio(buf));
    }
  }
  // Either orientation of the cue counts; report the better one.
  auto best = [](metrics::ScoreSet s) {
    const double up = metrics::eer(s).eer;
    for (auto* v : {&s.bona, &s.spoof})
      for (double& e : *v) e = -e;
    return std::min(up, metrics::eer(s).eer);
  };
  const double d = best(duration), s = best(silence);
  return {d >= 0.40 && s >= 0.40, std::to_string(duration.bona.size() + duration.spoof.size()) +
                                      " utterances, duration-only EER " + fmt("%.3f", 100 * d) +
                                      "%, leading-silence-only EER " + fmt("%.3f", 100 * s) + "%"};
}

Outcome determinism(const Experiment& first, const Experiment& second) {
  if (!fs::exists(first.ckpt())) run_experiment(first);
  run_experiment(second);
  std::vector<std::string> files{"model.ckpt"};
  for (const auto& tag : score_tags()) files.push_back("scores/" + tag + ".txt");
  std::vector<std::string> differing;
  for (const auto& f : files)
    if (slurp(first.root / f) != slurp(second.root / f) || slurp(first.root / f).empty()) differing.push_back(f);
  std::string detail = std::to_string(files.size() - differing.size()) + "/" + std::to_string(files.size()) +
                       " files byte-identical (checkpoint + " + std::to_string(files.size() - 1) + " score files)";
  for (const auto& f : differing) detail += "; differs: " + f;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "specdetect_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) work = argv[++i];
    else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--work-dir DIR] [--only N[,N...]]\n";
      return 2;
    }
  }
  const Experiment first{work / "run_a"}, second{work / "run_b"};

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "shape pipeline", 1, shapes},
      {2, "mel formula", 1, mel_formula},
      {3, "gradient correctness", 120, gradients},
      {4, "EER oracle equivalence", 30, eer_oracle},
      {5, "structural invariants", 10, invariants},
      {6, "end-to-end toy experiment", 900, [&] { return end_to_end(first); }},
      {7, "shortcut guard", 60, [&] {
         if (!fs::exists(first.corpus("eval"))) run_experiment(first);
         return shortcuts(first);
       }},
      {8, "determinism", 900, [&] { return determinism(first, second); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << "; "
              << fmt("%.2f", secs) << " s of " << fmt("%g", c.budget_s) << " s" << (in_time ? "" : " OVER BUDGET")
              << "\n"
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
