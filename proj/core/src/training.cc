#include "specdetect/training.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "specdetect/checkpoint.h"
#include "specdetect/parallel.h"
#include "specdetect/rng.h"

namespace specdetect::training {
namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw InvalidArgument("config: " + key + " expects a number, got '" + value + "'");
  return v;
}

template <typename I>
I parse_integer(const std::string& key, const std::string& value) {
  I v{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw InvalidArgument("config: " + key + " expects an integer, got '" + value + "'");
  return v;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

Label label_of(data::Key key) {
  return key == data::Key::kBonaFide ? Label::kBonaFide : Label::kSynthetic;
}

struct SampleResult {
  double loss = 0.0;
};

}  // namespace

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.epochs = 50;
  c.batch_size = 256;
  c.lr = 1e-5;
  c.weight_decay = 1e-4;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw InvalidArgument("train config: epochs and batch_size must be >= 1");
  if (!(lr > 0.0) || !(adam_eps > 0.0) || weight_decay < 0.0)
    throw InvalidArgument("train config: lr and adam_eps must be positive, weight_decay non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw InvalidArgument("train config: betas must lie in (0, 1)");
}

std::string to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "epochs=" << cfg.epochs << "\n"
      << "batch_size=" << cfg.batch_size << "\n"
      << "lr=" << format_double(cfg.lr) << "\n"
      << "weight_decay=" << format_double(cfg.weight_decay) << "\n"
      << "beta1=" << format_double(cfg.beta1) << "\n"
      << "beta2=" << format_double(cfg.beta2) << "\n"
      << "adam_eps=" << format_double(cfg.adam_eps) << "\n"
      << "seed=" << cfg.seed << "\n";
  return out.str();
}

TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg = TrainConfig::toy();
  for (const auto& [key, value] : kv) {
    if (key == "epochs") cfg.epochs = parse_integer<int>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_integer<int>(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "beta1") cfg.beta1 = parse_double(key, value);
    else if (key == "beta2") cfg.beta2 = parse_double(key, value);
    else if (key == "adam_eps") cfg.adam_eps = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_integer<std::uint64_t>(key, value);
    else throw InvalidArgument("train config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

template <typename T>
nn::Tensor<T> one_hot(Label target) {
  const bool bona = target == Label::kBonaFide;
  return nn::Tensor<T>({2}, std::vector<T>{bona ? T{1} : T{0}, bona ? T{0} : T{1}});
}

template nn::Tensor<float> one_hot<float>(Label);
template nn::Tensor<double> one_hot<double>(Label);

double bce_loss(const Probabilities& probs, Label target) {
  nn::Graph<double> g;
  nn::Var p = g.constant(nn::Tensor<double>({2}, std::vector<double>{probs.p1, probs.p2}));
  return g.value(g.binary_cross_entropy(p, one_hot<double>(target), kBceEps))[0];
}

AdamState AdamState::zeros_like(const nn::ParamStore<float>& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adamw_step(nn::ParamStore<float>& params, const nn::ParamStore<float>& grads, AdamState& state,
                const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adamw_step: parameter, gradient and state stores differ");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Tensor<float>& theta = params[i].value;
    const nn::Tensor<float>& g = grads[i].value;
    nn::Tensor<float>& m = state.m[i].value;
    nn::Tensor<float>& v = state.v[i].value;
    if (!g.same_shape(theta) || !m.same_shape(theta) || !v.same_shape(theta))
      throw ShapeError("adamw_step: shape mismatch for " + params[i].name);
    const double wd = params[i].decay ? cfg.weight_decay : 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg.adam_eps);
      const double th = theta[j];
      theta[j] = static_cast<float>(th - cfg.lr * update - cfg.lr * wd * th);
    }
  }
}

std::vector<Probabilities> predict(const Dataset& dataset, const nn::ParamStore<float>& params,
                                   const ModelConfig& cfg) {
  std::vector<Probabilities> out(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    out[i] = model::forward<float>(dataset[i].features, params, cfg);
  });
  return out;
}

double dataset_loss(const Dataset& dataset, const nn::ParamStore<float>& params, const ModelConfig& cfg) {
  if (dataset.empty()) throw InvalidArgument("dataset_loss: empty dataset");
  const auto probs = predict(dataset, params, cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) total += bce_loss(probs[i], dataset[i].label);
  return total / static_cast<double>(dataset.size());
}

namespace {

double accuracy_of(const Dataset& dataset, const std::vector<Probabilities>& probs) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    correct += model::classify(probs[i]) == dataset[i].label;
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw TrainingError("train: training set is empty");
  if (val_set.empty()) throw TrainingError("train: validation set is empty");
  model_cfg.validate();
  train_cfg.validate();

  nn::ParamStore<float> params = model::init_parameters<float>(model_cfg);
  AdamState adam = AdamState::zeros_like(params);

  std::vector<model::Patches<float>> patches;
  patches.reserve(train_set.size());
  for (const Example& ex : train_set)
    patches.push_back(model::patchify<float>(ex.features, model_cfg.patch_h, model_cfg.patch_w));

  const std::size_t batch_cap = std::min<std::size_t>(train_cfg.batch_size, train_set.size());
  std::vector<nn::ParamStore<float>> slot_grads(batch_cap, params.zeros_like());
  std::vector<SampleResult> slot_results(batch_cap);
  nn::ParamStore<float> batch_grad = params.zeros_like();

  TrainResult result;
  bool have_best = false;
  std::vector<std::size_t> order(train_set.size());

  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(train_cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_cap) {
      const std::size_t count = std::min(batch_cap, order.size() - start);
      parallel_for(count, [&](std::size_t s) {
        const std::size_t idx = order[start + s];
        nn::ParamStore<float>& grads = slot_grads[s];
        grads.set_zero();
        nn::Graph<float> g;
        model::BoundParams<float> bound(g, params, &grads);
        nn::Var probs = model::forward(g, patches[idx], bound, model_cfg);
        nn::Var loss = g.binary_cross_entropy(probs, one_hot<float>(train_set[idx].label),
                                              static_cast<float>(kBceEps));
        slot_results[s].loss = g.value(loss)[0];
        g.backward(loss);
      });

      // Reduce in slot order so the sum never depends on thread scheduling.
      batch_grad.set_zero();
      const float inv = 1.0f / static_cast<float>(count);
      for (std::size_t s = 0; s < count; ++s) {
        if (!std::isfinite(slot_results[s].loss))
          throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", utterance " +
                              train_set[order[start + s]].utt_id);
        epoch_loss += slot_results[s].loss;
        for (std::size_t p = 0; p < params.size(); ++p) {
          float* dst = batch_grad[p].value.data();
          const float* src = slot_grads[s][p].value.data();
          for (std::size_t j = 0; j < batch_grad[p].value.size(); ++j) dst[j] += src[j] * inv;
        }
      }
      adamw_step(params, batch_grad, adam, train_cfg);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    stats.val_accuracy = accuracy_of(val_set, predict(val_set, params, model_cfg));
    result.history.push_back(stats);
    if (!have_best || stats.val_accuracy > result.best.val_accuracy) {
      result.best = {model_cfg, params, epoch, stats.val_accuracy};
      have_best = true;
    }
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nn::save_tensors(path, ckpt.params);
  std::filesystem::path sidecar = path;
  sidecar += ".cfg";
  std::ofstream out(sidecar, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(sidecar.string() + ": cannot open for writing");
  out << model::to_text(ckpt.model) << "checkpoint.epoch=" << ckpt.epoch << "\n"
      << "checkpoint.val_accuracy=" << format_double(ckpt.val_accuracy) << "\n";
  if (!out) throw IoError(sidecar.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::filesystem::path sidecar = path;
  sidecar += ".cfg";
  auto kv = read_key_values(sidecar);
  Checkpoint ckpt;
  if (auto it = kv.find("checkpoint.epoch"); it != kv.end()) {
    ckpt.epoch = parse_integer<int>(it->first, it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("checkpoint.val_accuracy"); it != kv.end()) {
    ckpt.val_accuracy = parse_double(it->first, it->second);
    kv.erase(it);
  }
  ckpt.model = model::model_config_from_map(kv);
  ckpt.params = model::init_parameters<float>(ckpt.model);
  nn::assign_by_name(nn::load_tensors(path), ckpt.params);
  return ckpt;
}

LoadedDataset load_dataset(const std::vector<data::TrialRecord>& records, const std::filesystem::path& wav_dir,
                           const data::Condition* condition) {
  std::vector<std::optional<Example>> slots(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const data::TrialRecord& r = records[i];
    try {
      audio::AudioBuffer buf = audio::read_wav(wav_dir / (r.utt_id + ".wav"));
      audio::validate(buf);
      buf = audio::resample(buf, audio::kCanonicalRateHz);
      if (condition) buf = data::apply(buf, *condition);
      slots[i] = Example{r.utt_id, dsp::extract_features(buf), label_of(r.key)};
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  LoadedDataset out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (slots[i])
      out.examples.push_back(std::move(*slots[i]));
    else
      out.failures.emplace_back(records[i].utt_id, errors[i]);
  }
  return out;
}

ScoreResult score_dataset(const Checkpoint& ckpt, const std::vector<data::TrialRecord>& records,
                          const std::filesystem::path& wav_dir, const data::Condition* condition) {
  LoadedDataset loaded = load_dataset(records, wav_dir, condition);
  const auto probs = predict(loaded.examples, ckpt.params, ckpt.model);
  ScoreResult out;
  out.skipped = std::move(loaded.failures);
  out.records.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.records.push_back({loaded.examples[i].utt_id, model::score(probs[i])});
  return out;
}

std::string format_scores(const std::vector<ScoreRecord>& records) {
  std::string out;
  char buf[64];
  for (const ScoreRecord& r : records) {
    std::snprintf(buf, sizeof buf, " %.6f\n", r.score);
    out += r.utt_id;
    out += buf;
  }
  return out;
}

void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << format_scores(records);
  if (!out) throw IoError(path.string() + ": write failed");
}

std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open score file");
  std::vector<ScoreRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (f.size() != 2) throw ParseError(path.string(), line_no, "expected '<utt_id> <score>'");
    double score = 0.0;
    try {
      score = parse_double("score", f[1]);
    } catch (const InvalidArgument&) {
      throw ParseError(path.string(), line_no, "score is not a number: " + f[1]);
    }
    records.push_back({f[0], score});
  }
  return records;
}

}  // namespace specdetect::training
