#ifndef SPECDETECT_TRAINING_H_
#define SPECDETECT_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specdetect/datasets.h"
#include "specdetect/degrade.h"
#include "specdetect/dsp.h"
#include "specdetect/model.h"

namespace specdetect::training {

using model::Label;
using model::ModelConfig;
using model::Probabilities;

struct TrainConfig {
  int epochs = 15;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  // Desk-scale defaults used by the tests and the CLI.
  static TrainConfig toy();
  // 50 epochs, batch 256, lr 1e-5, weight decay 1e-4.
  static TrainConfig full_scale();

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string to_text(const TrainConfig& cfg);
TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv);

inline constexpr double kBceEps = 1e-12;

// Mean over the two outputs of the binary cross-entropy against the
// one-hot target: (1, 0) for bona fide, (0, 1) for synthetic.
double bce_loss(const Probabilities& probs, Label target);

template <typename T>
nn::Tensor<T> one_hot(Label target);

struct AdamState {
  nn::ParamStore<float> m;
  nn::ParamStore<float> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const nn::ParamStore<float>& params);
};

// Decoupled weight decay: theta -= lr * (m_hat / (sqrt(v_hat) + eps)) +
// lr * wd * theta, where wd applies only to tensors flagged for decay.
void adamw_step(nn::ParamStore<float>& params, const nn::ParamStore<float>& grads,
                AdamState& state, const TrainConfig& cfg);

struct Example {
  std::string utt_id;
  dsp::MelSpectrogram features;
  Label label = Label::kBonaFide;
};

using Dataset = std::vector<Example>;

struct Checkpoint {
  ModelConfig model;
  nn::ParamStore<float> params;
  int epoch = 0;  // 1-based epoch that produced the snapshot
  double val_accuracy = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch
  double val_accuracy = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochStats> history;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Seeded minibatch AdamW training. Validation accuracy (p1 > p2 rule) is
// measured after every epoch; the snapshot with the highest accuracy is
// returned, the earliest epoch winning ties. Throws TrainingError on an
// empty dataset or a non-finite loss.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch = {});

// Mean loss of `dataset` under `params`, evaluated without updates.
double dataset_loss(const Dataset& dataset, const nn::ParamStore<float>& params,
                    const ModelConfig& cfg);

std::vector<Probabilities> predict(const Dataset& dataset, const nn::ParamStore<float>& params,
                                   const ModelConfig& cfg);

// Writes the tensor file at `path` and a key=value sidecar at
// path + ".cfg" holding the model config, epoch and validation accuracy.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Reads and featurizes the audio of each record from <wav_dir>/<utt>.wav.
// When `condition` is set it is applied in memory before featurization.
// Unreadable files are collected in `failures` (utt id, message) and skipped.
struct LoadedDataset {
  Dataset examples;
  std::vector<std::pair<std::string, std::string>> failures;
};

LoadedDataset load_dataset(const std::vector<data::TrialRecord>& records,
                           const std::filesystem::path& wav_dir,
                           const data::Condition* condition = nullptr);

struct ScoreRecord {
  std::string utt_id;
  double score = 0.0;
};

struct ScoreResult {
  std::vector<ScoreRecord> records;  // protocol order
  std::vector<std::pair<std::string, std::string>> skipped;
};

// score = p1 - p2 per trial, protocol order preserved.
ScoreResult score_dataset(const Checkpoint& ckpt, const std::vector<data::TrialRecord>& records,
                          const std::filesystem::path& wav_dir,
                          const data::Condition* condition = nullptr);

// "<utt_id> <score>" per line, score with 6 decimals, LF endings.
std::string format_scores(const std::vector<ScoreRecord>& records);
void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path);

}  // namespace specdetect::training

#endif  // SPECDETECT_TRAINING_H_
