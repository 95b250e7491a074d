#ifndef SPECDETECT_MODEL_H_
#define SPECDETECT_MODEL_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "specdetect/dsp.h"
#include "specdetect/graph.h"
#include "specdetect/tensor.h"

namespace specdetect::model {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

struct ModelConfig {
  int d_model = 64;
  int depth = 2;
  int heads = 4;
  int patch_h = 16;
  int patch_w = 16;
  int n_mels = 80;
  int n_frames = 512;
  int head_hidden = 32;
  std::uint64_t seed = 0;

  // d_model 64, depth 2, 4 heads, head width 32.
  static ModelConfig toy();
  // 768-wide, 12 layers, 12 heads, head width 768.
  static ModelConfig canonical();

  // Throws InvalidArgument on non-positive sizes or when patches do not
  // tile the spectrogram or heads do not divide d_model.
  void validate() const;

  int freq_patches() const { return n_mels / patch_h; }    // P
  int time_patches() const { return n_frames / patch_w; }  // L
  int num_patches() const { return freq_patches() * time_patches(); }
  int patch_size() const { return patch_h * patch_w; }
  int frame_dim() const { return freq_patches() * d_model; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// key=value lines (d_model=64 ...); unknown keys throw.
std::string to_text(const ModelConfig& cfg);
ModelConfig model_config_from_map(const std::map<std::string, std::string>& kv);

// Truncated normal (sigma 0.02) projections, N(0, 0.02^2) positional
// embeddings, zero biases and layer-norm shifts, unit layer-norm scales.
// Biases and layer-norm parameters are flagged as exempt from weight decay.
template <typename T>
ParamStore<T> init_parameters(const ModelConfig& cfg);

enum class Label { kBonaFide, kSynthetic };

struct Probabilities {
  double p1 = 0.5;  // bona fide
  double p2 = 0.5;  // synthetic
};

// Bona fide iff p1 > p2; a tie is synthetic.
Label classify(const Probabilities& probs);

// Higher is more bona fide: p1 - p2.
inline double score(const Probabilities& probs) { return probs.p1 - probs.p2; }

struct GridCoord {
  int t_idx = 0;
  int f_idx = 0;
};

template <typename T>
struct Patches {
  Tensor<T> rows;  // N x (patch_h * patch_w)
  std::vector<GridCoord> coords;
  int freq_patches = 0;
  int time_patches = 0;
};

// Splits an n_mels x n_frames matrix into patch_h x patch_w tiles. Patch i
// has t_idx = i / P and f_idx = i % P (P = n_mels / patch_h), so the tiles
// of one time column are contiguous. Each tile is flattened row-major.
template <typename T>
Patches<T> patchify(const dsp::MelSpectrogram& spec, int patch_h, int patch_w);

// Inverse of patchify.
template <typename T>
Tensor<T> unpatchify(const Patches<T>& patches, int patch_h, int patch_w);

// [N x d] -> [L x P*d]: frame t is the concatenation of the P token rows of
// time column t in ascending f_idx order.
template <typename T>
Tensor<T> rearrange_to_frames(const Tensor<T>& tokens, int freq_patches);
template <typename T>
Tensor<T> frames_to_tokens(const Tensor<T>& frames, int freq_patches);

template <typename T>
Tensor<T> mean_pool(const Tensor<T>& frames);

// Binds every parameter into a graph. `grads` may be null for inference.
template <typename T>
class BoundParams {
 public:
  BoundParams(Graph<T>& g, const ParamStore<T>& params, ParamStore<T>* grads);
  Var operator[](std::string_view name) const;

 private:
  const ParamStore<T>& params_;
  std::vector<Var> vars_;
};

// Graph stages of the detector.
template <typename T>
Var embed(Graph<T>& g, Var patches, const BoundParams<T>& p, const ModelConfig& cfg);
template <typename T>
Var encode(Graph<T>& g, Var tokens, const BoundParams<T>& p, const ModelConfig& cfg);
template <typename T>
Var rearrange_to_frames(Graph<T>& g, Var tokens, const ModelConfig& cfg);
template <typename T>
Var mean_pool(Graph<T>& g, Var frames);
// Linear -> ReLU -> linear -> sigmoid; returns [1 x 2] = (p1, p2).
template <typename T>
Var mlp_head(Graph<T>& g, Var pooled, const BoundParams<T>& p);

// Full composition: patches -> (p1, p2) node.
template <typename T>
Var forward(Graph<T>& g, const Patches<T>& patches, const BoundParams<T>& p,
            const ModelConfig& cfg);

template <typename T>
Probabilities forward(const dsp::MelSpectrogram& spec, const ParamStore<T>& params,
                      const ModelConfig& cfg);

}  // namespace specdetect::model

#endif  // SPECDETECT_MODEL_H_
