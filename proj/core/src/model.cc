#include "specdetect/model.h"

#include <cmath>
#include <sstream>

#include "specdetect/rng.h"

namespace specdetect::model {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-6;

std::string layer_prefix(int i) { return "blocks." + std::to_string(i) + "."; }

int parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty())
    throw InvalidArgument("model config: " + key + " expects an integer, got '" + value + "'");
  return v;
}

template <typename T>
Tensor<T> truncated_normal(std::vector<int> shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.truncated_normal(kInitStd));
  return t;
}

}  // namespace

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::canonical() {
  ModelConfig c;
  c.d_model = 768;
  c.depth = 12;
  c.heads = 12;
  c.head_hidden = 768;
  return c;
}

void ModelConfig::validate() const {
  if (d_model < 1 || depth < 0 || heads < 1 || patch_h < 1 || patch_w < 1 || n_mels < 1 ||
      n_frames < 1 || head_hidden < 1)
    throw InvalidArgument("model config: sizes must be positive (depth may be 0)");
  if (n_mels % patch_h != 0) throw InvalidArgument("model config: n_mels not divisible by patch_h");
  if (n_frames % patch_w != 0) throw InvalidArgument("model config: n_frames not divisible by patch_w");
  if (d_model % heads != 0) throw InvalidArgument("model config: d_model not divisible by heads");
}

std::string to_text(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "d_model=" << cfg.d_model << "\n"
      << "depth=" << cfg.depth << "\n"
      << "heads=" << cfg.heads << "\n"
      << "patch_h=" << cfg.patch_h << "\n"
      << "patch_w=" << cfg.patch_w << "\n"
      << "n_mels=" << cfg.n_mels << "\n"
      << "n_frames=" << cfg.n_frames << "\n"
      << "head_hidden=" << cfg.head_hidden << "\n"
      << "seed=" << cfg.seed << "\n";
  return out.str();
}

ModelConfig model_config_from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig cfg = ModelConfig::toy();
  for (const auto& [key, value] : kv) {
    if (key == "d_model") cfg.d_model = parse_int(key, value);
    else if (key == "depth") cfg.depth = parse_int(key, value);
    else if (key == "heads") cfg.heads = parse_int(key, value);
    else if (key == "patch_h") cfg.patch_h = parse_int(key, value);
    else if (key == "patch_w") cfg.patch_w = parse_int(key, value);
    else if (key == "n_mels") cfg.n_mels = parse_int(key, value);
    else if (key == "n_frames") cfg.n_frames = parse_int(key, value);
    else if (key == "head_hidden") cfg.head_hidden = parse_int(key, value);
    else if (key == "seed") {
      try {
        std::size_t used = 0;
        cfg.seed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw InvalidArgument("model config: seed expects an unsigned integer, got '" + value + "'");
      }
    } else {
      throw InvalidArgument("model config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

template <typename T>
ParamStore<T> init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int d = cfg.d_model;
  ParamStore<T> p;
  p.add("patch_embed.weight", truncated_normal<T>({cfg.patch_size(), d}, rng));
  p.add("patch_embed.bias", Tensor<T>({d}), false);
  Tensor<T> pos({cfg.num_patches(), d});
  for (T& v : pos.values()) v = static_cast<T>(rng.normal() * kInitStd);
  p.add("pos_embed", std::move(pos));
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string pre = layer_prefix(i);
    p.add(pre + "norm1.gamma", Tensor<T>({d}, T{1}), false);
    p.add(pre + "norm1.beta", Tensor<T>({d}), false);
    p.add(pre + "attn.qkv.weight", truncated_normal<T>({d, 3 * d}, rng));
    p.add(pre + "attn.qkv.bias", Tensor<T>({3 * d}), false);
    p.add(pre + "attn.proj.weight", truncated_normal<T>({d, d}, rng));
    p.add(pre + "attn.proj.bias", Tensor<T>({d}), false);
    p.add(pre + "norm2.gamma", Tensor<T>({d}, T{1}), false);
    p.add(pre + "norm2.beta", Tensor<T>({d}), false);
    p.add(pre + "mlp.fc1.weight", truncated_normal<T>({d, 4 * d}, rng));
    p.add(pre + "mlp.fc1.bias", Tensor<T>({4 * d}), false);
    p.add(pre + "mlp.fc2.weight", truncated_normal<T>({4 * d, d}, rng));
    p.add(pre + "mlp.fc2.bias", Tensor<T>({d}), false);
  }
  p.add("norm.gamma", Tensor<T>({d}, T{1}), false);
  p.add("norm.beta", Tensor<T>({d}), false);
  p.add("head.fc1.weight", truncated_normal<T>({cfg.frame_dim(), cfg.head_hidden}, rng));
  p.add("head.fc1.bias", Tensor<T>({cfg.head_hidden}), false);
  p.add("head.fc2.weight", truncated_normal<T>({cfg.head_hidden, 2}, rng));
  p.add("head.fc2.bias", Tensor<T>({2}), false);
  return p;
}

Label classify(const Probabilities& probs) {
  return probs.p1 > probs.p2 ? Label::kBonaFide : Label::kSynthetic;
}

template <typename T>
Patches<T> patchify(const dsp::MelSpectrogram& spec, int patch_h, int patch_w) {
  if (patch_h < 1 || patch_w < 1 || spec.n_mels % patch_h != 0 || spec.n_frames % patch_w != 0)
    throw ShapeError("patchify: " + std::to_string(spec.n_mels) + "x" + std::to_string(spec.n_frames) +
                     " is not tiled by " + std::to_string(patch_h) + "x" + std::to_string(patch_w));
  if (spec.data.size() != static_cast<std::size_t>(spec.n_mels) * spec.n_frames)
    throw ShapeError("patchify: data size does not match dimensions");
  Patches<T> out;
  out.freq_patches = spec.n_mels / patch_h;
  out.time_patches = spec.n_frames / patch_w;
  const int n = out.freq_patches * out.time_patches;
  out.rows = Tensor<T>({n, patch_h * patch_w});
  out.coords.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int t = i / out.freq_patches;
    const int f = i % out.freq_patches;
    out.coords.push_back({t, f});
    for (int a = 0; a < patch_h; ++a)
      for (int b = 0; b < patch_w; ++b)
        out.rows.at(i, a * patch_w + b) = static_cast<T>(spec.at(f * patch_h + a, t * patch_w + b));
  }
  return out;
}

template <typename T>
Tensor<T> unpatchify(const Patches<T>& patches, int patch_h, int patch_w) {
  const int n_mels = patches.freq_patches * patch_h;
  const int n_frames = patches.time_patches * patch_w;
  if (patches.rows.cols() != patch_h * patch_w ||
      patches.rows.rows() != patches.freq_patches * patches.time_patches)
    throw ShapeError("unpatchify: patch tensor does not match the grid");
  Tensor<T> out({n_mels, n_frames});
  for (int i = 0; i < patches.rows.rows(); ++i) {
    const GridCoord c = patches.coords[static_cast<std::size_t>(i)];
    for (int a = 0; a < patch_h; ++a)
      for (int b = 0; b < patch_w; ++b)
        out.at(c.f_idx * patch_h + a, c.t_idx * patch_w + b) = patches.rows.at(i, a * patch_w + b);
  }
  return out;
}

template <typename T>
Tensor<T> rearrange_to_frames(const Tensor<T>& tokens, int freq_patches) {
  if (freq_patches < 1 || tokens.rows() % freq_patches != 0)
    throw ShapeError("rearrange_to_frames: token count not divisible by P");
  // Tokens of one time column are contiguous rows, so concatenation is a
  // row-major reshape.
  return tokens.reshaped({tokens.rows() / freq_patches, freq_patches * tokens.cols()});
}

template <typename T>
Tensor<T> frames_to_tokens(const Tensor<T>& frames, int freq_patches) {
  if (freq_patches < 1 || frames.cols() % freq_patches != 0)
    throw ShapeError("frames_to_tokens: frame length not divisible by P");
  return frames.reshaped({frames.rows() * freq_patches, frames.cols() / freq_patches});
}

template <typename T>
Tensor<T> mean_pool(const Tensor<T>& frames) {
  if (frames.empty() || frames.rows() < 1) throw ShapeError("mean_pool: no frames");
  Graph<T> g;
  return g.value(g.mean_rows(g.constant(frames)));
}

template <typename T>
BoundParams<T>::BoundParams(Graph<T>& g, const ParamStore<T>& params, ParamStore<T>* grads)
    : params_(params) {
  if (grads && grads->size() != params.size())
    throw ShapeError("BoundParams: gradient store does not match parameters");
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    vars_.push_back(g.parameter(params[i].value, grads ? &(*grads)[i].value : nullptr));
}

template <typename T>
Var BoundParams<T>::operator[](std::string_view name) const {
  const auto idx = params_.find(name);
  if (!idx) throw InvalidArgument("model: missing parameter " + std::string(name));
  return vars_[*idx];
}

template <typename T>
Var embed(Graph<T>& g, Var patches, const BoundParams<T>& p, const ModelConfig& cfg) {
  if (g.value(patches).rows() != g.value(p["pos_embed"]).rows())
    throw ShapeError("embed: " + std::to_string(g.value(patches).rows()) + " patches but " +
                     std::to_string(g.value(p["pos_embed"]).rows()) + " positions");
  (void)cfg;
  Var e = g.add_bias(g.matmul(patches, p["patch_embed.weight"]), p["patch_embed.bias"]);
  return g.add(e, p["pos_embed"]);
}

template <typename T>
Var encode(Graph<T>& g, Var tokens, const BoundParams<T>& p, const ModelConfig& cfg) {
  const T eps = static_cast<T>(kLayerNormEps);
  const int d = cfg.d_model;
  const int dh = d / cfg.heads;
  const T attn_scale = T{1} / std::sqrt(static_cast<T>(dh));
  Var x = tokens;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string pre = layer_prefix(i);
    Var h = g.layer_norm(x, p[pre + "norm1.gamma"], p[pre + "norm1.beta"], eps);
    Var qkv = g.add_bias(g.matmul(h, p[pre + "attn.qkv.weight"]), p[pre + "attn.qkv.bias"]);
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg.heads));
    for (int k = 0; k < cfg.heads; ++k) {
      Var q = g.slice_cols(qkv, k * dh, dh);
      Var key = g.slice_cols(qkv, d + k * dh, dh);
      Var v = g.slice_cols(qkv, 2 * d + k * dh, dh);
      Var weights = g.softmax_rows(g.scale(g.matmul(q, g.transpose(key)), attn_scale));
      heads.push_back(g.matmul(weights, v));
    }
    Var attn = g.add_bias(g.matmul(g.concat_cols(heads), p[pre + "attn.proj.weight"]),
                          p[pre + "attn.proj.bias"]);
    x = g.add(x, attn);

    Var h2 = g.layer_norm(x, p[pre + "norm2.gamma"], p[pre + "norm2.beta"], eps);
    Var hidden = g.gelu(g.add_bias(g.matmul(h2, p[pre + "mlp.fc1.weight"]), p[pre + "mlp.fc1.bias"]));
    Var mlp = g.add_bias(g.matmul(hidden, p[pre + "mlp.fc2.weight"]), p[pre + "mlp.fc2.bias"]);
    x = g.add(x, mlp);
  }
  return g.layer_norm(x, p["norm.gamma"], p["norm.beta"], eps);
}

template <typename T>
Var rearrange_to_frames(Graph<T>& g, Var tokens, const ModelConfig& cfg) {
  const Tensor<T>& o = g.value(tokens);
  const int P = cfg.freq_patches();
  if (o.rows() % P != 0) throw ShapeError("rearrange_to_frames: token count not divisible by P");
  return g.reshape(tokens, {o.rows() / P, P * o.cols()});
}

template <typename T>
Var mean_pool(Graph<T>& g, Var frames) {
  return g.mean_rows(frames);
}

template <typename T>
Var mlp_head(Graph<T>& g, Var pooled, const BoundParams<T>& p) {
  Var hidden = g.relu(g.add_bias(g.matmul(pooled, p["head.fc1.weight"]), p["head.fc1.bias"]));
  Var logits = g.add_bias(g.matmul(hidden, p["head.fc2.weight"]), p["head.fc2.bias"]);
  return g.sigmoid(logits);
}

template <typename T>
Var forward(Graph<T>& g, const Patches<T>& patches, const BoundParams<T>& p, const ModelConfig& cfg) {
  if (patches.freq_patches != cfg.freq_patches() || patches.time_patches != cfg.time_patches())
    throw ShapeError("forward: patch grid does not match the model config");
  Var tokens = embed(g, g.constant(patches.rows), p, cfg);
  Var encoded = encode(g, tokens, p, cfg);
  Var frames = rearrange_to_frames(g, encoded, cfg);
  return mlp_head(g, mean_pool(g, frames), p);
}

template <typename T>
Probabilities forward(const dsp::MelSpectrogram& spec, const ParamStore<T>& params, const ModelConfig& cfg) {
  if (spec.n_mels != cfg.n_mels || spec.n_frames != cfg.n_frames)
    throw ShapeError("forward: spectrogram shape does not match the model config");
  Graph<T> g;
  BoundParams<T> bound(g, params, nullptr);
  Var out = forward(g, patchify<T>(spec, cfg.patch_h, cfg.patch_w), bound, cfg);
  const Tensor<T>& probs = g.value(out);
  return {static_cast<double>(probs[0]), static_cast<double>(probs[1])};
}

#define SPECDETECT_INSTANTIATE_MODEL(T)                                                          \
  template ParamStore<T> init_parameters<T>(const ModelConfig&);                                 \
  template Patches<T> patchify<T>(const dsp::MelSpectrogram&, int, int);                         \
  template Tensor<T> unpatchify<T>(const Patches<T>&, int, int);                                 \
  template Tensor<T> rearrange_to_frames<T>(const Tensor<T>&, int);                              \
  template Tensor<T> frames_to_tokens<T>(const Tensor<T>&, int);                                 \
  template Tensor<T> mean_pool<T>(const Tensor<T>&);                                             \
  template class BoundParams<T>;                                                                 \
  template Var embed<T>(Graph<T>&, Var, const BoundParams<T>&, const ModelConfig&);              \
  template Var encode<T>(Graph<T>&, Var, const BoundParams<T>&, const ModelConfig&);             \
  template Var rearrange_to_frames<T>(Graph<T>&, Var, const ModelConfig&);                       \
  template Var mean_pool<T>(Graph<T>&, Var);                                                     \
  template Var mlp_head<T>(Graph<T>&, Var, const BoundParams<T>&);                               \
  template Var forward<T>(Graph<T>&, const Patches<T>&, const BoundParams<T>&, const ModelConfig&); \
  template Probabilities forward<T>(const dsp::MelSpectrogram&, const ParamStore<T>&, const ModelConfig&);

SPECDETECT_INSTANTIATE_MODEL(float)
SPECDETECT_INSTANTIATE_MODEL(double)
SPECDETECT_INSTANTIATE_MODEL(long double)

#undef SPECDETECT_INSTANTIATE_MODEL

}  // namespace specdetect::model
