#include "run_config.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "specdetect/error.h"

namespace specdetect::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_seed(const std::string& where, const std::string& value) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw InvalidArgument(where + ": seed must be an unsigned integer, got '" + value + "'");
  return v;
}

// Splits "model.x" / "train.x" into per-section maps and applies the rest.
void apply(const KeyValues& kv, KeyValues& model_kv, KeyValues& train_kv, RunConfig& cfg,
           const std::string& source) {
  for (const auto& [key, value] : kv) {
    if (key.starts_with("model.")) model_kv[key.substr(6)] = value;
    else if (key.starts_with("train.")) train_kv[key.substr(6)] = value;
    else if (key == "data.protocol") cfg.protocol = value;
    else if (key == "data.wav_dir") cfg.wav_dir = value;
    else if (key == "data.val_protocol") cfg.val_protocol = value;
    else if (key == "data.val_wav_dir") cfg.val_wav_dir = value;
    else if (key == "degrade.condition") cfg.condition = value;
    else if (key == "io.out_dir") cfg.out_dir = value;
    else if (key == "io.checkpoint") cfg.checkpoint = value;
    else if (key == "seed") cfg.seed = parse_seed(source, value);
    else throw InvalidArgument(source + ": unknown config key '" + key + "'");
  }
}

void emit(std::ostringstream& out, const std::string& prefix, const std::string& text) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out << prefix << line << "\n";
}

}  // namespace

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config");
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(path.string(), line_no, "empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw ParseError(path.string(), line_no, "key '" + key + "' given twice");
  }
  return kv;
}

RunConfig resolve_run_config(const KeyValues& file, const char* env_seed, const KeyValues& flags) {
  RunConfig cfg;
  KeyValues model_kv, train_kv;
  apply(file, model_kv, train_kv, cfg, "config file");
  if (env_seed && *env_seed) cfg.seed = parse_seed("SPECDETECT_SEED", env_seed);
  apply(flags, model_kv, train_kv, cfg, "command line");

  cfg.model = model::model_config_from_map(model_kv);
  cfg.train = training::train_config_from_map(train_kv);
  if (cfg.seed) {
    cfg.model.seed = *cfg.seed;
    cfg.train.seed = *cfg.seed;
  }
  if (cfg.val_wav_dir.empty()) cfg.val_wav_dir = cfg.wav_dir;
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "data.protocol=" << cfg.protocol << "\n"
      << "data.val_protocol=" << cfg.val_protocol << "\n"
      << "data.val_wav_dir=" << cfg.val_wav_dir << "\n"
      << "data.wav_dir=" << cfg.wav_dir << "\n"
      << "degrade.condition=" << cfg.condition << "\n"
      << "io.checkpoint=" << cfg.checkpoint << "\n"
      << "io.out_dir=" << cfg.out_dir << "\n";
  emit(out, "model.", model::to_text(cfg.model));
  if (cfg.seed) out << "seed=" << *cfg.seed << "\n";
  emit(out, "train.", training::to_text(cfg.train));
  return out.str();
}

}  // namespace specdetect::cli
