#ifndef SPECDETECT_TOOLS_CLI_RUN_CONFIG_H_
#define SPECDETECT_TOOLS_CLI_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "specdetect/model.h"
#include "specdetect/training.h"

namespace specdetect::cli {

using KeyValues = std::map<std::string, std::string>;

// Fully resolved settings of one command invocation. Sources, lowest
// precedence first: config file, SPECDETECT_SEED, command-line flags.
struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  std::string protocol;
  std::string wav_dir;
  std::string val_protocol;
  std::string val_wav_dir;
  std::string condition;  // degrade.condition, empty = none
  std::string out_dir;
  std::string checkpoint;  // io.checkpoint, read by score
  // Global seed; when present it overrides model.seed and train.seed.
  std::optional<std::uint64_t> seed;
};

// key=value lines; blank lines and lines starting with '#' are ignored.
// Throws ParseError on a line without '=' or a repeated key.
KeyValues read_key_values(const std::filesystem::path& path);

// Throws InvalidArgument on unknown keys or malformed values.
RunConfig resolve_run_config(const KeyValues& file, const char* env_seed, const KeyValues& flags);

// Every key, sorted, one per line. resolve_run_config(parse(text)) gives
// back the same config.
std::string to_text(const RunConfig& cfg);

}  // namespace specdetect::cli

#endif  // SPECDETECT_TOOLS_CLI_RUN_CONFIG_H_
