#pragma once

#include <string>

#include "daner/model.hpp"
#include "daner/synth.hpp"
#include "daner/train.hpp"

namespace daner {

/// Everything a run can be configured with: training, model and corpus
/// generation settings plus the data paths. Parsed from flat `key = value`
/// text with `#` comments; keys carry a `train.` / `model.` / `synth.` /
/// `data.` prefix. Unknown keys are an error.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  SynthConfig synth;
  std::string data_source;
  std::string data_target;
  std::string data_out_dir;
};

/// Applies `text` on top of `base` and returns the result. Throws
/// ConfigError with the offending line number on unknown keys or malformed
/// values.
RunConfig parse_config_text(const std::string& text, const RunConfig& base = RunConfig{});

RunConfig load_config_file(const std::string& path, const RunConfig& base = RunConfig{});

/// Sets one key, same validation as file parsing. Used for flag overrides.
void set_config_key(RunConfig& config, const std::string& key, const std::string& value);

/// Full dump, one line per key in a fixed order; parsing it back
/// reproduces `config` exactly.
std::string resolved_config_text(const RunConfig& config);

}  // namespace daner
