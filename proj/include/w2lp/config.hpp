// include/w2lp/config.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Flat "key = value" run configuration shared by the command-line tools.
// Lines starting with '#' are comments; unknown keys are errors.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "w2lp/audio.hpp"
#include "w2lp/model.hpp"
#include "w2lp/train.hpp"

namespace w2lp::config {

struct RunConfig {
  audio::FeatureConfig features;

  // "net.preset" names a preset, optionally reshaped by net.blocks,
  // net.repeats and net.channels (0 keeps the preset value). Explicit
  // "model.preproc"/"model.block.N"/... lines replace the preset entirely.
  std::string model_preset = "w2lp-tiny";
  int model_blocks = 0;
  int model_repeats = 0;
  int model_channels = 0;
  std::string model_explicit;  // collected explicit model.* lines

  train::TrainConfig train;

  std::string natural_manifest;
  std::string synthetic_manifest;
  std::string dev_manifest;
  std::string out_dir = "run";

  std::string lm_path;
  std::size_t beam_width = 0;  // 0 selects greedy decoding
  double alpha = 1.0;
  double beta = 1.5;

  int threads = 1;

  // Throws Error(kConfig) naming the key when it is unknown or its value
  // does not parse.
  void Set(std::string_view key, std::string_view value);

  model::ModelConfig ResolveModel() const;

  // Every key with its current value, one per line, including the resolved
  // model lines; Parse(ToText()) reproduces the configuration.
  std::string ToText() const;

  static RunConfig Parse(std::string_view text);
  static RunConfig Load(const std::filesystem::path& path);

  static std::vector<std::string> Keys();
};

}  // namespace w2lp::config
