#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgt/model.hpp"
#include "pgt/synthdata.hpp"
#include "pgt/trainer.hpp"

namespace pgt::cli {

/// Flat `key = value` configuration shared by all subcommands. Every key has
/// a default; unknown keys are rejected; command-line flags override file
/// values.
struct RunConfig {
  // model
  int image_h = 64;
  int image_w = 64;
  int base_dim = 96;
  std::array<int, 4> stage_depths{2, 2, 6, 2};
  std::array<int, 4> stage_heads{3, 6, 12, 24};
  int prompt_len = 10;
  int decoder_depth = 4;
  int mlp_ratio = 4;
  bool pct_in_encoder = true;
  bool pct_in_decoder = true;
  std::vector<std::string> tasks{"semseg", "edge", "depth", "normal"};
  int semseg_classes = 6;

  // training
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  std::string task_sampling = "round_robin";
  bool augment = true;
  uint64_t seed = 1;

  // data
  std::string data_dir;
  std::string val_dir;
  int count = 64;
  int val_count = 16;
  int min_shapes = 2;
  int max_shapes = 5;

  // io / command specifics
  std::string out;
  std::string checkpoint;
  std::string metrics_file;
  std::string baseline;
  std::string analyze_which;
  std::string analyze_selector;
  int scene_index = 0;
  int growth_min = 1;
  int growth_max = 6;
  bool force = false;

  void set(const std::string& key, const std::string& value);  // ConfigError on unknown key
  static RunConfig from_file(const std::string& path);
  std::string to_text() const;

  ModelConfig model_config() const;
  train::TrainConfig train_config() const;
  synth::GenOptions gen_options() const;
};

}  // namespace pgt::cli
