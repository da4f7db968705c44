#pragma once

#include <string>
#include <vector>

#include "gridnet/data.hpp"
#include "gridnet/strategies.hpp"
#include "gridnet/tensor.hpp"

// Experiment configs are flat key = value text under [section] headers;
// see README.md for the full key reference.

namespace gridnet {

struct DatasetConfig {
  std::string kind;  // cifar10 | synth2d | synth3d
  std::string path;  // cifar10 directory; falls back to $GRIDNET_DATA
  SynthSpec synth;
  bool synth_seed_set = false;  // explicit dataset seed vs. run seed
  bool normalize = true;
};

struct ModelConfig {
  std::string family = "vgg9";
  Index base_width = 32;
  Index dense_width = 128;
  std::string grid = "2x2";
  double local_scale = 0.0;  // 0 -> 1/sqrt(N)
  bool adaptive_pools = false;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  int precision = 64;  // 32 | 64 bit floats
  std::vector<std::string> strategies;
  std::string out_dir = "runs";
  std::string raw_text;  // exact file contents, hashed for report filenames
};

inline const std::vector<std::string>& known_strategies() {
  static const std::vector<std::string> names = {"global",   "cnn-dnn", "avg-prob",
                                                 "maj-vot",  "coherent", "transfer"};
  return names;
}

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Total validation: throws ConfigError naming the offending section.key;
// nothing runs on an invalid config.
void validate_config(const ExperimentConfig& cfg);

std::string config_hash_hex(const ExperimentConfig& cfg);

// Human-readable dataset label used as the report/table key.
std::string dataset_label(const ExperimentConfig& cfg);

}  // namespace gridnet
