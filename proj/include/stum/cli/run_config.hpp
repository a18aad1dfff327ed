#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "stum/evalharness/eval.hpp"
#include "stum/model/stum_model.hpp"
#include "stum/streamsim/dataset.hpp"

namespace stum::cli {

// Single JSON configuration for the whole pipeline. Unknown keys anywhere are
// rejected (fail-fast on typos); the resolved config's hash is recorded in
// every output artifact.
struct RunConfig {
  // dataset
  int k = 10;
  int image_size = 32;
  int n_fixations = 200;
  uint64_t dataset_seed = 0;
  uint64_t split_seed = 0;
  uint64_t stream_seed = 0;
  sim::SplitConfig split;
  sim::StreamConfig stream;  // image_size/n_fixations mirrored in here

  // model
  std::string model_preset = "desk";  // desk | paper-scale
  int feature_dim = 64;
  float margin = 1.0f;
  bool squared_distance = false;
  int decoder_hidden = 256;
  uint64_t init_seed = 0;
  bool with_decoders = true;

  // training
  std::string mode = "joint";  // visual | joint
  model::TrainEncodersConfig encoders;
  bool train_decoders = true;
  model::TrainDecodersConfig decoders;
  std::string loss_kind = "contrastive";  // contrastive | alignment

  // eval
  int pairs_per_item = 2;
  uint64_t pair_seed = 0;
  bool shared_threshold = true;
  eval::GraderConfig grader;
  std::vector<std::string> protocols = {"pairs", "graders", "state_match", "clusters"};
  double gate_visual_pair_accuracy = 0.95;
  double gate_av_pair_accuracy = 0.95;
  double gate_grader_holdout = 0.98;
  double gate_state_match = 0.90;
  double gate_cluster_ratio_max = 0.5;

  uint64_t master_seed = 42;

  std::string config_hash;          // FNV-1a of the canonical dump
  nlohmann::ordered_json canonical; // fully resolved config

  model::ModelConfig make_model_config() const;
  bool joint() const { return mode == "joint"; }
};

// Built-in presets: "desk" and "paper-scale".
RunConfig preset_config(const std::string& name);

// Loads a config file (all keys optional, unknown keys rejected) on top of a
// preset base, then applies overrides and resolves seeds + hash.
RunConfig load_run_config(const std::optional<std::filesystem::path>& config_path,
                          const std::string& preset, std::optional<uint64_t> seed_override,
                          std::optional<std::string> mode_override);

uint64_t fnv1a_hash(const std::string& s);

}  // namespace stum::cli
