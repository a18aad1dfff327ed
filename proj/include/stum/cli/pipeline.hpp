#pragma once

#include "stum/cli/run_config.hpp"
#include "stum/evalharness/eval.hpp"
#include "stum/model/checkpoint.hpp"

namespace stum::cli {

// Pipeline steps shared by the command-line tool and the acceptance suite;
// every artifact carries the resolved config hash and is reproducible from
// (config, seed).

struct SynthStats {
  int n_fixations = 0;
  int n_frames = 0;
  int n_blank_frames = 0;
  int k = 0;
};

SynthStats run_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, bool force);

struct TrainOutput {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path loss_csv;
  std::vector<model::EpochStats> epochs;
};

// Encoder training (visual or joint per config/mode) followed by decoder
// training when enabled. On a non-finite loss the partial state is saved
// under "<out>.failed" and the error is rethrown.
TrainOutput run_train(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& out_ckpt);

struct EvalOutput {
  bool all_gates_pass = false;
  nlohmann::ordered_json report;
};

EvalOutput run_eval(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& ckpt_dir,
                    const std::filesystem::path& report_path);

void run_roundtrip(const std::filesystem::path& ckpt_dir,
                   const std::filesystem::path& input_blob, const std::string& in_modality,
                   const std::string& out_modality, const std::filesystem::path& out_blob);

}  // namespace stum::cli
