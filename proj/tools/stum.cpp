// stum: dataset synthesis, time-cue training, evaluation, and cross-modal
// roundtrips from one JSON config.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "stum/cli/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGatesFailed = 3;

struct CommonArgs {
  std::string config_path;
  std::string preset = "desk";
  uint64_t seed = 0;
  bool seed_set = false;
};

stum::cli::RunConfig load_config(const CommonArgs& args,
                                 std::optional<std::string> mode = std::nullopt) {
  std::optional<std::filesystem::path> path;
  if (!args.config_path.empty()) path = args.config_path;
  std::optional<uint64_t> seed;
  if (args.seed_set) seed = args.seed;
  return stum::cli::load_run_config(path, args.preset, seed, mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STUM pipeline: synthesize audiovisual streams, train the shared "
               "embedding, evaluate, and run cross-modal conversions"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--preset", common.preset, "Config preset: desk or paper-scale")
      ->default_val("desk");
  auto* seed_opt = app.add_option("--seed", common.seed, "Master seed override");

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a dataset directory");
  std::string synth_out;
  bool synth_force = false;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_flag("--force", synth_force, "Overwrite a non-empty output directory");

  // train
  auto* train = app.add_subcommand("train", "Train encoders (and decoders) on a dataset");
  std::string train_data, train_out, train_mode;
  int train_epochs = -1;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output checkpoint directory")->required();
  train->add_option("--mode", train_mode, "visual or joint (overrides config)");
  train->add_option("--epochs", train_epochs, "Epoch override");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
  std::string eval_data, eval_ckpt, eval_report = "report.json", eval_mode;
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--out", eval_report, "Report path (report.json)");
  eval_cmd->add_option("--mode", eval_mode, "visual or joint (overrides config)");

  // roundtrip
  auto* rt = app.add_subcommand("roundtrip", "Convert media through the shared space");
  std::string rt_ckpt, rt_in, rt_out, rt_in_mod, rt_out_mod;
  rt->add_option("--ckpt", rt_ckpt, "Checkpoint directory")->required();
  rt->add_option("--in", rt_in, "Input STUMT1 blob")->required()->check(CLI::ExistingFile);
  rt->add_option("--in-modality", rt_in_mod, "image or audio")->required();
  rt->add_option("--out-modality", rt_out_mod, "image or audio")->required();
  rt->add_option("--out", rt_out, "Output STUMT1 blob (PNG preview written alongside)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  common.seed_set = seed_opt->count() > 0;

  try {
    if (*synth) {
      auto cfg = load_config(common);
      auto stats = stum::cli::run_synth(cfg, synth_out, synth_force);
      std::printf("dataset: %d categories, %d fixations, %d frames (%d blank)\n", stats.k,
                  stats.n_fixations, stats.n_frames, stats.n_blank_frames);
      std::printf("config hash: %s\n", cfg.config_hash.c_str());
      return kExitOk;
    }
    if (*train) {
      std::optional<std::string> mode;
      if (!train_mode.empty()) mode = train_mode;
      auto cfg = load_config(common, mode);
      if (train_epochs >= 0) cfg.encoders.epochs = train_epochs;
      auto out = stum::cli::run_train(cfg, train_data, train_out);
      std::printf("checkpoint: %s\n", out.checkpoint_dir.c_str());
      std::printf("loss csv: %s (%zu epochs)\n", out.loss_csv.c_str(), out.epochs.size());
      return kExitOk;
    }
    if (*eval_cmd) {
      std::optional<std::string> mode;
      if (!eval_mode.empty()) mode = eval_mode;
      auto cfg = load_config(common, mode);
      auto out = stum::cli::run_eval(cfg, eval_data, eval_ckpt, eval_report);
      std::printf("report: %s\n", eval_report.c_str());
      for (const auto& [name, gate] : out.report.at("gates").items()) {
        std::printf("gate %-32s %s (value %.6g, threshold %.6g)\n", name.c_str(),
                    gate.at("pass").get<bool>() ? "PASS" : "FAIL",
                    gate.at("value").get<double>(), gate.at("threshold").get<double>());
      }
      return out.all_gates_pass ? kExitOk : kExitGatesFailed;
    }
    if (*rt) {
      stum::cli::run_roundtrip(rt_ckpt, rt_in, rt_in_mod, rt_out_mod, rt_out);
      std::printf("wrote %s\n", rt_out.c_str());
      return kExitOk;
    }
  } catch (const stum::num::StumError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
