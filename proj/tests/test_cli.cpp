#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stum/cli/pipeline.hpp"
#include "stum/numerics/blob.hpp"

using namespace stum;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("stum_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small end-to-end configuration: real pipeline, minutes shrunk to seconds.
const char* kMicroConfig = R"({
  "seed": 7100,
  "dataset": {"k": 7, "image_size": 16, "n_fixations": 8,
              "n_variants": 12, "n_test_variants": 3, "exclusion_frames": 320},
  "model": {"feature_dim": 32, "decoder_hidden": 128},
  "training": {"mode": "joint", "epochs": 2, "steps_per_epoch": 6, "batch_pairs": 16,
               "decoder_epochs": 1, "decoder_frame_stride": 16},
  "eval": {"pairs_per_item": 1, "grader_epochs": 10}
})";

fs::path write_micro_config(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream os(p);
  os << kMicroConfig;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.is_open());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STUM_BIN) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("run config: presets, overrides, unknown keys") {
  cli::RunConfig desk = cli::load_run_config(std::nullopt, "desk", std::nullopt, std::nullopt);
  CHECK(desk.k == 10);
  CHECK(desk.image_size == 32);
  CHECK(desk.n_fixations == 200);
  CHECK(desk.feature_dim == 64);
  CHECK(desk.split.n_test_views == 16);
  CHECK(desk.split.n_variants == 50);
  CHECK(desk.encoders.cue.negative_gap == 300);
  CHECK(!desk.config_hash.empty());

  cli::RunConfig paper =
      cli::load_run_config(std::nullopt, "paper-scale", std::nullopt, std::nullopt);
  CHECK(paper.k == 100);
  CHECK(paper.image_size == 128);
  CHECK(paper.feature_dim == 1024);
  CHECK(paper.split.n_test_views == 16);   // 56/16 of 72 views
  CHECK(paper.split.n_variants == 50);     // 40/10 of 50 variants
  CHECK(paper.split.n_test_variants == 10);
  CHECK(paper.config_hash != desk.config_hash);

  // Seed and mode overrides change the resolved config.
  cli::RunConfig seeded = cli::load_run_config(std::nullopt, "desk", 1234, std::string("visual"));
  CHECK(seeded.master_seed == 1234);
  CHECK(seeded.mode == "visual");
  CHECK_FALSE(seeded.encoders.joint);
  CHECK(seeded.config_hash != desk.config_hash);

  // Unknown keys are rejected at every level.
  const fs::path dir = temp_dir("cfg");
  {
    std::ofstream os(dir / "bad1.json");
    os << R"({"datasett": {}})";
  }
  CHECK_THROWS_AS(cli::load_run_config(dir / "bad1.json", "desk", std::nullopt, std::nullopt),
                  num::StumError);
  {
    std::ofstream os(dir / "bad2.json");
    os << R"({"training": {"epoch": 3}})";
  }
  CHECK_THROWS_AS(cli::load_run_config(dir / "bad2.json", "desk", std::nullopt, std::nullopt),
                  num::StumError);
  {
    std::ofstream os(dir / "bad3.json");
    os << R"({"eval": {"gates": {"visual_pair_accuracyy": 0.9}}})";
  }
  CHECK_THROWS_AS(cli::load_run_config(dir / "bad3.json", "desk", std::nullopt, std::nullopt),
                  num::StumError);
  {
    std::ofstream os(dir / "bad4.json");
    os << R"({"training": {"mode": "both"}})";
  }
  CHECK_THROWS_AS(cli::load_run_config(dir / "bad4.json", "desk", std::nullopt, std::nullopt),
                  num::StumError);
  fs::remove_all(dir);
}

TEST_CASE("pipeline: synth -> train -> eval with deterministic artifacts") {
  const fs::path dir = temp_dir("pipe");
  const fs::path cfg_path = write_micro_config(dir);
  cli::RunConfig cfg = cli::load_run_config(cfg_path, "desk", std::nullopt, std::nullopt);

  auto stats = cli::run_synth(cfg, dir / "data", false);
  CHECK(stats.k == 7);
  CHECK(stats.n_fixations == 8);
  CHECK(fs::exists(dir / "data" / "manifest.json"));
  CHECK(fs::exists(dir / "data" / "frames.stumt"));

  // Synth refuses to clobber without force.
  CHECK_THROWS_AS(cli::run_synth(cfg, dir / "data", false), num::StumError);
  CHECK_NOTHROW(cli::run_synth(cfg, dir / "data", true));

  auto train1 = cli::run_train(cfg, dir / "data", dir / "ckpt1");
  CHECK(train1.epochs.size() == 2);
  CHECK(fs::exists(dir / "ckpt1" / "model.json"));
  CHECK(fs::exists(train1.loss_csv));

  auto eval1 = cli::run_eval(cfg, dir / "data", dir / "ckpt1", dir / "report1.json");
  CHECK(fs::exists(dir / "report1.json"));
  // Two-epoch training cannot pass the desk gates; the report must say so.
  CHECK_FALSE(eval1.all_gates_pass);
  CHECK(eval1.report.at("protocols").contains("pairs"));
  CHECK(eval1.report.at("protocols").contains("state_match"));
  CHECK(eval1.report.at("config_hash") == cfg.config_hash);

  // Re-running the whole pipeline reproduces loss.csv and report.json bytes.
  auto train2 = cli::run_train(cfg, dir / "data", dir / "ckpt2");
  cli::run_eval(cfg, dir / "data", dir / "ckpt2", dir / "report2.json");
  CHECK(slurp(train1.loss_csv) == slurp(dir / "ckpt2" / "loss.csv"));
  CHECK(slurp(dir / "report1.json") == slurp(dir / "report2.json"));
  fs::remove_all(dir);
}

TEST_CASE("pipeline: visual mode trains without audio and skips AV gates") {
  const fs::path dir = temp_dir("visual");
  const fs::path cfg_path = write_micro_config(dir);
  cli::RunConfig cfg =
      cli::load_run_config(cfg_path, "desk", std::nullopt, std::string("visual"));
  cfg.train_decoders = false;
  cfg.protocols = {"pairs", "clusters"};

  cli::run_synth(cfg, dir / "data", false);
  auto out = cli::run_train(cfg, dir / "data", dir / "ckpt");
  CHECK(out.epochs.size() == 2);
  for (const auto& e : out.epochs) CHECK(e.av_loss == 0.0);

  auto ev = cli::run_eval(cfg, dir / "data", dir / "ckpt", dir / "report.json");
  CHECK(ev.report.at("protocols").at("pairs").at("audiovisual").at("n_pairs") == 0);
  CHECK_FALSE(ev.report.at("gates").contains("av_pair_accuracy"));
  fs::remove_all(dir);
}

TEST_CASE("cli binary: exit codes and artifacts") {
  const fs::path dir = temp_dir("bin");
  const fs::path cfg = write_micro_config(dir);
  const std::string common = "--config " + cfg.string();

  // Usage errors.
  CHECK(run_cli("definitely-not-a-command") == 1);
  CHECK(run_cli("synth") == 1);  // missing --out

  CHECK(run_cli(common + " synth --out " + (dir / "data").string()) == 0);
  // Second synth without --force fails at runtime.
  CHECK(run_cli(common + " synth --out " + (dir / "data").string()) == 2);
  CHECK(run_cli(common + " synth --force --out " + (dir / "data").string()) == 0);

  CHECK(run_cli(common + " train --data " + (dir / "data").string() + " --out " +
                (dir / "ckpt").string()) == 0);
  CHECK(fs::exists(dir / "ckpt" / "loss.csv"));

  // Micro training cannot clear the gates: eval exits 3 but writes a report.
  CHECK(run_cli(common + " eval --data " + (dir / "data").string() + " --ckpt " +
                (dir / "ckpt").string() + " --out " + (dir / "report.json").string()) == 3);
  CHECK(fs::exists(dir / "report.json"));

  // Roundtrip command: image blob in, audio blob + preview out.
  sim::World world = sim::World::derive(1, 1);
  num::Tensor img = sim::render_view(world.categories[0], 0, 16);
  num::save_blob(dir / "input.stumt", img);
  CHECK(run_cli("roundtrip --ckpt " + (dir / "ckpt").string() + " --in " +
                (dir / "input.stumt").string() +
                " --in-modality image --out-modality audio --out " +
                (dir / "out.stumt").string()) == 0);
  num::Tensor out = num::load_blob(dir / "out.stumt");
  CHECK(out.shape == std::vector<int>{1, 64, 64});
  CHECK(fs::exists(dir / "out.png"));

  // Modality mismatch: audio-shaped blob declared as image.
  CHECK(run_cli("roundtrip --ckpt " + (dir / "ckpt").string() + " --in " +
                (dir / "out.stumt").string() +
                " --in-modality image --out-modality image --out " +
                (dir / "bad.stumt").string()) == 2);
  fs::remove_all(dir);
}
