#include "stum/cli/run_config.hpp"

#include <fstream>

namespace stum::cli {

using json = nlohmann::ordered_json;
using num::check;
using num::Rng;

uint64_t fnv1a_hash(const std::string& s) { return Rng::fnv1a(s); }

namespace {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& where) {
  check(obj.is_object(), "config: " + where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw num::StumError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  // Seed 0 means "derive from the master seed" everywhere.
  cfg.encoders.seed = 0;
  cfg.decoders.seed = 0;
  cfg.grader.seed = 0;
  if (name == "desk") {
    // Defaults in the struct are the desk preset.
  } else if (name == "paper-scale") {
    cfg.model_preset = "paper-scale";
    cfg.k = 100;
    cfg.image_size = 128;
    cfg.n_fixations = 2000;
    cfg.feature_dim = 1024;
    cfg.pairs_per_item = 1;
    cfg.encoders.epochs = 40;
    cfg.encoders.steps_per_epoch = 110;
    cfg.encoders.batch_pairs = 64;
  } else {
    throw num::StumError("config: unknown preset '" + name + "' (use desk or paper-scale)");
  }
  return cfg;
}

namespace {

void apply_json(RunConfig& cfg, const json& root) {
  reject_unknown(root, {"seed", "dataset", "model", "training", "eval"}, "config root");
  read(root, "seed", cfg.master_seed);

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    reject_unknown(d,
                   {"k", "image_size", "n_fixations", "dataset_seed", "split_seed",
                    "stream_seed", "n_test_views", "n_variants", "n_test_variants",
                    "fix_min_frames", "fix_max_frames", "sac_min_frames", "sac_max_frames",
                    "exclusion_frames", "noise_floor"},
                   "dataset");
    read(d, "k", cfg.k);
    read(d, "image_size", cfg.image_size);
    read(d, "n_fixations", cfg.n_fixations);
    read(d, "dataset_seed", cfg.dataset_seed);
    read(d, "split_seed", cfg.split_seed);
    read(d, "stream_seed", cfg.stream_seed);
    read(d, "n_test_views", cfg.split.n_test_views);
    read(d, "n_variants", cfg.split.n_variants);
    read(d, "n_test_variants", cfg.split.n_test_variants);
    read(d, "fix_min_frames", cfg.stream.fix_min_frames);
    read(d, "fix_max_frames", cfg.stream.fix_max_frames);
    read(d, "sac_min_frames", cfg.stream.sac_min_frames);
    read(d, "sac_max_frames", cfg.stream.sac_max_frames);
    read(d, "exclusion_frames", cfg.stream.exclusion_frames);
    read(d, "noise_floor", cfg.stream.noise_floor);
  }
  if (root.contains("model")) {
    const json& m = root.at("model");
    reject_unknown(m,
                   {"preset", "feature_dim", "margin", "squared_distance", "decoder_hidden",
                    "init_seed", "with_decoders"},
                   "model");
    read(m, "preset", cfg.model_preset);
    read(m, "feature_dim", cfg.feature_dim);
    read(m, "margin", cfg.margin);
    read(m, "squared_distance", cfg.squared_distance);
    read(m, "decoder_hidden", cfg.decoder_hidden);
    read(m, "init_seed", cfg.init_seed);
    read(m, "with_decoders", cfg.with_decoders);
  }
  if (root.contains("training")) {
    const json& t = root.at("training");
    reject_unknown(t,
                   {"mode", "epochs", "steps_per_epoch", "batch_pairs", "learning_rate",
                    "online", "seed", "window_frames", "negative_gap", "loss",
                    "train_decoders", "decoder_epochs", "decoder_batch",
                    "decoder_learning_rate", "decoder_frame_stride", "decoder_seed"},
                   "training");
    read(t, "mode", cfg.mode);
    read(t, "epochs", cfg.encoders.epochs);
    read(t, "steps_per_epoch", cfg.encoders.steps_per_epoch);
    read(t, "batch_pairs", cfg.encoders.batch_pairs);
    read(t, "learning_rate", cfg.encoders.learning_rate);
    read(t, "online", cfg.encoders.online);
    read(t, "seed", cfg.encoders.seed);
    read(t, "window_frames", cfg.encoders.cue.window_frames);
    read(t, "negative_gap", cfg.encoders.cue.negative_gap);
    read(t, "loss", cfg.loss_kind);
    read(t, "train_decoders", cfg.train_decoders);
    read(t, "decoder_epochs", cfg.decoders.epochs);
    read(t, "decoder_batch", cfg.decoders.batch);
    read(t, "decoder_learning_rate", cfg.decoders.learning_rate);
    read(t, "decoder_frame_stride", cfg.decoders.frame_stride);
    read(t, "decoder_seed", cfg.decoders.seed);
  }
  if (root.contains("eval")) {
    const json& e = root.at("eval");
    reject_unknown(e,
                   {"pairs_per_item", "pair_seed", "shared_threshold", "grader_epochs",
                    "grader_batch", "grader_lr", "grader_seed", "protocols", "gates"},
                   "eval");
    read(e, "pairs_per_item", cfg.pairs_per_item);
    read(e, "pair_seed", cfg.pair_seed);
    read(e, "shared_threshold", cfg.shared_threshold);
    read(e, "grader_epochs", cfg.grader.epochs);
    read(e, "grader_batch", cfg.grader.batch);
    read(e, "grader_lr", cfg.grader.lr);
    read(e, "grader_seed", cfg.grader.seed);
    read(e, "protocols", cfg.protocols);
    if (e.contains("gates")) {
      const json& g = e.at("gates");
      reject_unknown(g,
                     {"visual_pair_accuracy", "av_pair_accuracy", "grader_holdout",
                      "state_match", "cluster_ratio_max"},
                     "eval.gates");
      read(g, "visual_pair_accuracy", cfg.gate_visual_pair_accuracy);
      read(g, "av_pair_accuracy", cfg.gate_av_pair_accuracy);
      read(g, "grader_holdout", cfg.gate_grader_holdout);
      read(g, "state_match", cfg.gate_state_match);
      read(g, "cluster_ratio_max", cfg.gate_cluster_ratio_max);
    }
  }
}

void resolve(RunConfig& cfg) {
  check(cfg.mode == "visual" || cfg.mode == "joint",
        "config: training.mode must be visual or joint");
  check(cfg.loss_kind == "contrastive" || cfg.loss_kind == "alignment",
        "config: training.loss must be contrastive or alignment");
  // Block seeds default to deterministic derivations of the master seed.
  Rng master(cfg.master_seed);
  if (cfg.dataset_seed == 0) cfg.dataset_seed = master.fork("dataset").seed();
  if (cfg.split_seed == 0) cfg.split_seed = master.fork("split").seed();
  if (cfg.stream_seed == 0) cfg.stream_seed = master.fork("stream").seed();
  if (cfg.encoders.seed == 0) cfg.encoders.seed = master.fork("train").seed();
  if (cfg.decoders.seed == 0) cfg.decoders.seed = master.fork("train_dec").seed();
  if (cfg.init_seed == 0) cfg.init_seed = master.fork("init").seed();
  if (cfg.pair_seed == 0) cfg.pair_seed = master.fork("eval_pairs").seed();
  if (cfg.grader.seed == 0) cfg.grader.seed = master.fork("grader").seed();

  cfg.stream.image_size = cfg.image_size;
  cfg.stream.n_fixations = cfg.n_fixations;
  cfg.encoders.joint = cfg.joint();

  json c;
  c["seed"] = cfg.master_seed;
  c["dataset"] = {{"k", cfg.k},
                  {"image_size", cfg.image_size},
                  {"n_fixations", cfg.n_fixations},
                  {"dataset_seed", cfg.dataset_seed},
                  {"split_seed", cfg.split_seed},
                  {"stream_seed", cfg.stream_seed},
                  {"n_test_views", cfg.split.n_test_views},
                  {"n_variants", cfg.split.n_variants},
                  {"n_test_variants", cfg.split.n_test_variants},
                  {"fix_min_frames", cfg.stream.fix_min_frames},
                  {"fix_max_frames", cfg.stream.fix_max_frames},
                  {"sac_min_frames", cfg.stream.sac_min_frames},
                  {"sac_max_frames", cfg.stream.sac_max_frames},
                  {"exclusion_frames", cfg.stream.exclusion_frames},
                  {"noise_floor", cfg.stream.noise_floor}};
  c["model"] = {{"preset", cfg.model_preset},
                {"feature_dim", cfg.feature_dim},
                {"margin", cfg.margin},
                {"squared_distance", cfg.squared_distance},
                {"decoder_hidden", cfg.decoder_hidden},
                {"init_seed", cfg.init_seed},
                {"with_decoders", cfg.with_decoders}};
  c["training"] = {{"mode", cfg.mode},
                   {"epochs", cfg.encoders.epochs},
                   {"steps_per_epoch", cfg.encoders.steps_per_epoch},
                   {"batch_pairs", cfg.encoders.batch_pairs},
                   {"learning_rate", cfg.encoders.learning_rate},
                   {"online", cfg.encoders.online},
                   {"seed", cfg.encoders.seed},
                   {"window_frames", cfg.encoders.cue.window_frames},
                   {"negative_gap", cfg.encoders.cue.negative_gap},
                   {"loss", cfg.loss_kind},
                   {"train_decoders", cfg.train_decoders},
                   {"decoder_epochs", cfg.decoders.epochs},
                   {"decoder_batch", cfg.decoders.batch},
                   {"decoder_learning_rate", cfg.decoders.learning_rate},
                   {"decoder_frame_stride", cfg.decoders.frame_stride},
                   {"decoder_seed", cfg.decoders.seed}};
  json gates;
  gates["visual_pair_accuracy"] = cfg.gate_visual_pair_accuracy;
  gates["av_pair_accuracy"] = cfg.gate_av_pair_accuracy;
  gates["grader_holdout"] = cfg.gate_grader_holdout;
  gates["state_match"] = cfg.gate_state_match;
  gates["cluster_ratio_max"] = cfg.gate_cluster_ratio_max;
  c["eval"] = {{"pairs_per_item", cfg.pairs_per_item},
               {"pair_seed", cfg.pair_seed},
               {"shared_threshold", cfg.shared_threshold},
               {"grader_epochs", cfg.grader.epochs},
               {"grader_batch", cfg.grader.batch},
               {"grader_lr", cfg.grader.lr},
               {"grader_seed", cfg.grader.seed},
               {"protocols", cfg.protocols},
               {"gates", gates}};
  cfg.canonical = c;
  cfg.config_hash = hex64(fnv1a_hash(c.dump()));
}

}  // namespace

model::ModelConfig RunConfig::make_model_config() const {
  model::ModelConfig mc;
  if (model_preset == "paper-scale") {
    mc = model::ModelConfig::paper_scale(init_seed, with_decoders);
  } else {
    check(model_preset == "desk", "config: unknown model preset '" + model_preset + "'");
    mc = model::ModelConfig::desk(image_size, feature_dim, init_seed, with_decoders);
    mc.image_decoder = model::desk_image_decoder(image_size, feature_dim, decoder_hidden);
    mc.audio_decoder = model::desk_audio_decoder(feature_dim, decoder_hidden);
  }
  mc.margin = margin;
  mc.squared_distance = squared_distance;
  return mc;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& config_path,
                          const std::string& preset, std::optional<uint64_t> seed_override,
                          std::optional<std::string> mode_override) {
  RunConfig cfg = preset_config(preset);
  if (config_path) {
    std::ifstream is(*config_path);
    check(is.is_open(), "config: cannot open " + config_path->string());
    json root = json::parse(is);
    apply_json(cfg, root);
  }
  if (seed_override) cfg.master_seed = *seed_override;
  if (mode_override) cfg.mode = *mode_override;
  resolve(cfg);
  return cfg;
}

}  // namespace stum::cli
