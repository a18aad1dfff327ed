#include "stum/cli/pipeline.hpp"

#include <cmath>
#include <fstream>

#include "stum/numerics/blob.hpp"
#include "stum/streamsim/png_io.hpp"

namespace stum::cli {

using json = nlohmann::ordered_json;
using num::check;
using num::Tensor;

SynthStats run_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, bool force) {
  sim::Dataset ds = sim::build_dataset(cfg.dataset_seed, cfg.split_seed, cfg.stream_seed, cfg.k,
                                       cfg.split, cfg.stream, cfg.config_hash);
  sim::save_dataset(out_dir, ds, force);
  SynthStats stats;
  stats.k = cfg.k;
  stats.n_fixations = static_cast<int>(ds.stream.fixations.size());
  stats.n_frames = static_cast<int>(ds.stream.length());
  for (size_t i = 0; i < ds.stream.length(); ++i) {
    if (ds.stream.is_blank(i)) ++stats.n_blank_frames;
  }
  return stats;
}

namespace {

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<model::EpochStats>& epochs) {
  std::ofstream os(path);
  check(os.is_open(), "run_train: cannot write " + path.string());
  os << "epoch,visual_loss,av_loss\n";
  char buf[64];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", e.epoch, e.visual_loss, e.av_loss);
    os << buf;
  }
  check(os.good(), "run_train: loss csv write failed");
}

}  // namespace

TrainOutput run_train(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& out_ckpt) {
  sim::Dataset ds = sim::load_dataset(dataset_dir);
  check(ds.config_hash == cfg.config_hash,
        "run_train: dataset was synthesized from a different config (hash " + ds.config_hash +
            " vs " + cfg.config_hash + ")");

  model::StumModel m(cfg.make_model_config());
  std::vector<sim::StreamView> streams{sim::StreamView(ds.stream)};

  TrainOutput out;
  out.checkpoint_dir = out_ckpt;
  out.loss_csv = out_ckpt / "loss.csv";
  try {
    out.epochs = cfg.loss_kind == "alignment"
                     ? m.train_encoders_alignment(streams, cfg.encoders)
                     : m.train_encoders(streams, cfg.encoders);
    if (cfg.train_decoders && cfg.with_decoders) {
      m.train_decoders(streams, cfg.decoders);
    }
  } catch (const num::StumError&) {
    const std::filesystem::path failed = out_ckpt.string() + ".failed";
    model::save_checkpoint(failed, m, cfg.config_hash);
    throw;
  }
  model::save_checkpoint(out_ckpt, m, cfg.config_hash);
  write_loss_csv(out.loss_csv, out.epochs);
  return out;
}

namespace {

json gate_entry(double value, double threshold, bool pass) {
  json g;
  g["value"] = value;
  g["threshold"] = threshold;
  g["pass"] = pass;
  return g;
}

bool wants(const RunConfig& cfg, const std::string& protocol) {
  return std::find(cfg.protocols.begin(), cfg.protocols.end(), protocol) != cfg.protocols.end();
}

double nan_to_null_safe(double v) { return v; }

}  // namespace

EvalOutput run_eval(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& ckpt_dir,
                    const std::filesystem::path& report_path) {
  sim::Dataset ds = sim::load_dataset(dataset_dir);
  model::StumModel m = model::load_checkpoint(ckpt_dir);

  json report;
  report["config_hash"] = cfg.config_hash;
  report["checkpoint_hash"] = model::checkpoint_config_hash(ckpt_dir);
  report["seed"] = cfg.master_seed;
  json protocols;
  bool all_pass = true;
  json gates;

  const bool joint = cfg.joint();

  if (wants(cfg, "pairs")) {
    eval::PairEvalSet set = eval::build_pair_evalset(ds, cfg.pairs_per_item, cfg.pair_seed, joint);
    eval::PairAccuracyReport pr = eval::pair_threshold_accuracy(m, set, cfg.shared_threshold);
    protocols["pairs"] = {
        {"shared_threshold", pr.shared_threshold},
        {"visual",
         {{"accuracy", pr.visual.accuracy},
          {"threshold", pr.visual.threshold},
          {"n_pairs", pr.visual.n_pairs}}},
        {"audiovisual",
         {{"accuracy", pr.audiovisual.accuracy},
          {"threshold", pr.audiovisual.threshold},
          {"n_pairs", pr.audiovisual.n_pairs}}}};
    const bool vp = pr.visual.accuracy >= cfg.gate_visual_pair_accuracy;
    gates["visual_pair_accuracy"] =
        gate_entry(pr.visual.accuracy, cfg.gate_visual_pair_accuracy, vp);
    all_pass = all_pass && vp;
    if (joint) {
      const bool ap = pr.audiovisual.accuracy >= cfg.gate_av_pair_accuracy;
      gates["av_pair_accuracy"] =
          gate_entry(pr.audiovisual.accuracy, cfg.gate_av_pair_accuracy, ap);
      all_pass = all_pass && ap;
    }
  }

  std::optional<eval::Grader> image_grader, audio_grader;
  if (wants(cfg, "graders") || wants(cfg, "state_match")) {
    image_grader = eval::train_grader(ds, cue::Modality::image, cfg.grader);
    audio_grader = eval::train_grader(ds, cue::Modality::audio, cfg.grader);
    protocols["graders"] = {{"image",
                             {{"holdout_accuracy", image_grader->holdout_accuracy()},
                              {"accepted", image_grader->accepted()}}},
                            {"audio",
                             {{"holdout_accuracy", audio_grader->holdout_accuracy()},
                              {"accepted", audio_grader->accepted()}}}};
    const bool gi = image_grader->holdout_accuracy() >= cfg.gate_grader_holdout;
    const bool ga = audio_grader->holdout_accuracy() >= cfg.gate_grader_holdout;
    gates["image_grader_holdout"] =
        gate_entry(image_grader->holdout_accuracy(), cfg.gate_grader_holdout, gi);
    gates["audio_grader_holdout"] =
        gate_entry(audio_grader->holdout_accuracy(), cfg.gate_grader_holdout, ga);
    all_pass = all_pass && gi && ga;
  }

  if (wants(cfg, "state_match")) {
    check(m.has_decoders(),
          "run_eval: state_match requested but the checkpoint has no decoders");
    if (!image_grader->accepted() || !audio_grader->accepted()) {
      // A grader below its holdout gate refuses grading duty: the protocol is
      // recorded as skipped and its gates fail.
      protocols["state_match"] = {{"skipped", "grader refused duty (holdout below gate)"}};
      for (const char* name :
           {"state_match_image_to_audio", "state_match_audio_to_image",
            "state_match_image_to_image", "state_match_audio_to_audio"}) {
        gates[name] = gate_entry(0.0, cfg.gate_state_match, false);
      }
      all_pass = false;
    } else {
      std::vector<eval::EvalItem> items = eval::make_test_items(ds);
      auto rate = [&](cue::Modality in, cue::Modality out) {
        eval::Grader& g = out == cue::Modality::image ? *image_grader : *audio_grader;
        return eval::state_match_rate(m, g, items, in, out);
      };
      const double i2a = rate(cue::Modality::image, cue::Modality::audio);
      const double a2i = rate(cue::Modality::audio, cue::Modality::image);
      const double i2i = rate(cue::Modality::image, cue::Modality::image);
      const double a2a = rate(cue::Modality::audio, cue::Modality::audio);
      protocols["state_match"] = {{"image_to_audio", i2a},
                                  {"audio_to_image", a2i},
                                  {"image_to_image", i2i},
                                  {"audio_to_audio", a2a}};
      for (auto [name, v] : std::initializer_list<std::pair<const char*, double>>{
               {"state_match_image_to_audio", i2a},
               {"state_match_audio_to_image", a2i},
               {"state_match_image_to_image", i2i},
               {"state_match_audio_to_audio", a2a}}) {
        const bool p = v >= cfg.gate_state_match;
        gates[name] = gate_entry(v, cfg.gate_state_match, p);
        all_pass = all_pass && p;
      }
    }
  }

  if (wants(cfg, "clusters")) {
    std::vector<eval::EvalItem> items =
        joint ? eval::make_test_items(ds) : eval::make_test_images(ds);
    std::vector<Tensor> emb;
    std::vector<int> labels;
    for (const auto& item : items) {
      emb.push_back(m.encode(item.input, item.modality));
      labels.push_back(item.label);
    }
    eval::ClusterMetrics cm = eval::cluster_metrics(emb, labels);
    protocols["clusters"] = {{"intra_mean", nan_to_null_safe(cm.intra_mean)},
                             {"inter_mean", cm.inter_mean},
                             {"ratio", cm.ratio},
                             {"purity", cm.nearest_centroid_purity},
                             {"warnings", cm.warnings}};
    const bool cp = std::isfinite(cm.ratio) && cm.ratio <= cfg.gate_cluster_ratio_max;
    gates["cluster_ratio"] = gate_entry(cm.ratio, cfg.gate_cluster_ratio_max, cp);
    all_pass = all_pass && cp;
  }

  report["protocols"] = protocols;
  report["gates"] = gates;
  report["all_gates_pass"] = all_pass;

  std::ofstream os(report_path);
  check(os.is_open(), "run_eval: cannot write " + report_path.string());
  os << report.dump(2) << '\n';
  check(os.good(), "run_eval: report write failed");

  EvalOutput out;
  out.all_gates_pass = all_pass;
  out.report = std::move(report);
  return out;
}

void run_roundtrip(const std::filesystem::path& ckpt_dir,
                   const std::filesystem::path& input_blob, const std::string& in_modality,
                   const std::string& out_modality, const std::filesystem::path& out_blob) {
  check(in_modality == "image" || in_modality == "audio",
        "run_roundtrip: in modality must be image or audio");
  check(out_modality == "image" || out_modality == "audio",
        "run_roundtrip: out modality must be image or audio");
  model::StumModel m = model::load_checkpoint(ckpt_dir);
  const cue::Modality in_m =
      in_modality == "image" ? cue::Modality::image : cue::Modality::audio;
  const cue::Modality out_m =
      out_modality == "image" ? cue::Modality::image : cue::Modality::audio;

  Tensor input = num::load_blob(input_blob);
  Tensor output = m.roundtrip(input, in_m, out_m);
  num::save_blob(out_blob, output);

  // PNG preview alongside the numeric blob.
  std::filesystem::path preview = out_blob;
  preview.replace_extension(".png");
  if (out_m == cue::Modality::image) {
    sim::write_png(preview, sim::tensor_to_rgb8(output));
  } else {
    Tensor gray({output.shape[output.ndim() - 2], output.shape[output.ndim() - 1]},
                output.data);
    sim::write_png(preview, sim::tensor_to_gray8(gray));
  }
}

}  // namespace stum::cli
