#include "stum/model/stum_model.hpp"

#include <algorithm>
#include <cmath>

namespace stum::model {

using num::check;
using num::Rng;
using num::StumError;
using num::Tape;
using num::Tensor;

float contrastive_loss(float d, int z, float m, bool squared) {
  check(d >= 0.0f, "contrastive_loss: distance must be non-negative");
  check(m > 0.0f, "contrastive_loss: margin must be positive");
  check(z == 0 || z == 1, "contrastive_loss: z must be 0 or 1");
  const float hinge = std::max(0.0f, m - d);
  if (squared) return ((1 - z) * d * d + z * hinge * hinge) / 2.0f;
  return (1 - z) * d + z * hinge;
}

float alignment_loss(const std::vector<float>& distances, const std::vector<float>& targets) {
  check(distances.size() == targets.size(), "alignment_loss: length mismatch");
  float s = 0;
  for (size_t i = 0; i < distances.size(); ++i) s += std::abs(distances[i] - targets[i]);
  return s;
}

float pair_distance(const Tensor& a, const Tensor& b) {
  check(a.shape == b.shape, "pair_distance: dimension mismatch " + num::shape_str(a.shape) +
                                " vs " + num::shape_str(b.shape));
  float s = 0;
  for (size_t i = 0; i < a.numel(); ++i) {
    const float d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

size_t select_representative_index(const std::vector<Tensor>& window_features) {
  check(!window_features.empty(), "select_representative: empty window");
  const size_t dim = window_features[0].numel();
  std::vector<float> mean(dim, 0.0f);
  for (const auto& f : window_features) {
    check(f.numel() == dim, "select_representative: feature dimension mismatch");
    for (size_t j = 0; j < dim; ++j) mean[j] += f.data[j];
  }
  const float inv = 1.0f / static_cast<float>(window_features.size());
  for (auto& v : mean) v *= inv;

  size_t best = 0;
  float best_d2 = std::numeric_limits<float>::infinity();
  for (size_t i = 0; i < window_features.size(); ++i) {
    float d2 = 0;
    for (size_t j = 0; j < dim; ++j) {
      const float d = window_features[i].data[j] - mean[j];
      d2 += d * d;
    }
    if (d2 < best_d2) {  // strict: ties keep the lowest index
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

Tensor select_representative(const std::vector<Tensor>& window_features,
                             const std::vector<Tensor>& window_inputs) {
  check(window_features.size() == window_inputs.size(),
        "select_representative: features/inputs length mismatch");
  return window_inputs[select_representative_index(window_features)];
}

ModelConfig ModelConfig::desk(int image_size, int feature_dim, uint64_t seed,
                              bool with_decoders) {
  ModelConfig cfg;
  cfg.image_encoder = desk_image_encoder(image_size, feature_dim);
  cfg.audio_encoder = desk_audio_encoder(feature_dim);
  cfg.image_decoder = desk_image_decoder(image_size, feature_dim);
  cfg.audio_decoder = desk_audio_decoder(feature_dim);
  cfg.with_decoders = with_decoders;
  cfg.init_seed = seed;
  return cfg;
}

ModelConfig ModelConfig::paper_scale(uint64_t seed, bool with_decoders) {
  ModelConfig cfg;
  cfg.image_encoder = paper_image_encoder();
  cfg.audio_encoder = paper_audio_encoder();
  cfg.image_decoder = paper_image_decoder();
  cfg.audio_decoder = paper_audio_decoder();
  cfg.with_decoders = with_decoders;
  cfg.init_seed = seed;
  return cfg;
}

StumModel::StumModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.image_encoder.validate();
  cfg_.audio_encoder.validate();
  check(cfg_.image_encoder.feature_dim == cfg_.audio_encoder.feature_dim,
        "model: encoders must share one feature dimension");
  check(cfg_.margin > 0, "model: margin must be positive");
  Rng rng(cfg_.init_seed);
  enc_img_ = num::LayerStack::build(cfg_.image_encoder.layers, cfg_.image_encoder.input_shape,
                                    rng.fork("enc_img"), "enc_img");
  enc_aud_ = num::LayerStack::build(cfg_.audio_encoder.layers, cfg_.audio_encoder.input_shape,
                                    rng.fork("enc_aud"), "enc_aud");
  if (cfg_.with_decoders) {
    cfg_.image_decoder.validate();
    cfg_.audio_decoder.validate();
    check(cfg_.image_decoder.output_shape == cfg_.image_encoder.input_shape,
          "model: image decoder output must match encoder input shape");
    check(cfg_.audio_decoder.output_shape == cfg_.audio_encoder.input_shape,
          "model: audio decoder output must match encoder input shape");
    dec_img_ = num::LayerStack::build(cfg_.image_decoder.layers,
                                      {cfg_.image_decoder.feature_dim}, rng.fork("dec_img"),
                                      "dec_img");
    dec_aud_ = num::LayerStack::build(cfg_.audio_decoder.layers,
                                      {cfg_.audio_decoder.feature_dim}, rng.fork("dec_aud"),
                                      "dec_aud");
  }
}

num::LayerStack& StumModel::image_decoder() {
  check(cfg_.with_decoders, "model: image decoder not available (built without decoders)");
  return dec_img_;
}

num::LayerStack& StumModel::audio_decoder() {
  check(cfg_.with_decoders, "model: audio decoder not available (built without decoders)");
  return dec_aud_;
}

namespace {

// Audio inputs may arrive as [64,64]; encoders expect a channel axis.
Tensor normalize_input(const Tensor& input, const std::vector<int>& per_sample) {
  if (static_cast<size_t>(input.ndim()) == per_sample.size() - 1) {
    // e.g. [64,64] for a [1,64,64] encoder
    std::vector<int> s = per_sample;
    check(input.numel() == Tensor::checked_numel(s), "encode: input shape mismatch " +
                                                         num::shape_str(input.shape));
    return Tensor(s, input.data);
  }
  return input;
}

}  // namespace

Tensor StumModel::encode(const Tensor& input, Modality m) {
  num::LayerStack& enc = m == Modality::image ? enc_img_ : enc_aud_;
  Tensor in = normalize_input(input, enc.input_shape);
  const bool batched = in.ndim() == static_cast<int>(enc.input_shape.size()) + 1;
  if (!batched) {
    check(in.shape == enc.input_shape,
          "encode: input shape " + num::shape_str(in.shape) + " does not match encoder " +
              num::shape_str(enc.input_shape));
  } else {
    check(std::vector<int>(in.shape.begin() + 1, in.shape.end()) == enc.input_shape,
          "encode: batch input shape " + num::shape_str(in.shape) +
              " does not match encoder " + num::shape_str(enc.input_shape));
  }
  Tape tape;
  auto x = tape.input(std::move(in));
  auto y = enc.forward(tape, x, num::RunMode::infer);
  Tensor out = tape.value(y);
  check(out.all_finite(), "encode: non-finite embedding");
  return out;
}

Tensor StumModel::decode(const Tensor& feature, Modality m) {
  check(cfg_.with_decoders, std::string("decode: ") +
                                (m == Modality::image ? "image" : "audio") +
                                " decoder not available (built without decoders)");
  num::LayerStack& dec = m == Modality::image ? dec_img_ : dec_aud_;
  const auto& out_shape =
      m == Modality::image ? cfg_.image_decoder.output_shape : cfg_.audio_decoder.output_shape;
  const bool batched = feature.ndim() == 2;
  Tape tape;
  auto x = tape.input(feature);
  auto y = dec.forward(tape, x, num::RunMode::infer);
  Tensor flat = tape.value(y);
  std::vector<int> shape = out_shape;
  if (batched) shape.insert(shape.begin(), feature.shape[0]);
  return Tensor(shape, std::move(flat.data));
}

Tensor StumModel::roundtrip(const Tensor& input, Modality in_mod, Modality out_mod) {
  return decode(encode(input, in_mod), out_mod);
}

num::Adam& StumModel::ensure_encoder_optimizer(bool joint, float lr) {
  if (!enc_opt_ || enc_opt_joint_ != joint ||
      enc_opt_->config().lr != lr) {
    std::vector<num::Parameter*> params = enc_img_.parameters();
    if (joint) {
      auto aud = enc_aud_.parameters();
      params.insert(params.end(), aud.begin(), aud.end());
    }
    num::AdamConfig acfg;
    acfg.lr = lr;
    enc_opt_ = std::make_unique<num::Adam>(std::move(params), acfg);
    enc_opt_joint_ = joint;
  }
  return *enc_opt_;
}

num::Adam& StumModel::ensure_decoder_optimizer(float lr) {
  check(cfg_.with_decoders, "train_decoders: model built without decoders");
  if (!dec_opt_ || dec_opt_->config().lr != lr) {
    std::vector<num::Parameter*> params = dec_img_.parameters();
    auto aud = dec_aud_.parameters();
    params.insert(params.end(), aud.begin(), aud.end());
    num::AdamConfig acfg;
    acfg.lr = lr;
    dec_opt_ = std::make_unique<num::Adam>(std::move(params), acfg);
  }
  return *dec_opt_;
}

Tensor stack_frames(const sim::StreamView& stream, const std::vector<int>& frames) {
  check(!frames.empty(), "stack_frames: empty index list");
  const Tensor& first = stream.frame(frames[0]);
  Tensor out({static_cast<int>(frames.size()), first.shape[0], first.shape[1], first.shape[2]});
  const size_t sz = first.numel();
  for (size_t i = 0; i < frames.size(); ++i) {
    const Tensor& f = stream.frame(frames[i]);
    std::copy(f.data.begin(), f.data.end(), out.data.begin() + i * sz);
  }
  return out;
}

Tensor stack_crops(const std::vector<Tensor>& crops) {
  check(!crops.empty(), "stack_crops: empty crop list");
  const int bands = crops[0].shape[0];
  const int cols = crops[0].shape[1];
  Tensor out({static_cast<int>(crops.size()), 1, bands, cols});
  const size_t sz = crops[0].numel();
  for (size_t i = 0; i < crops.size(); ++i) {
    check(crops[i].shape == crops[0].shape, "stack_crops: inconsistent crop shape");
    std::copy(crops[i].data.begin(), crops[i].data.end(), out.data.begin() + i * sz);
  }
  return out;
}

std::vector<EpochStats> StumModel::train_encoders(const std::vector<sim::StreamView>& streams,
                                                  const TrainEncodersConfig& cfg) {
  return run_encoder_training(streams, cfg, /*alignment_mode=*/false);
}

std::vector<EpochStats> StumModel::train_encoders_alignment(
    const std::vector<sim::StreamView>& streams, const TrainEncodersConfig& cfg) {
  return run_encoder_training(streams, cfg, /*alignment_mode=*/true);
}

std::vector<EpochStats> StumModel::run_encoder_training(
    const std::vector<sim::StreamView>& streams, const TrainEncodersConfig& cfg,
    bool alignment_mode) {
  check(!streams.empty(), "train_encoders: no streams");
  std::vector<int> eligible;
  for (size_t i = 0; i < streams.size(); ++i) {
    if (static_cast<int>(streams[i].length()) > cfg.cue.negative_gap) {
      eligible.push_back(static_cast<int>(i));
    }
  }
  check(!eligible.empty(), "train_encoders: no stream longer than the negative gap");
  check(cfg.epochs >= 0 && cfg.steps_per_epoch > 0 && cfg.batch_pairs > 0,
        "train_encoders: bad schedule");

  num::Adam& opt = ensure_encoder_optimizer(cfg.joint, cfg.learning_rate);
  cue::SamplePolicy policy;
  policy.cue = cfg.cue;
  policy.online = cfg.online;

  Rng base(cfg.seed);
  std::vector<EpochStats> stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double vis_sum = 0, av_sum = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const uint64_t gstep =
          static_cast<uint64_t>(epoch) * cfg.steps_per_epoch + static_cast<uint64_t>(step);
      Rng srng = base.fork("step", gstep);
      const sim::StreamView& stream =
          streams[eligible[srng.below_int(static_cast<int>(eligible.size()))]];

      Tape tape;
      auto batch_loss = [&](const cue::PairBatch& batch, bool audio_partner) {
        std::vector<int> anchors, partners;
        std::vector<Tensor> crops;
        std::vector<float> z, targets;
        for (const auto& s : batch.samples) {
          anchors.push_back(s.anchor_frame);
          if (audio_partner) {
            auto crop = cue::associate_audio(stream, s.partner_frame);
            check(crop.has_value(), "train_encoders: sampled audio pair lost its crop");
            crops.push_back(std::move(*crop));
          } else {
            partners.push_back(s.partner_frame);
          }
          z.push_back(static_cast<float>(s.z));
          targets.push_back(static_cast<float>(s.z));  // H: 0 in window, 1 at gap
        }
        auto xa = tape.input(stack_frames(stream, anchors));
        auto ea = enc_img_.forward(tape, xa, num::RunMode::train);
        typename Tape::Var eb;
        if (audio_partner) {
          auto xb = tape.input(stack_crops(crops));
          eb = enc_aud_.forward(tape, xb, num::RunMode::train);
        } else {
          auto xb = tape.input(stack_frames(stream, partners));
          eb = enc_img_.forward(tape, xb, num::RunMode::train);
        }
        auto d = tape.rowwise_distance(ea, eb);
        auto per_pair = alignment_mode
                            ? tape.l1_to_targets(d, std::move(targets))
                            : tape.contrastive(d, std::move(z), cfg_.margin,
                                               cfg_.squared_distance);
        return tape.mean_all(per_pair);
      };

      auto vis_batch = cue::sample_visual_pairs(stream, cfg.batch_pairs,
                                                srng.fork("vis").seed(), policy);
      auto loss = batch_loss(vis_batch, false);
      const double vis_loss = tape.value(loss).data[0];
      double av_loss = 0;
      if (cfg.joint) {
        auto av_batch =
            cue::sample_av_pairs(stream, cfg.batch_pairs, srng.fork("av").seed(), policy);
        auto lav = batch_loss(av_batch, true);
        av_loss = tape.value(lav).data[0];
        loss = tape.add(loss, lav);
      }
      if (!std::isfinite(tape.value(loss).data[0])) {
        throw StumError("train_encoders: non-finite loss at epoch " + std::to_string(epoch) +
                        " step " + std::to_string(step) + " (visual " + std::to_string(vis_loss) +
                        ", av " + std::to_string(av_loss) + ", optimizer step " +
                        std::to_string(opt.step_count()) + ")");
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      ++encoder_steps_;
      vis_sum += vis_loss;
      av_sum += av_loss;
    }
    EpochStats es;
    es.epoch = epoch;
    es.visual_loss = vis_sum / cfg.steps_per_epoch;
    es.av_loss = av_sum / cfg.steps_per_epoch;
    stats.push_back(es);
  }
  return stats;
}

Tensor StumModel::encode_batch_infer(const std::vector<Tensor>& inputs, Modality m) {
  check(!inputs.empty(), "encode_batch_infer: empty input list");
  const int F = cfg_.image_encoder.feature_dim;
  Tensor out({static_cast<int>(inputs.size()), F});
  const size_t chunk = 128;
  for (size_t lo = 0; lo < inputs.size(); lo += chunk) {
    const size_t hi = std::min(inputs.size(), lo + chunk);
    const auto& shape0 = m == Modality::image ? cfg_.image_encoder.input_shape
                                              : cfg_.audio_encoder.input_shape;
    Tensor batch({static_cast<int>(hi - lo), shape0[0], shape0[1], shape0[2]});
    const size_t sz = Tensor::checked_numel(shape0);
    for (size_t i = lo; i < hi; ++i) {
      check(inputs[i].numel() == sz, "encode_batch_infer: input shape mismatch");
      std::copy(inputs[i].data.begin(), inputs[i].data.end(),
                batch.data.begin() + (i - lo) * sz);
    }
    Tensor feats = encode(batch, m);
    std::copy(feats.data.begin(), feats.data.end(), out.data.begin() + lo * F);
  }
  return out;
}

void StumModel::train_decoders(const std::vector<sim::StreamView>& streams,
                               const TrainDecodersConfig& cfg) {
  check(cfg_.with_decoders, "train_decoders: model built without decoders");
  check(cfg.epochs >= 0 && cfg.batch > 0 && cfg.frame_stride >= 1,
        "train_decoders: bad schedule");

  // Representative selection per fixation window, then feature -> output
  // pairs. Encoders stay frozen: only decoder parameters enter the optimizer
  // and features are computed in inference mode.
  const int F = cfg_.image_encoder.feature_dim;
  std::vector<Tensor> img_feats;    // inputs for D_I (one [F] row each)
  std::vector<Tensor> img_targets;  // matching representative image
  std::vector<Tensor> aud_feats;    // inputs for D_A
  std::vector<Tensor> aud_targets;  // matching representative audio crop

  for (const auto& stream : streams) {
    const int T = static_cast<int>(stream.length());
    int w_start = -1;
    for (int t = 0; t <= T; ++t) {
      const bool blank = t == T || stream.is_blank(t);
      if (!blank && w_start < 0) w_start = t;
      if (blank && w_start >= 0) {
        const int w_end = t;  // exclusive
        // Window features over every frame (selection uses all of them).
        std::vector<int> frames;
        for (int i = w_start; i < w_end; ++i) frames.push_back(i);
        std::vector<Tensor> frame_tensors;
        frame_tensors.reserve(frames.size());
        for (int i : frames) frame_tensors.push_back(stream.frame(i));
        Tensor feats = encode_batch_infer(frame_tensors, Modality::image);

        std::vector<Tensor> feat_rows;
        feat_rows.reserve(frames.size());
        for (size_t i = 0; i < frames.size(); ++i) {
          Tensor row({F});
          std::copy(feats.data.begin() + i * F, feats.data.begin() + (i + 1) * F,
                    row.data.begin());
          feat_rows.push_back(std::move(row));
        }
        const size_t repr = select_representative_index(feat_rows);
        const Tensor& repr_image = frame_tensors[repr];

        // The window's audio crop (absent for silent windows).
        const int mid = w_start + (w_end - 1 - w_start) / 2;
        auto crop = cue::associate_audio(stream, mid);
        Tensor aud_feat;
        if (crop) {
          aud_feat = encode(*crop, Modality::audio);
        }

        for (size_t i = 0; i < frames.size(); i += cfg.frame_stride) {
          img_feats.push_back(feat_rows[i]);
          img_targets.push_back(repr_image);
          if (crop) {
            aud_feats.push_back(feat_rows[i]);
            aud_targets.push_back(*crop);
          }
        }
        // The audio feature maps to the same representatives.
        if (crop) {
          img_feats.push_back(aud_feat);
          img_targets.push_back(repr_image);
          aud_feats.push_back(aud_feat);
          aud_targets.push_back(*crop);
        }
        w_start = -1;
      }
    }
  }
  check(!img_feats.empty(), "train_decoders: no fixation windows found");

  num::Adam& opt = ensure_decoder_optimizer(cfg.learning_rate);
  Rng rng(cfg.seed);

  auto make_batch = [&](const std::vector<Tensor>& feats, const std::vector<Tensor>& targets,
                        const std::vector<size_t>& order, size_t lo, size_t hi, Tape& tape,
                        num::LayerStack& dec) {
    const size_t B = hi - lo;
    Tensor fb({static_cast<int>(B), F});
    const size_t out_sz = targets[0].numel();
    Tensor tb({static_cast<int>(B), static_cast<int>(out_sz)});
    for (size_t i = lo; i < hi; ++i) {
      const size_t idx = order[i];
      std::copy(feats[idx].data.begin(), feats[idx].data.end(),
                fb.data.begin() + (i - lo) * F);
      std::copy(targets[idx].data.begin(), targets[idx].data.end(),
                tb.data.begin() + (i - lo) * out_sz);
    }
    auto x = tape.input(std::move(fb));
    auto y = dec.forward(tape, x, num::RunMode::train);
    return tape.mse(y, std::move(tb));
  };

  std::vector<size_t> img_order(img_feats.size()), aud_order(aud_feats.size());
  for (size_t i = 0; i < img_order.size(); ++i) img_order[i] = i;
  for (size_t i = 0; i < aud_order.size(); ++i) aud_order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = rng.fork("epoch", epoch);
    for (size_t i = img_order.size(); i > 1; --i) {
      std::swap(img_order[i - 1], img_order[erng.below(i)]);
    }
    for (size_t i = aud_order.size(); i > 1; --i) {
      std::swap(aud_order[i - 1], aud_order[erng.below(i)]);
    }
    const size_t steps = (img_feats.size() + cfg.batch - 1) / cfg.batch;
    for (size_t s = 0; s < steps; ++s) {
      const size_t ilo = s * cfg.batch;
      const size_t ihi = std::min(img_feats.size(), ilo + cfg.batch);
      Tape tape;
      auto loss = make_batch(img_feats, img_targets, img_order, ilo, ihi, tape, dec_img_);
      if (!aud_feats.empty()) {
        // Wrap the audio sample cursor independently of the image one.
        const size_t alo = (s * cfg.batch) % aud_feats.size();
        const size_t ahi = std::min(aud_feats.size(), alo + cfg.batch);
        auto laud = make_batch(aud_feats, aud_targets, aud_order, alo, ahi, tape, dec_aud_);
        loss = tape.add(loss, laud);
      }
      if (!std::isfinite(tape.value(loss).data[0])) {
        throw StumError("train_decoders: non-finite loss at epoch " + std::to_string(epoch) +
                        " step " + std::to_string(s));
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      ++decoder_steps_;
    }
  }
}

}  // namespace stum::model
