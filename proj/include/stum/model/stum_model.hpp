#pragma once

#include <memory>

#include "stum/model/presets.hpp"
#include "stum/numerics/optim.hpp"

namespace stum::model {

// Eq.-style scalar losses, usable standalone and inside training.
// Contrastive: (1-z) d + z max(0, m - d); squared variant halves squared
// terms (classic contrastive-loss lineage), selectable by flag.
float contrastive_loss(float d, int z, float m, bool squared = false);

// Sum_i |D_i - H_i| against time-cue targets.
float alignment_loss(const std::vector<float>& distances, const std::vector<float>& targets);

// Euclidean distance between two equal-dimension embeddings.
float pair_distance(const num::Tensor& a, const num::Tensor& b);

// Index of the window input whose feature is closest to the window's mean
// feature; ties break to the lowest index.
size_t select_representative_index(const std::vector<num::Tensor>& window_features);

// The representative input itself (Eq. 5 output selection).
num::Tensor select_representative(const std::vector<num::Tensor>& window_features,
                                  const std::vector<num::Tensor>& window_inputs);

struct ModelConfig {
  EncoderConfig image_encoder;
  EncoderConfig audio_encoder;
  DecoderConfig image_decoder;
  DecoderConfig audio_decoder;
  bool with_decoders = true;
  float margin = 1.0f;
  bool squared_distance = false;
  uint64_t init_seed = 1;

  static ModelConfig desk(int image_size = 32, int feature_dim = 64, uint64_t seed = 1,
                          bool with_decoders = true);
  static ModelConfig paper_scale(uint64_t seed = 1, bool with_decoders = true);
};

struct TrainEncodersConfig {
  int epochs = 20;
  int steps_per_epoch = 40;
  int batch_pairs = 64;  // pairs per modality batch per step
  float learning_rate = 1e-3f;
  bool joint = false;  // audiovisual batches in addition to visual ones
  bool online = true;
  uint64_t seed = 7;
  cue::TimeCueFunction cue{};
};

struct TrainDecodersConfig {
  int epochs = 15;
  int batch = 64;
  float learning_rate = 1e-3f;
  int frame_stride = 4;  // training samples per window; selection still sees all
  uint64_t seed = 11;
};

struct EpochStats {
  int epoch = 0;
  double visual_loss = 0;  // mean per-pair contrastive loss
  double av_loss = 0;      // 0 when not training jointly
};

// Two modality encoders into one shared feature space, trained by the
// time-cue contrastive rule; decoders trained afterwards on representative
// outputs with frozen encoders.
class StumModel {
 public:
  explicit StumModel(ModelConfig cfg);

  // [C,H,W] -> [F]; [N,C,H,W] -> [N,F]. Audio also accepts [64,64].
  // Inference mode: frozen normalization statistics.
  num::Tensor encode(const num::Tensor& input, Modality m);
  num::Tensor decode(const num::Tensor& feature, Modality m);
  num::Tensor roundtrip(const num::Tensor& input, Modality in_mod, Modality out_mod);

  std::vector<EpochStats> train_encoders(const std::vector<sim::StreamView>& streams,
                                         const TrainEncodersConfig& cfg);
  void train_decoders(const std::vector<sim::StreamView>& streams,
                      const TrainDecodersConfig& cfg);

  // Optional alignment-loss training mode (Eq. 3): |D - H| on the same pair
  // batches instead of the contrastive hinge.
  std::vector<EpochStats> train_encoders_alignment(const std::vector<sim::StreamView>& streams,
                                                   const TrainEncodersConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  bool has_decoders() const { return cfg_.with_decoders; }
  int64_t encoder_steps() const { return encoder_steps_; }
  int64_t decoder_steps() const { return decoder_steps_; }

  num::LayerStack& image_encoder() { return enc_img_; }
  num::LayerStack& audio_encoder() { return enc_aud_; }
  num::LayerStack& image_decoder();
  num::LayerStack& audio_decoder();
  num::Adam* encoder_optimizer() { return enc_opt_.get(); }
  num::Adam* decoder_optimizer() { return dec_opt_.get(); }

  // Checkpoint support.
  void set_encoder_steps(int64_t n) { encoder_steps_ = n; }
  void set_decoder_steps(int64_t n) { decoder_steps_ = n; }
  num::Adam& ensure_encoder_optimizer(bool joint, float lr);
  num::Adam& ensure_decoder_optimizer(float lr);

 private:
  ModelConfig cfg_;
  num::LayerStack enc_img_;
  num::LayerStack enc_aud_;
  num::LayerStack dec_img_;
  num::LayerStack dec_aud_;
  std::unique_ptr<num::Adam> enc_opt_;
  bool enc_opt_joint_ = false;
  std::unique_ptr<num::Adam> dec_opt_;
  int64_t encoder_steps_ = 0;
  int64_t decoder_steps_ = 0;

  std::vector<EpochStats> run_encoder_training(const std::vector<sim::StreamView>& streams,
                                               const TrainEncodersConfig& cfg,
                                               bool alignment_mode);
  num::Tensor encode_batch_infer(const std::vector<num::Tensor>& inputs, Modality m);
};

// Gathers stream frames into a [B,3,S,S] batch.
num::Tensor stack_frames(const sim::StreamView& stream, const std::vector<int>& frames);

// Gathers audio crops ([64,64]) into a [B,1,64,64] batch.
num::Tensor stack_crops(const std::vector<num::Tensor>& crops);

}  // namespace stum::model
