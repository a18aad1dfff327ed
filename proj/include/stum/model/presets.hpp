#pragma once

#include "stum/numerics/layers.hpp"
#include "stum/timecue/timecue.hpp"

namespace stum::model {

using cue::Modality;

struct EncoderConfig {
  Modality modality = Modality::image;
  std::vector<int> input_shape;  // image: [3,S,S]; audio: [1,64,64]
  int feature_dim = 64;
  std::vector<num::LayerSpec> layers;

  void validate() const;
  int conv_layers() const;
};

struct DecoderConfig {
  Modality modality = Modality::image;
  std::vector<int> output_shape;  // equals the matching encoder input shape
  int feature_dim = 64;
  std::vector<num::LayerSpec> layers;

  void validate() const;
};

// Desk-scale presets: 4-conv encoders, 32x32 images, 64-d shared space.
EncoderConfig desk_image_encoder(int image_size = 32, int feature_dim = 64);
EncoderConfig desk_audio_encoder(int feature_dim = 64);
DecoderConfig desk_image_decoder(int image_size = 32, int feature_dim = 64, int hidden = 256);
DecoderConfig desk_audio_decoder(int feature_dim = 64, int hidden = 256);

// Full-scale presets: 7-conv 128x128x3 and 6-conv 64x64x1 encoders into a
// 1024-d shared space.
EncoderConfig paper_image_encoder();
EncoderConfig paper_audio_encoder();
DecoderConfig paper_image_decoder();
DecoderConfig paper_audio_decoder();

}  // namespace stum::model
