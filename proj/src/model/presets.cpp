#include "stum/model/presets.hpp"

namespace stum::model {

using num::check;
using num::LayerSpec;

void EncoderConfig::validate() const {
  check(!input_shape.empty(), "encoder config: missing input shape");
  auto out = num::validate_layer_chain(layers, input_shape);
  check(out == std::vector<int>{feature_dim},
        "encoder config: final layer produces " + num::shape_str(out) + ", expected [" +
            std::to_string(feature_dim) + "]");
}

int EncoderConfig::conv_layers() const {
  int n = 0;
  for (const auto& s : layers)
    if (s.is_conv_like()) ++n;
  return n;
}

void DecoderConfig::validate() const {
  check(!output_shape.empty(), "decoder config: missing output shape");
  auto out = num::validate_layer_chain(layers, {feature_dim});
  size_t numel = 1;
  for (int e : output_shape) numel *= static_cast<size_t>(e);
  check(out.size() == 1 && static_cast<size_t>(out[0]) == numel,
        "decoder config: final layer produces " + num::shape_str(out) +
            ", expected flattened " + num::shape_str(output_shape));
}

namespace {

// Encoder block: stride-2 convolution (the downsampling layer), batch norm,
// leaky rectification.
void add_block(std::vector<LayerSpec>& layers, int in_ch, int out_ch) {
  layers.push_back(LayerSpec::down(in_ch, out_ch));
  layers.push_back(LayerSpec::norm_layer(out_ch));
  layers.push_back(LayerSpec::leaky());
}

void add_conv_block(std::vector<LayerSpec>& layers, int in_ch, int out_ch) {
  layers.push_back(LayerSpec::conv(in_ch, out_ch, 3, 1, 1));
  layers.push_back(LayerSpec::norm_layer(out_ch));
  layers.push_back(LayerSpec::leaky());
}

}  // namespace

EncoderConfig desk_image_encoder(int image_size, int feature_dim) {
  check(image_size % 16 == 0, "desk image encoder: image size must be a multiple of 16");
  EncoderConfig cfg;
  cfg.modality = Modality::image;
  cfg.input_shape = {3, image_size, image_size};
  cfg.feature_dim = feature_dim;
  add_block(cfg.layers, 3, 16);
  add_block(cfg.layers, 16, 32);
  add_block(cfg.layers, 32, 48);
  add_block(cfg.layers, 48, 64);
  const int s = image_size / 16;
  cfg.layers.push_back(LayerSpec::dense(64 * s * s, feature_dim));
  cfg.validate();
  return cfg;
}

EncoderConfig desk_audio_encoder(int feature_dim) {
  EncoderConfig cfg;
  cfg.modality = Modality::audio;
  cfg.input_shape = {1, 64, 64};
  cfg.feature_dim = feature_dim;
  add_block(cfg.layers, 1, 16);
  add_block(cfg.layers, 16, 32);
  add_block(cfg.layers, 32, 48);
  add_block(cfg.layers, 48, 64);
  cfg.layers.push_back(LayerSpec::dense(64 * 4 * 4, feature_dim));
  cfg.validate();
  return cfg;
}

DecoderConfig desk_image_decoder(int image_size, int feature_dim, int hidden) {
  DecoderConfig cfg;
  cfg.modality = Modality::image;
  cfg.output_shape = {3, image_size, image_size};
  cfg.feature_dim = feature_dim;
  cfg.layers.push_back(LayerSpec::dense(feature_dim, hidden));
  cfg.layers.push_back(LayerSpec::leaky());
  cfg.layers.push_back(LayerSpec::dense(hidden, 3 * image_size * image_size));
  cfg.validate();
  return cfg;
}

DecoderConfig desk_audio_decoder(int feature_dim, int hidden) {
  DecoderConfig cfg;
  cfg.modality = Modality::audio;
  cfg.output_shape = {1, 64, 64};
  cfg.feature_dim = feature_dim;
  cfg.layers.push_back(LayerSpec::dense(feature_dim, hidden));
  cfg.layers.push_back(LayerSpec::leaky());
  cfg.layers.push_back(LayerSpec::dense(hidden, 64 * 64));
  cfg.validate();
  return cfg;
}

EncoderConfig paper_image_encoder() {
  EncoderConfig cfg;
  cfg.modality = Modality::image;
  cfg.input_shape = {3, 128, 128};
  cfg.feature_dim = 1024;
  add_block(cfg.layers, 3, 32);     // 64
  add_block(cfg.layers, 32, 64);    // 32
  add_block(cfg.layers, 64, 96);    // 16
  add_block(cfg.layers, 96, 128);   // 8
  add_block(cfg.layers, 128, 192);  // 4
  add_block(cfg.layers, 192, 256);  // 2
  add_conv_block(cfg.layers, 256, 256);
  cfg.layers.push_back(LayerSpec::dense(256 * 2 * 2, 1024));
  cfg.validate();
  return cfg;
}

EncoderConfig paper_audio_encoder() {
  EncoderConfig cfg;
  cfg.modality = Modality::audio;
  cfg.input_shape = {1, 64, 64};
  cfg.feature_dim = 1024;
  add_block(cfg.layers, 1, 32);     // 32
  add_block(cfg.layers, 32, 64);    // 16
  add_block(cfg.layers, 64, 128);   // 8
  add_block(cfg.layers, 128, 192);  // 4
  add_block(cfg.layers, 192, 256);  // 2
  add_conv_block(cfg.layers, 256, 256);
  cfg.layers.push_back(LayerSpec::dense(256 * 2 * 2, 1024));
  cfg.validate();
  return cfg;
}

DecoderConfig paper_image_decoder() {
  DecoderConfig cfg;
  cfg.modality = Modality::image;
  cfg.output_shape = {3, 128, 128};
  cfg.feature_dim = 1024;
  cfg.layers.push_back(LayerSpec::dense(1024, 2048));
  cfg.layers.push_back(LayerSpec::leaky());
  cfg.layers.push_back(LayerSpec::dense(2048, 3 * 128 * 128));
  cfg.validate();
  return cfg;
}

DecoderConfig paper_audio_decoder() {
  DecoderConfig cfg;
  cfg.modality = Modality::audio;
  cfg.output_shape = {1, 64, 64};
  cfg.feature_dim = 1024;
  cfg.layers.push_back(LayerSpec::dense(1024, 2048));
  cfg.layers.push_back(LayerSpec::leaky());
  cfg.layers.push_back(LayerSpec::dense(2048, 64 * 64));
  cfg.validate();
  return cfg;
}

}  // namespace stum::model
