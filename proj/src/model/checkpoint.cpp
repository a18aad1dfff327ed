#include "stum/model/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "stum/numerics/blob.hpp"

namespace stum::model {

using json = nlohmann::ordered_json;
using num::check;
using num::LayerKind;
using num::LayerSpec;
using num::Tensor;

namespace {

json layer_to_json(const LayerSpec& s) {
  json j;
  j["kind"] = num::layer_kind_name(s.kind);
  switch (s.kind) {
    case LayerKind::conv2d:
    case LayerKind::downsample:
      j["in_ch"] = s.in_ch;
      j["out_ch"] = s.out_ch;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["pad"] = s.pad;
      break;
    case LayerKind::norm:
      j["channels"] = s.channels;
      j["eps"] = s.eps;
      j["momentum"] = s.momentum;
      break;
    case LayerKind::leaky_relu:
      j["slope"] = s.slope;
      break;
    case LayerKind::affine:
      j["in_dim"] = s.in_dim;
      j["out_dim"] = s.out_dim;
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d" || kind == "downsample") {
    LayerSpec s = LayerSpec::conv(j.at("in_ch").get<int>(), j.at("out_ch").get<int>(),
                                  j.at("kernel").get<int>(), j.at("stride").get<int>(),
                                  j.at("pad").get<int>());
    if (kind == "downsample") s.kind = LayerKind::downsample;
    return s;
  }
  if (kind == "norm") {
    LayerSpec s = LayerSpec::norm_layer(j.at("channels").get<int>());
    s.eps = j.at("eps").get<double>();
    s.momentum = j.at("momentum").get<double>();
    return s;
  }
  if (kind == "leaky_relu") return LayerSpec::leaky(j.at("slope").get<double>());
  if (kind == "affine")
    return LayerSpec::dense(j.at("in_dim").get<int>(), j.at("out_dim").get<int>());
  throw num::StumError("checkpoint: unknown layer kind '" + kind + "'");
}

json layers_to_json(const std::vector<LayerSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back(layer_to_json(s));
  return arr;
}

std::vector<LayerSpec> layers_from_json(const json& arr) {
  std::vector<LayerSpec> out;
  for (const auto& e : arr) out.push_back(layer_from_json(e));
  return out;
}

json encoder_to_json(const EncoderConfig& c) {
  return {{"modality", c.modality == Modality::image ? "image" : "audio"},
          {"input_shape", c.input_shape},
          {"feature_dim", c.feature_dim},
          {"layers", layers_to_json(c.layers)}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.modality = j.at("modality") == "image" ? Modality::image : Modality::audio;
  c.input_shape = j.at("input_shape").get<std::vector<int>>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.layers = layers_from_json(j.at("layers"));
  return c;
}

json decoder_to_json(const DecoderConfig& c) {
  return {{"modality", c.modality == Modality::image ? "image" : "audio"},
          {"output_shape", c.output_shape},
          {"feature_dim", c.feature_dim},
          {"layers", layers_to_json(c.layers)}};
}

DecoderConfig decoder_from_json(const json& j) {
  DecoderConfig c;
  c.modality = j.at("modality") == "image" ? Modality::image : Modality::audio;
  c.output_shape = j.at("output_shape").get<std::vector<int>>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.layers = layers_from_json(j.at("layers"));
  return c;
}

// Norm buffer names follow the parameter convention: <prefix>.l<i>.run_mean.
void for_each_norm_buffer(num::LayerStack& stack, const std::string& prefix,
                          const std::function<void(const std::string&, Tensor&)>& fn) {
  int ni = 0;
  for (size_t li = 0; li < stack.specs.size(); ++li) {
    if (stack.specs[li].kind != LayerKind::norm) continue;
    const std::string base = prefix + ".l" + std::to_string(li);
    fn(base + ".run_mean", stack.norm_buffers[ni].run_mean);
    fn(base + ".run_var", stack.norm_buffers[ni].run_var);
    ++ni;
  }
}

void save_optimizer(const std::filesystem::path& dir, num::Adam& opt, const std::string& tag) {
  for (size_t i = 0; i < opt.size(); ++i) {
    const std::string base = "adam_" + tag + "." + opt.param(i).name;
    num::save_blob(dir / (base + ".m.stumt"), opt.moment1(i));
    num::save_blob(dir / (base + ".v.stumt"), opt.moment2(i));
  }
}

void load_optimizer(const std::filesystem::path& dir, num::Adam& opt, const std::string& tag,
                    int64_t step_count) {
  for (size_t i = 0; i < opt.size(); ++i) {
    const std::string base = "adam_" + tag + "." + opt.param(i).name;
    Tensor m = num::load_blob(dir / (base + ".m.stumt"));
    Tensor v = num::load_blob(dir / (base + ".v.stumt"));
    check(m.shape == opt.param(i).value.shape && v.shape == opt.param(i).value.shape,
          "checkpoint: optimizer moment shape mismatch for " + opt.param(i).name);
    opt.moment1(i) = std::move(m);
    opt.moment2(i) = std::move(v);
  }
  opt.set_step_count(step_count);
}

struct StackRef {
  num::LayerStack* stack;
  std::string prefix;
};

std::vector<StackRef> model_stacks(StumModel& model) {
  std::vector<StackRef> refs = {{&model.image_encoder(), "enc_img"},
                                {&model.audio_encoder(), "enc_aud"}};
  if (model.has_decoders()) {
    refs.push_back({&model.image_decoder(), "dec_img"});
    refs.push_back({&model.audio_decoder(), "dec_aud"});
  }
  return refs;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, StumModel& model,
                     const std::string& config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const ModelConfig& cfg = model.config();

  json m;
  m["format"] = "stum-checkpoint-v1";
  m["config_hash"] = config_hash;
  m["seed"] = cfg.init_seed;
  m["margin"] = cfg.margin;
  m["squared_distance"] = cfg.squared_distance;
  m["with_decoders"] = cfg.with_decoders;
  m["encoder_steps"] = model.encoder_steps();
  m["decoder_steps"] = model.decoder_steps();
  m["image_encoder"] = encoder_to_json(cfg.image_encoder);
  m["audio_encoder"] = encoder_to_json(cfg.audio_encoder);
  if (cfg.with_decoders) {
    m["image_decoder"] = decoder_to_json(cfg.image_decoder);
    m["audio_decoder"] = decoder_to_json(cfg.audio_decoder);
  }

  json params = json::array();
  for (auto& ref : model_stacks(model)) {
    for (auto& p : ref.stack->params) {
      num::save_blob(dir / (p.name + ".stumt"), p.value);
      params.push_back(p.name);
    }
    for_each_norm_buffer(*ref.stack, ref.prefix, [&](const std::string& name, Tensor& t) {
      num::save_blob(dir / (name + ".stumt"), t);
      params.push_back(name);
    });
  }
  m["params"] = params;

  json opts;
  if (auto* opt = model.encoder_optimizer()) {
    opts["encoders"] = {{"step_count", opt->step_count()},
                        {"lr", opt->config().lr},
                        {"n_params", opt->size()}};
    save_optimizer(dir, *opt, "enc");
  } else {
    opts["encoders"] = nullptr;
  }
  if (auto* opt = model.decoder_optimizer()) {
    opts["decoders"] = {{"step_count", opt->step_count()},
                        {"lr", opt->config().lr},
                        {"n_params", opt->size()}};
    save_optimizer(dir, *opt, "dec");
  } else {
    opts["decoders"] = nullptr;
  }
  m["optimizers"] = opts;

  std::ofstream os(dir / "model.json");
  check(os.is_open(), "save_checkpoint: cannot write " + (dir / "model.json").string());
  os << m.dump(2) << '\n';
  check(os.good(), "save_checkpoint: write failed");
}

StumModel load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  check(is.is_open(), "load_checkpoint: missing model.json in " + dir.string());
  json m = json::parse(is);
  check(m.at("format") == "stum-checkpoint-v1", "load_checkpoint: unknown format");

  ModelConfig cfg;
  cfg.init_seed = m.at("seed").get<uint64_t>();
  cfg.margin = m.at("margin").get<float>();
  cfg.squared_distance = m.at("squared_distance").get<bool>();
  cfg.with_decoders = m.at("with_decoders").get<bool>();
  cfg.image_encoder = encoder_from_json(m.at("image_encoder"));
  cfg.audio_encoder = encoder_from_json(m.at("audio_encoder"));
  if (cfg.with_decoders) {
    cfg.image_decoder = decoder_from_json(m.at("image_decoder"));
    cfg.audio_decoder = decoder_from_json(m.at("audio_decoder"));
  }

  StumModel model(cfg);
  model.set_encoder_steps(m.at("encoder_steps").get<int64_t>());
  model.set_decoder_steps(m.at("decoder_steps").get<int64_t>());

  for (auto& ref : model_stacks(model)) {
    for (auto& p : ref.stack->params) {
      Tensor t = num::load_blob(dir / (p.name + ".stumt"));
      check(t.shape == p.value.shape, "load_checkpoint: shape mismatch for " + p.name);
      p.value = std::move(t);
    }
    for_each_norm_buffer(*ref.stack, ref.prefix, [&](const std::string& name, Tensor& t) {
      Tensor loaded = num::load_blob(dir / (name + ".stumt"));
      check(loaded.shape == t.shape, "load_checkpoint: shape mismatch for " + name);
      t = std::move(loaded);
    });
  }

  const auto& opts = m.at("optimizers");
  if (!opts.at("encoders").is_null()) {
    const auto& oe = opts.at("encoders");
    const size_t n = oe.at("n_params").get<size_t>();
    const bool joint = n > model.image_encoder().params.size();
    auto& opt = model.ensure_encoder_optimizer(joint, oe.at("lr").get<float>());
    check(opt.size() == n, "load_checkpoint: encoder optimizer size mismatch");
    load_optimizer(dir, opt, "enc", oe.at("step_count").get<int64_t>());
  }
  if (!opts.at("decoders").is_null()) {
    const auto& od = opts.at("decoders");
    auto& opt = model.ensure_decoder_optimizer(od.at("lr").get<float>());
    check(opt.size() == od.at("n_params").get<size_t>(),
          "load_checkpoint: decoder optimizer size mismatch");
    load_optimizer(dir, opt, "dec", od.at("step_count").get<int64_t>());
  }
  return model;
}

std::string checkpoint_config_hash(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  check(is.is_open(), "checkpoint_config_hash: missing model.json in " + dir.string());
  json m = json::parse(is);
  return m.at("config_hash").get<std::string>();
}

}  // namespace stum::model
