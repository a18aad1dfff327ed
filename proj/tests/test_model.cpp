#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stum/model/checkpoint.hpp"
#include "stum/model/stum_model.hpp"

using namespace stum;
using cue::Modality;
using num::Rng;
using num::Tensor;
namespace fs = std::filesystem;

namespace {

struct MicroWorld {
  sim::World world;
  std::vector<sim::CategorySplit> splits;
  sim::MultimodalStream stream;

  explicit MicroWorld(uint64_t seed, int k = 8, int n_fixations = 12, int image_size = 16)
      : world(sim::World::derive(seed, k)) {
    splits = sim::split_views_and_variants(k, {}, seed + 1);
    sim::StreamConfig cfg;
    cfg.n_fixations = n_fixations;
    cfg.image_size = image_size;
    stream = sim::generate_stream(world, splits, cfg, seed + 2);
  }
};

model::ModelConfig micro_model_config(uint64_t seed) {
  return model::ModelConfig::desk(16, 32, seed);
}

model::TrainEncodersConfig micro_train_config(bool joint) {
  model::TrainEncodersConfig cfg;
  cfg.epochs = 4;
  cfg.steps_per_epoch = 10;
  cfg.batch_pairs = 32;
  cfg.joint = joint;
  cfg.seed = 5;
  return cfg;
}

std::vector<float> all_params(model::StumModel& m) {
  std::vector<float> out;
  for (auto* stack : {&m.image_encoder(), &m.audio_encoder()}) {
    for (const auto& p : stack->params) {
      out.insert(out.end(), p.value.data.begin(), p.value.data.end());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("contrastive_loss reproduces the closed-form cases") {
  CHECK(model::contrastive_loss(0.3f, 0, 1.0f) == doctest::Approx(0.3f).epsilon(1e-6));
  CHECK(model::contrastive_loss(0.2f, 1, 1.0f) == doctest::Approx(0.8f).epsilon(1e-6));
  CHECK(model::contrastive_loss(1.5f, 1, 1.0f) == doctest::Approx(0.0f).epsilon(1e-6));
  // Squared variant halves squared terms.
  CHECK(model::contrastive_loss(0.3f, 0, 1.0f, true) == doctest::Approx(0.045f));
  CHECK(model::contrastive_loss(0.2f, 1, 1.0f, true) == doctest::Approx(0.32f));
  CHECK_THROWS_AS(model::contrastive_loss(-0.1f, 0, 1.0f), num::StumError);
  CHECK_THROWS_AS(model::contrastive_loss(0.1f, 0, 0.0f), num::StumError);
}

TEST_CASE("alignment_loss: closed form and summation oracle") {
  CHECK(model::alignment_loss({0.0f, 1.0f}, {0.0f, 1.0f}) == doctest::Approx(0.0f));
  CHECK(model::alignment_loss({0.5f}, {0.0f}) == doctest::Approx(0.5f));
  CHECK_THROWS_AS(model::alignment_loss({0.5f}, {0.0f, 1.0f}), num::StumError);

  Rng rng(1);
  std::vector<float> d(10), h(10);
  double expect = 0;
  for (int i = 0; i < 10; ++i) {
    d[i] = static_cast<float>(rng.uniform(0, 2));
    h[i] = static_cast<float>(rng.uniform(0, 2));
    expect += std::abs(static_cast<double>(d[i]) - h[i]);
  }
  CHECK(model::alignment_loss(d, h) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("pair_distance: identities and elementwise oracle") {
  Tensor a({3}), b({3});
  a.data = {1, 0, 0};
  b.data = {0, 1, 0};
  CHECK(model::pair_distance(a, a) == doctest::Approx(0.0f));
  CHECK(model::pair_distance(a, b) == doctest::Approx(std::sqrt(2.0f)));
  Tensor c({4});
  CHECK_THROWS_AS(model::pair_distance(a, c), num::StumError);

  Rng rng(2);
  Tensor x({64}), y({64});
  double s = 0;
  for (int i = 0; i < 64; ++i) {
    x.data[i] = static_cast<float>(rng.uniform(-1, 1));
    y.data[i] = static_cast<float>(rng.uniform(-1, 1));
    const double dd = static_cast<double>(x.data[i]) - y.data[i];
    s += dd * dd;
  }
  CHECK(model::pair_distance(x, y) == doctest::Approx(std::sqrt(s)).epsilon(1e-6));
}

TEST_CASE("select_representative: hand cases, ties, exhaustive oracle") {
  std::vector<Tensor> feats;
  std::vector<Tensor> inputs;
  auto add = [&](float fx, float fy, float tag) {
    Tensor f({2});
    f.data = {fx, fy};
    feats.push_back(f);
    Tensor in({1});
    in.data = {tag};
    inputs.push_back(in);
  };

  add(0.5f, 0.5f, 1.0f);
  CHECK(model::select_representative(feats, inputs).data[0] == 1.0f);  // single element

  feats.clear();
  inputs.clear();
  add(0.0f, 0.0f, 1.0f);
  add(1.0f, 0.0f, 2.0f);
  add(0.4f, 0.0f, 3.0f);  // mean (0.4667, 0): closest is (0.4, 0)
  CHECK(model::select_representative(feats, inputs).data[0] == 3.0f);

  // Tie: identical features resolve to the lowest index.
  feats.clear();
  inputs.clear();
  add(1.0f, 1.0f, 1.0f);
  add(1.0f, 1.0f, 2.0f);
  add(1.0f, 1.0f, 3.0f);
  CHECK(model::select_representative_index(feats) == 0);

  CHECK_THROWS_AS(model::select_representative({}, {}), num::StumError);

  // Random windows against a brute-force oracle.
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + rng.below_int(20);
    const int dim = 2 + rng.below_int(63);
    std::vector<Tensor> f(n);
    for (auto& t : f) {
      t = Tensor({dim});
      for (auto& v : t.data) v = static_cast<float>(rng.uniform(-2, 2));
    }
    // Oracle: mean then exhaustive argmin, same float arithmetic spelled
    // independently.
    std::vector<float> mean(dim, 0.0f);
    for (const auto& t : f) {
      for (int j = 0; j < dim; ++j) mean[j] += t.data[j];
    }
    for (auto& v : mean) v /= static_cast<float>(n);
    int best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (int i = 0; i < n; ++i) {
      float d2 = 0;
      for (int j = 0; j < dim; ++j) {
        const float dd = f[i].data[j] - mean[j];
        d2 += dd * dd;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = i;
      }
    }
    CHECK(model::select_representative_index(f) == static_cast<size_t>(best));
  }
}

TEST_CASE("encode: shape contract, determinism, input validation") {
  model::StumModel m(micro_model_config(1));
  Rng rng(4);
  Tensor img({3, 16, 16});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 1));
  Tensor e1 = m.encode(img, Modality::image);
  CHECK(e1.shape == std::vector<int>{32});
  Tensor e2 = m.encode(img, Modality::image);
  CHECK(e1.data == e2.data);  // frozen statistics: bit-identical

  Tensor crop({64, 64});
  for (auto& v : crop.data) v = static_cast<float>(rng.uniform(0, 1));
  CHECK(m.encode(crop, Modality::audio).shape == std::vector<int>{32});

  Tensor batch({5, 3, 16, 16});
  CHECK(m.encode(batch, Modality::image).shape == std::vector<int>{5, 32});

  Tensor wrong({3, 8, 8});
  CHECK_THROWS_AS(m.encode(wrong, Modality::image), num::StumError);
}

TEST_CASE("full-scale presets match the published encoder shapes") {
  auto img = model::paper_image_encoder();
  CHECK(img.conv_layers() == 7);
  CHECK(img.input_shape == std::vector<int>{3, 128, 128});
  CHECK(img.feature_dim == 1024);
  auto aud = model::paper_audio_encoder();
  CHECK(aud.conv_layers() == 6);
  CHECK(aud.input_shape == std::vector<int>{1, 64, 64});
  CHECK(aud.feature_dim == 1024);
  // Decoder output shapes mirror encoder inputs.
  CHECK(model::paper_image_decoder().output_shape == img.input_shape);
  CHECK(model::paper_audio_decoder().output_shape == aud.input_shape);
  // Desk presets.
  CHECK(model::desk_image_encoder(32, 64).conv_layers() == 4);
  CHECK(model::desk_audio_encoder(64).conv_layers() == 4);
}

TEST_CASE("modality non-interference: audio parameters never touch image paths") {
  model::StumModel m(micro_model_config(2));
  Rng rng(5);
  Tensor img({3, 16, 16});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 1));
  Tensor before = m.encode(img, Modality::image);
  for (auto& p : m.audio_encoder().params) p.value.fill(123.0f);
  Tensor after = m.encode(img, Modality::image);
  CHECK(before.data == after.data);
}

TEST_CASE("train_encoders: zero epochs leaves initialization untouched") {
  MicroWorld w(10);
  model::StumModel m(micro_model_config(3));
  const std::vector<float> init = all_params(m);
  auto cfg = micro_train_config(false);
  cfg.epochs = 0;
  auto stats = m.train_encoders({sim::StreamView(w.stream)}, cfg);
  CHECK(stats.empty());
  CHECK(all_params(m) == init);
}

TEST_CASE("train_encoders: visual mode leaves audio parameters at initialization") {
  MicroWorld w(11);
  model::StumModel m(micro_model_config(4));
  std::vector<float> audio_init;
  for (const auto& p : m.audio_encoder().params) {
    audio_init.insert(audio_init.end(), p.value.data.begin(), p.value.data.end());
  }
  auto stats = m.train_encoders({sim::StreamView(w.stream)}, micro_train_config(false));
  CHECK(stats.size() == 4);
  std::vector<float> audio_after;
  for (const auto& p : m.audio_encoder().params) {
    audio_after.insert(audio_after.end(), p.value.data.begin(), p.value.data.end());
  }
  CHECK(audio_after == audio_init);
  // Image encoder did move.
  bool moved = false;
  model::StumModel fresh(micro_model_config(4));
  for (size_t i = 0; i < m.image_encoder().params.size(); ++i) {
    moved = moved ||
            m.image_encoder().params[i].value.data != fresh.image_encoder().params[i].value.data;
  }
  CHECK(moved);
}

TEST_CASE("micro joint training: loss decreases and margins separate") {
  MicroWorld w(12, 8, 14);
  model::StumModel m(micro_model_config(5));
  auto cfg = micro_train_config(true);
  cfg.epochs = 8;
  cfg.steps_per_epoch = 12;
  auto stats = m.train_encoders({sim::StreamView(w.stream)}, cfg);
  REQUIRE(stats.size() == 8);
  CHECK(stats.back().visual_loss < stats.front().visual_loss);
  CHECK(stats.back().av_loss < stats.front().av_loss);

  // Margin direction on a held-out batch.
  sim::StreamView view(w.stream);
  auto batch = cue::sample_visual_pairs(view, 100, 999, {});
  double pos_sum = 0, neg_sum = 0;
  int pos_n = 0, neg_n = 0;
  for (const auto& s : batch.samples) {
    Tensor ea = m.encode(view.frame(s.anchor_frame), Modality::image);
    Tensor eb = m.encode(view.frame(s.partner_frame), Modality::image);
    const double d = model::pair_distance(ea, eb);
    if (s.z == 0) {
      pos_sum += d;
      ++pos_n;
    } else {
      neg_sum += d;
      ++neg_n;
    }
  }
  CHECK(pos_sum / pos_n < neg_sum / neg_n);
}

TEST_CASE("alignment-loss training mode runs and reduces loss") {
  MicroWorld w(13);
  model::StumModel m(micro_model_config(6));
  auto cfg = micro_train_config(false);
  cfg.epochs = 5;
  auto stats = m.train_encoders_alignment({sim::StreamView(w.stream)}, cfg);
  REQUIRE(stats.size() == 5);
  for (const auto& e : stats) CHECK(std::isfinite(e.visual_loss));
  CHECK(stats.back().visual_loss < stats.front().visual_loss);
}

TEST_CASE("train_decoders: shape contract and frozen encoders") {
  MicroWorld w(14);
  model::StumModel m(micro_model_config(7));
  auto enc_cfg = micro_train_config(true);
  enc_cfg.epochs = 2;
  m.train_encoders({sim::StreamView(w.stream)}, enc_cfg);

  const std::vector<float> enc_before = all_params(m);
  model::TrainDecodersConfig dcfg;
  dcfg.epochs = 2;
  dcfg.frame_stride = 8;
  m.train_decoders({sim::StreamView(w.stream)}, dcfg);
  CHECK(all_params(m) == enc_before);  // encoders bit-identical
  CHECK(m.decoder_steps() > 0);

  Rng rng(6);
  Tensor img({3, 16, 16});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 1));
  Tensor audio_out = m.roundtrip(img, Modality::image, Modality::audio);
  CHECK(audio_out.shape == std::vector<int>{1, 64, 64});
  Tensor crop({64, 64});
  for (auto& v : crop.data) v = static_cast<float>(rng.uniform(0, 1));
  Tensor img_out = m.roundtrip(crop, Modality::audio, Modality::image);
  CHECK(img_out.shape == std::vector<int>{3, 16, 16});
  CHECK(m.roundtrip(img, Modality::image, Modality::image).shape ==
        std::vector<int>{3, 16, 16});
  CHECK(m.roundtrip(crop, Modality::audio, Modality::audio).shape ==
        std::vector<int>{1, 64, 64});
}

TEST_CASE("roundtrip without decoders is an error naming the component") {
  model::ModelConfig cfg = micro_model_config(8);
  cfg.with_decoders = false;
  model::StumModel m(cfg);
  Tensor img({3, 16, 16});
  try {
    m.roundtrip(img, Modality::image, Modality::audio);
    CHECK(false);
  } catch (const num::StumError& e) {
    CHECK(std::string(e.what()).find("audio decoder") != std::string::npos);
  }
}

TEST_CASE("checkpoint: save/load identity and byte-stable re-save") {
  MicroWorld w(15);
  model::StumModel m(micro_model_config(9));
  auto cfg = micro_train_config(true);
  cfg.epochs = 2;
  m.train_encoders({sim::StreamView(w.stream)}, cfg);
  model::TrainDecodersConfig dcfg;
  dcfg.epochs = 1;
  dcfg.frame_stride = 16;
  m.train_decoders({sim::StreamView(w.stream)}, dcfg);

  const fs::path dir1 = fs::temp_directory_path() / "stum_test_ckpt1";
  const fs::path dir2 = fs::temp_directory_path() / "stum_test_ckpt2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  model::save_checkpoint(dir1, m, "deadbeef");

  model::StumModel loaded = model::load_checkpoint(dir1);
  CHECK(loaded.encoder_steps() == m.encoder_steps());
  CHECK(loaded.decoder_steps() == m.decoder_steps());

  // Identical embeddings for 100 random inputs.
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Tensor img({3, 16, 16});
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 1));
    CHECK(m.encode(img, Modality::image).data == loaded.encode(img, Modality::image).data);
  }

  // save(load(save)) is byte-identical file by file.
  model::save_checkpoint(dir2, loaded, "deadbeef");
  size_t n_files = 0;
  for (const auto& entry : fs::directory_iterator(dir1)) {
    const fs::path other = dir2 / entry.path().filename();
    REQUIRE(fs::exists(other));
    std::ifstream a(entry.path(), std::ios::binary), b(other, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    ++n_files;
  }
  CHECK(n_files > 10);
  CHECK(model::checkpoint_config_hash(dir1) == "deadbeef");
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("non-finite loss aborts with diagnostic context") {
  MicroWorld w(16);
  model::StumModel m(micro_model_config(10));
  // Blow up the margin and learning rate to force divergence quickly.
  auto cfg = micro_train_config(false);
  cfg.learning_rate = 1e6f;
  cfg.epochs = 30;
  for (auto& p : m.image_encoder().params) {
    for (auto& v : p.value.data) v *= 100.0f;
  }
  try {
    m.train_encoders({sim::StreamView(w.stream)}, cfg);
    // Divergence is expected but not guaranteed; pass either way as long as
    // no silent NaN checkpoints appear.
  } catch (const num::StumError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite") != std::string::npos);
    CHECK(msg.find("epoch") != std::string::npos);
  }
}
