#include "stum/evalharness/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "stum/numerics/optim.hpp"
#include "stum/streamsim/render.hpp"

namespace stum::eval {

using num::check;
using num::Rng;
using num::Tensor;

std::vector<EvalItem> make_test_images(const sim::Dataset& ds) {
  const sim::World world = ds.world();
  std::vector<EvalItem> items;
  int id = 0;
  for (const auto& split : ds.splits) {
    const int cat = split.test_ring.category_id;
    for (int angle : split.test_ring.angles) {
      EvalItem item;
      item.id = id++;
      item.modality = Modality::image;
      item.label = cat;
      item.input = sim::render_view(world.categories[cat], angle, ds.stream_config.image_size);
      items.push_back(std::move(item));
    }
  }
  return items;
}

std::vector<EvalItem> make_test_audio(const sim::Dataset& ds) {
  const sim::World world = ds.world();
  std::vector<EvalItem> items;
  int id = 100000;  // distinct id space from images
  for (const auto& split : ds.splits) {
    const int cat = split.test_ring.category_id;
    for (int variant : split.test_variants) {
      EvalItem item;
      item.id = id++;
      item.modality = Modality::audio;
      item.label = cat;
      auto seg = sim::synth_spectrogram(world.categories[cat], variant,
                                        ds.stream_config.noise_floor);
      item.input = cue::center_pad_segment(seg.values);
      items.push_back(std::move(item));
    }
  }
  return items;
}

std::vector<EvalItem> make_test_items(const sim::Dataset& ds) {
  std::vector<EvalItem> items = make_test_images(ds);
  auto audio = make_test_audio(ds);
  items.insert(items.end(), std::make_move_iterator(audio.begin()),
               std::make_move_iterator(audio.end()));
  return items;
}

PairEvalSet build_pair_evalset(const sim::Dataset& ds, int pairs_per_item, uint64_t seed,
                               bool audiovisual) {
  check(pairs_per_item >= 1, "build_pair_evalset: pairs_per_item must be >= 1");
  check(ds.k >= 2, "build_pair_evalset: need at least 2 categories");
  PairEvalSet set;
  set.items = make_test_images(ds);
  const int n_images = static_cast<int>(set.items.size());
  int audio_base = 0;
  if (audiovisual) {
    auto audio = make_test_audio(ds);
    audio_base = n_images;
    set.items.insert(set.items.end(), std::make_move_iterator(audio.begin()),
                     std::make_move_iterator(audio.end()));
  }

  // Index items by (modality, category).
  std::map<int, std::vector<int>> images_by_cat, audio_by_cat;
  for (int i = 0; i < static_cast<int>(set.items.size()); ++i) {
    auto& by_cat = set.items[i].modality == Modality::image ? images_by_cat : audio_by_cat;
    by_cat[set.items[i].label].push_back(i);
  }

  Rng rng(seed);
  auto pick_partner = [&](std::map<int, std::vector<int>>& by_cat, int cat, bool same,
                          int self_idx, Rng& prng) {
    if (same) {
      const auto& pool = by_cat.at(cat);
      check(pool.size() > 1 || pool[0] != self_idx,
            "build_pair_evalset: category has no second item");
      int p;
      do {
        p = pool[prng.below_int(static_cast<int>(pool.size()))];
      } while (p == self_idx);
      return p;
    }
    int other_cat;
    do {
      other_cat = prng.below_int(ds.k);
    } while (other_cat == cat);
    const auto& pool = by_cat.at(other_cat);
    return pool[prng.below_int(static_cast<int>(pool.size()))];
  };

  for (int i = 0; i < n_images; ++i) {
    const int cat = set.items[i].label;
    Rng prng = rng.fork("pairs", static_cast<uint64_t>(i));
    for (int r = 0; r < pairs_per_item; ++r) {
      set.visual_pairs.push_back({i, pick_partner(images_by_cat, cat, true, i, prng), true});
      set.visual_pairs.push_back({i, pick_partner(images_by_cat, cat, false, i, prng), false});
      if (audiovisual) {
        set.av_pairs.push_back({i, pick_partner(audio_by_cat, cat, true, -1, prng), true});
        set.av_pairs.push_back({i, pick_partner(audio_by_cat, cat, false, -1, prng), false});
      }
    }
  }
  (void)audio_base;
  return set;
}

namespace {

std::vector<Tensor> embed_items(StumModel& model, const std::vector<EvalItem>& items) {
  std::vector<Tensor> out(items.size());
  // Batch per modality for speed; order preserved.
  for (Modality m : {Modality::image, Modality::audio}) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(items.size()); ++i) {
      if (items[i].modality == m) idx.push_back(i);
    }
    if (idx.empty()) continue;
    const auto& shape = m == Modality::image ? model.config().image_encoder.input_shape
                                             : model.config().audio_encoder.input_shape;
    const size_t sz = Tensor::checked_numel(shape);
    const int F = model.config().image_encoder.feature_dim;
    const size_t chunk = 128;
    for (size_t lo = 0; lo < idx.size(); lo += chunk) {
      const size_t hi = std::min(idx.size(), lo + chunk);
      Tensor batch({static_cast<int>(hi - lo), shape[0], shape[1], shape[2]});
      for (size_t i = lo; i < hi; ++i) {
        const Tensor& in = items[idx[i]].input;
        check(in.numel() == sz, "embed_items: input size mismatch");
        std::copy(in.data.begin(), in.data.end(), batch.data.begin() + (i - lo) * sz);
      }
      Tensor feats = model.encode(batch, m);
      for (size_t i = lo; i < hi; ++i) {
        Tensor row({F});
        std::copy(feats.data.begin() + (i - lo) * F, feats.data.begin() + (i - lo + 1) * F,
                  row.data.begin());
        out[idx[i]] = std::move(row);
      }
    }
  }
  return out;
}

PairProtocolResult score_pairs(const std::vector<EvalPair>& pairs,
                               const std::vector<double>& distances, double threshold) {
  PairProtocolResult r;
  r.threshold = threshold;
  r.n_pairs = static_cast<int>(pairs.size());
  if (pairs.empty()) return r;
  int correct = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const bool predicted_same = distances[i] < threshold;
    if (predicted_same == pairs[i].same_category) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  return r;
}

}  // namespace

PairAccuracyReport pair_threshold_accuracy(StumModel& model, const PairEvalSet& evalset,
                                           bool shared_threshold) {
  check(!evalset.visual_pairs.empty() || !evalset.av_pairs.empty(),
        "pair_threshold_accuracy: empty evalset");
  std::vector<Tensor> emb = embed_items(model, evalset.items);

  auto pair_distances = [&](const std::vector<EvalPair>& pairs) {
    std::vector<double> d(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      d[i] = model::pair_distance(emb[pairs[i].a], emb[pairs[i].b]);
    }
    return d;
  };
  const std::vector<double> dv = pair_distances(evalset.visual_pairs);
  const std::vector<double> da = pair_distances(evalset.av_pairs);

  auto halfway = [](std::initializer_list<const std::vector<double>*> groups) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto* g : groups) {
      for (double v : *g) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    return (lo + hi) / 2.0;
  };

  PairAccuracyReport report;
  report.shared_threshold = shared_threshold;
  if (shared_threshold) {
    const double theta = halfway({&dv, &da});
    report.visual = score_pairs(evalset.visual_pairs, dv, theta);
    report.audiovisual = score_pairs(evalset.av_pairs, da, theta);
  } else {
    report.visual = score_pairs(evalset.visual_pairs, dv,
                                dv.empty() ? 0.0 : halfway({&dv}));
    report.audiovisual = score_pairs(evalset.av_pairs, da,
                                     da.empty() ? 0.0 : halfway({&da}));
  }
  return report;
}

// ---- graders ----

Grader::Grader(Modality m, int k, num::LayerStack net, double holdout_accuracy,
               double min_accuracy)
    : modality_(m),
      k_(k),
      net_(std::move(net)),
      holdout_accuracy_(holdout_accuracy),
      accepted_(holdout_accuracy >= min_accuracy) {}

int Grader::predict(const Tensor& input) {
  std::vector<Tensor> one{input};
  return predict_batch(one)[0];
}

std::vector<int> Grader::predict_batch(const std::vector<Tensor>& inputs) {
  check(!inputs.empty(), "grader: empty batch");
  std::vector<int> preds;
  preds.reserve(inputs.size());
  const size_t sz = Tensor::checked_numel(net_.input_shape);
  const size_t chunk = 256;
  for (size_t lo = 0; lo < inputs.size(); lo += chunk) {
    const size_t hi = std::min(inputs.size(), lo + chunk);
    Tensor batch({static_cast<int>(hi - lo), net_.input_shape[0], net_.input_shape[1],
                  net_.input_shape[2]});
    for (size_t i = lo; i < hi; ++i) {
      check(inputs[i].numel() == sz, "grader: input shape mismatch");
      std::copy(inputs[i].data.begin(), inputs[i].data.end(),
                batch.data.begin() + (i - lo) * sz);
    }
    num::Tape tape;
    auto x = tape.input(std::move(batch));
    auto logits = net_.forward(tape, x, num::RunMode::infer);
    const Tensor& lv = tape.value(logits);
    for (size_t i = lo; i < hi; ++i) {
      const float* row = lv.data.data() + (i - lo) * k_;
      int best = 0;
      for (int c = 1; c < k_; ++c) {
        if (row[c] > row[best]) best = c;
      }
      preds.push_back(best);
    }
  }
  return preds;
}

namespace {

struct LabeledSet {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
};

LabeledSet grader_split(const sim::Dataset& ds, Modality m, bool train) {
  const sim::World world = ds.world();
  LabeledSet set;
  for (const auto& split : ds.splits) {
    const int cat = split.train_ring.category_id;
    if (m == Modality::image) {
      const auto& ring = train ? split.train_ring : split.test_ring;
      for (int angle : ring.angles) {
        set.inputs.push_back(
            sim::render_view(world.categories[cat], angle, ds.stream_config.image_size));
        set.labels.push_back(cat);
      }
    } else {
      const auto& variants = train ? split.train_variants : split.test_variants;
      for (int v : variants) {
        auto seg =
            sim::synth_spectrogram(world.categories[cat], v, ds.stream_config.noise_floor);
        Tensor crop = cue::center_pad_segment(seg.values);
        set.inputs.push_back(Tensor({1, sim::kMelBands, cue::kCropColumns}, crop.data));
        set.labels.push_back(cat);
      }
    }
  }
  return set;
}

num::LayerStack build_grader_net(const sim::Dataset& ds, Modality m, uint64_t seed) {
  using num::LayerSpec;
  std::vector<LayerSpec> layers;
  const int in_ch = m == Modality::image ? 3 : 1;
  const int in_size = m == Modality::image ? ds.stream_config.image_size : 64;
  layers.push_back(LayerSpec::down(in_ch, 16));
  layers.push_back(LayerSpec::norm_layer(16));
  layers.push_back(LayerSpec::leaky());
  layers.push_back(LayerSpec::down(16, 32));
  layers.push_back(LayerSpec::norm_layer(32));
  layers.push_back(LayerSpec::leaky());
  layers.push_back(LayerSpec::down(32, 48));
  layers.push_back(LayerSpec::norm_layer(48));
  layers.push_back(LayerSpec::leaky());
  const int s = in_size / 8;
  layers.push_back(LayerSpec::dense(48 * s * s, ds.k));
  return num::LayerStack::build(layers, {in_ch, in_size, in_size}, Rng(seed),
                                m == Modality::image ? "grader_img" : "grader_aud");
}

}  // namespace

Grader train_grader(const sim::Dataset& ds, Modality m, const GraderConfig& cfg) {
  check(ds.k >= 2, "train_grader: single-category data cannot train a grader");
  LabeledSet train = grader_split(ds, m, true);
  LabeledSet holdout = grader_split(ds, m, false);
  check(!train.inputs.empty() && !holdout.inputs.empty(),
        "train_grader: empty train or holdout split");

  num::LayerStack net = build_grader_net(ds, m, Rng(cfg.seed).fork("init").seed());
  num::Adam opt(net.parameters(), {.lr = cfg.lr});

  const size_t n = train.inputs.size();
  const size_t in_sz = train.inputs[0].numel();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = rng.fork("epoch", epoch);
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[erng.below(i)]);
    for (size_t lo = 0; lo < n; lo += cfg.batch) {
      const size_t hi = std::min(n, lo + cfg.batch);
      Tensor batch({static_cast<int>(hi - lo), net.input_shape[0], net.input_shape[1],
                    net.input_shape[2]});
      std::vector<int> labels;
      for (size_t i = lo; i < hi; ++i) {
        std::copy(train.inputs[order[i]].data.begin(), train.inputs[order[i]].data.end(),
                  batch.data.begin() + (i - lo) * in_sz);
        labels.push_back(train.labels[order[i]]);
      }
      num::Tape tape;
      auto x = tape.input(std::move(batch));
      auto logits = net.forward(tape, x, num::RunMode::train);
      auto loss = tape.softmax_xent(logits, std::move(labels));
      check(std::isfinite(tape.value(loss).data[0]), "train_grader: non-finite loss");
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    }
  }

  Grader grader(m, ds.k, std::move(net), 0.0, cfg.min_holdout_accuracy);
  std::vector<int> preds = grader.predict_batch(holdout.inputs);
  int correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == holdout.labels[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(preds.size());
  grader.finalize_holdout(acc, cfg.min_holdout_accuracy);
  return grader;
}

double state_match_rate(StumModel& model, Grader& grader, const std::vector<EvalItem>& items,
                        Modality in_modality, Modality out_modality) {
  check(grader.accepted(), "state_match_rate: grader holdout accuracy " +
                               std::to_string(grader.holdout_accuracy()) +
                               " below the acceptance gate; refusing grading duty");
  check(grader.modality() == out_modality, "state_match_rate: grader modality mismatch");
  check(!items.empty(), "state_match_rate: no test items");

  std::vector<Tensor> outputs;
  std::vector<int> labels;
  for (const auto& item : items) {
    if (item.modality != in_modality) continue;
    Tensor out = model.roundtrip(item.input, in_modality, out_modality);
    outputs.push_back(std::move(out));
    labels.push_back(item.label);
  }
  check(!outputs.empty(), "state_match_rate: no items of the input modality");
  for (int l : labels) {
    check(l >= 0 && l < grader.k(), "state_match_rate: label outside grader categories");
  }
  std::vector<int> preds = grader.predict_batch(outputs);
  int match = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++match;
  }
  return static_cast<double>(match) / static_cast<double>(preds.size());
}

ClusterMetrics cluster_metrics(const std::vector<Tensor>& embeddings,
                               const std::vector<int>& labels) {
  check(embeddings.size() == labels.size(), "cluster_metrics: size mismatch");
  check(!embeddings.empty(), "cluster_metrics: empty input");
  std::map<int, std::vector<int>> by_cat;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_cat[labels[i]].push_back(i);
  check(by_cat.size() >= 2, "cluster_metrics: need at least 2 categories");

  ClusterMetrics m;
  for (const auto& [cat, idx] : by_cat) {
    if (idx.size() < 2) {
      m.warnings.push_back("category " + std::to_string(cat) +
                           " has a single item; excluded from intra distances");
    }
  }

  double intra_sum = 0, inter_sum = 0;
  size_t intra_n = 0, inter_n = 0;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    for (size_t j = i + 1; j < embeddings.size(); ++j) {
      const double d = model::pair_distance(embeddings[i], embeddings[j]);
      if (labels[i] == labels[j]) {
        intra_sum += d;
        ++intra_n;
      } else {
        inter_sum += d;
        ++inter_n;
      }
    }
  }
  m.intra_mean = intra_n ? intra_sum / intra_n : std::numeric_limits<double>::quiet_NaN();
  m.inter_mean = inter_n ? inter_sum / inter_n : std::numeric_limits<double>::quiet_NaN();
  if (intra_n == 0 || inter_n == 0 || m.inter_mean == 0.0) {
    m.ratio = std::numeric_limits<double>::quiet_NaN();
    m.warnings.push_back("intra/inter ratio undefined");
  } else {
    m.ratio = m.intra_mean / m.inter_mean;
  }

  // Nearest-centroid purity; ties go to the lowest category index.
  const size_t dim = embeddings[0].numel();
  std::map<int, std::vector<double>> centroids;
  for (const auto& [cat, idx] : by_cat) {
    std::vector<double> c(dim, 0.0);
    for (int i : idx) {
      for (size_t j = 0; j < dim; ++j) c[j] += embeddings[i].data[j];
    }
    for (auto& v : c) v /= static_cast<double>(idx.size());
    centroids[cat] = std::move(c);
  }
  size_t pure = 0;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    int best_cat = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [cat, c] : centroids) {  // ascending category order
      double d2 = 0;
      for (size_t j = 0; j < dim; ++j) {
        const double d = embeddings[i].data[j] - c[j];
        d2 += d * d;
      }
      if (d2 < best_d) {
        best_d = d2;
        best_cat = cat;
      }
    }
    if (best_cat == labels[i]) ++pure;
  }
  m.nearest_centroid_purity = static_cast<double>(pure) / static_cast<double>(embeddings.size());
  return m;
}

void export_embeddings(StumModel& model, const std::vector<EvalItem>& items,
                       const std::filesystem::path& path) {
  std::ofstream os(path);
  check(os.is_open(), "export_embeddings: cannot open " + path.string());
  const int F = model.config().image_encoder.feature_dim;
  os << "item_id,modality,label";
  for (int j = 0; j < F; ++j) os << ",f" << j;
  os << '\n';
  if (!items.empty()) {
    std::vector<Tensor> emb = embed_items(model, items);
    char buf[32];
    for (size_t i = 0; i < items.size(); ++i) {
      os << items[i].id << ','
         << (items[i].modality == Modality::image ? "image" : "audio") << ','
         << items[i].label;
      for (int j = 0; j < F; ++j) {
        std::snprintf(buf, sizeof(buf), "%.9g", emb[i].data[j]);
        os << ',' << buf;
      }
      os << '\n';
    }
  }
  check(os.good(), "export_embeddings: write failed");
}

}  // namespace stum::eval
