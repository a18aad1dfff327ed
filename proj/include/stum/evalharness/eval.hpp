#pragma once

#include <filesystem>

#include "stum/model/stum_model.hpp"
#include "stum/streamsim/dataset.hpp"

namespace stum::eval {

using cue::Modality;
using model::StumModel;

// One held-out test input with its hidden label (grading privilege only).
struct EvalItem {
  int id = 0;
  Modality modality = Modality::image;
  int label = -1;
  num::Tensor input;  // [3,S,S] image or [64,64] padded spectrogram crop
};

std::vector<EvalItem> make_test_images(const sim::Dataset& ds);
std::vector<EvalItem> make_test_audio(const sim::Dataset& ds);
std::vector<EvalItem> make_test_items(const sim::Dataset& ds);  // images then audio

struct EvalPair {
  int a = 0;  // indices into PairEvalSet::items
  int b = 0;
  bool same_category = false;
};

// Balanced pair set: per test image, `pairs_per_item` positives from the same
// category and as many negatives from different ones. Audiovisual sets pair
// each test image with test audio items.
struct PairEvalSet {
  std::vector<EvalItem> items;
  std::vector<EvalPair> visual_pairs;
  std::vector<EvalPair> av_pairs;
};

PairEvalSet build_pair_evalset(const sim::Dataset& ds, int pairs_per_item, uint64_t seed,
                               bool audiovisual);

struct PairProtocolResult {
  double accuracy = 0;
  double threshold = 0;
  int n_pairs = 0;
};

struct PairAccuracyReport {
  bool shared_threshold = true;
  PairProtocolResult visual;
  PairProtocolResult audiovisual;  // n_pairs == 0 when the set has no AV pairs
};

// Halfway-threshold protocol: theta = (min + max) / 2 over evaluated pair
// distances (shared across protocols by default, per-protocol otherwise);
// predict same-category iff d < theta.
PairAccuracyReport pair_threshold_accuracy(StumModel& model, const PairEvalSet& evalset,
                                           bool shared_threshold = true);

// ---- supervised graders (evaluation-only privilege) ----

struct GraderConfig {
  int epochs = 30;
  int batch = 32;
  float lr = 1e-3f;
  uint64_t seed = 17;
  double min_holdout_accuracy = 0.95;  // below this the grader refuses duty
};

class Grader {
 public:
  Grader(Modality m, int k, num::LayerStack net, double holdout_accuracy, double min_accuracy);

  int predict(const num::Tensor& input);
  std::vector<int> predict_batch(const std::vector<num::Tensor>& inputs);

  Modality modality() const { return modality_; }
  int k() const { return k_; }
  double holdout_accuracy() const { return holdout_accuracy_; }
  bool accepted() const { return accepted_; }

  // Called once by train_grader after the holdout measurement.
  void finalize_holdout(double accuracy, double min_accuracy) {
    holdout_accuracy_ = accuracy;
    accepted_ = accuracy >= min_accuracy;
  }

 private:
  Modality modality_;
  int k_;
  num::LayerStack net_;
  double holdout_accuracy_;
  bool accepted_;
};

// Trains a small conv classifier on the labeled train split and reports
// holdout accuracy on the test split.
Grader train_grader(const sim::Dataset& ds, Modality m, const GraderConfig& cfg);

// Fraction of test items whose roundtrip output is graded back to the input's
// hidden label. Errors if the grader refused duty or category counts differ.
double state_match_rate(StumModel& model, Grader& grader, const std::vector<EvalItem>& items,
                        Modality in_modality, Modality out_modality);

// ---- cluster statistics ----

struct ClusterMetrics {
  double intra_mean = 0;
  double inter_mean = 0;
  double ratio = 0;  // NaN when undefined
  double nearest_centroid_purity = 0;
  std::vector<std::string> warnings;
};

ClusterMetrics cluster_metrics(const std::vector<num::Tensor>& embeddings,
                               const std::vector<int>& labels);

// CSV export: item id, modality, hidden label, then feature_dim columns.
// Byte-identical on re-export.
void export_embeddings(StumModel& model, const std::vector<EvalItem>& items,
                       const std::filesystem::path& path);

}  // namespace stum::eval
