#pragma once

#include "stum/streamsim/category.hpp"
#include "stum/streamsim/render.hpp"
#include "stum/streamsim/spectrogram.hpp"

namespace stum::sim {

// Cyclically ordered subset of the 72 capture angles of one category.
struct ViewRing {
  int category_id = 0;
  std::vector<int> angles;  // ascending multiples of 5; cyclic order
  enum class Role { train, test } role = Role::train;

  size_t size() const { return angles.size(); }
};

// Per-category train/test partition of views and audio variants.
struct CategorySplit {
  ViewRing train_ring;
  ViewRing test_ring;
  std::vector<int> train_variants;
  std::vector<int> test_variants;
};

struct SplitConfig {
  int n_test_views = 16;     // of the 72 ring angles
  int n_variants = 50;       // audio variants per category
  int n_test_variants = 10;  // of n_variants
};

// Seed-deterministic disjoint splits mirroring the 56/16 view and 40/10
// variant ratios.
std::vector<CategorySplit> split_views_and_variants(int k, const SplitConfig& cfg, uint64_t seed);

struct StreamConfig {
  int n_fixations = 200;
  int image_size = 32;
  int frame_rate = 30;
  int fix_min_frames = 90;   // 3 s
  int fix_max_frames = 120;  // 4 s
  int sac_min_frames = 6;    // 200 ms
  int sac_max_frames = 12;   // 400 ms
  int exclusion_frames = 400;  // scheduler: no category repeat inside this window
  float noise_floor = kNoiseFloor;
  bool negatives_enabled = true;
};

// Hidden ground truth; evaluation-only.
struct FixationRecord {
  int start = 0;
  int length = 0;
  int category = -1;
  int ring_start = 0;
  int direction = 1;  // +1 clockwise, -1 counter-clockwise
  int variant = -1;
  int mid_frame() const { return start + (length - 1) / 2; }
};

struct SegmentRecord {
  int fixation = -1;
  int category = -1;
  int variant = -1;
  int start_col = 0;
  int length = 0;
};

inline constexpr int kLabelNone = -1;

// Frame-rate-aligned image frames plus one spectrogram column per frame
// period. Blank saccade frames hold an empty tensor. labels/fixations/
// segments are hidden ground truth for grading; training code accesses the
// stream through the label-free StreamView.
struct MultimodalStream {
  int image_size = 0;
  int frame_rate = 30;
  std::vector<num::Tensor> frames;  // [3,S,S] or empty (blank)
  num::Tensor audio;                // [64, T]
  std::vector<int> labels;          // category id or kLabelNone
  std::vector<FixationRecord> fixations;
  std::vector<SegmentRecord> segments;
  float noise_floor = kNoiseFloor;

  size_t length() const { return frames.size(); }
  bool is_blank(size_t i) const { return frames[i].empty(); }
};

// Label-free window onto a stream: everything the learner may see.
class StreamView {
 public:
  explicit StreamView(const MultimodalStream& s) : s_(&s) {}
  size_t length() const { return s_->length(); }
  bool is_blank(size_t i) const { return s_->is_blank(i); }
  const num::Tensor& frame(size_t i) const {
    num::check(!s_->is_blank(i), "StreamView: frame " + std::to_string(i) + " is blank");
    return s_->frames[i];
  }
  const num::Tensor& audio() const { return s_->audio; }
  int image_size() const { return s_->image_size; }
  int frame_rate() const { return s_->frame_rate; }
  float noise_floor() const { return s_->noise_floor; }

 private:
  const MultimodalStream* s_;
};

// Generates one interleaved fixation/saccade stream from the train split.
// Deterministic in (world, splits, cfg, seed).
MultimodalStream generate_stream(const World& world, const std::vector<CategorySplit>& splits,
                                 const StreamConfig& cfg, uint64_t seed);

}  // namespace stum::sim
