#include "stum/streamsim/stream.hpp"

#include <algorithm>

namespace stum::sim {

using num::check;
using num::Rng;
using num::Tensor;

std::vector<CategorySplit> split_views_and_variants(int k, const SplitConfig& cfg,
                                                    uint64_t seed) {
  check(k >= 1, "split: k must be >= 1");
  check(cfg.n_test_views >= 0 && cfg.n_test_views < kAnglesPerRing,
        "split: n_test_views must be in [0, 72)");
  check(cfg.n_variants >= 1, "split: n_variants must be >= 1");
  check(cfg.n_test_variants >= 0 && cfg.n_test_variants < cfg.n_variants,
        "split: n_test_variants must be in [0, n_variants)");
  Rng rng(seed);
  std::vector<CategorySplit> splits(k);
  for (int c = 0; c < k; ++c) {
    Rng crng = rng.fork("split", static_cast<uint64_t>(c));
    // Fisher-Yates over the 72 angles; first n_test go to the test ring.
    std::vector<int> angles(kAnglesPerRing);
    for (int i = 0; i < kAnglesPerRing; ++i) angles[i] = i * kAngleStep;
    for (int i = kAnglesPerRing - 1; i > 0; --i) {
      std::swap(angles[i], angles[crng.below_int(i + 1)]);
    }
    CategorySplit& s = splits[c];
    s.train_ring.category_id = c;
    s.train_ring.role = ViewRing::Role::train;
    s.test_ring.category_id = c;
    s.test_ring.role = ViewRing::Role::test;
    s.test_ring.angles.assign(angles.begin(), angles.begin() + cfg.n_test_views);
    s.train_ring.angles.assign(angles.begin() + cfg.n_test_views, angles.end());
    // Cyclic order == ascending capture angle.
    std::sort(s.test_ring.angles.begin(), s.test_ring.angles.end());
    std::sort(s.train_ring.angles.begin(), s.train_ring.angles.end());

    std::vector<int> variants(cfg.n_variants);
    for (int i = 0; i < cfg.n_variants; ++i) variants[i] = i;
    for (int i = cfg.n_variants - 1; i > 0; --i) {
      std::swap(variants[i], variants[crng.below_int(i + 1)]);
    }
    s.test_variants.assign(variants.begin(), variants.begin() + cfg.n_test_variants);
    s.train_variants.assign(variants.begin() + cfg.n_test_variants, variants.end());
    std::sort(s.test_variants.begin(), s.test_variants.end());
    std::sort(s.train_variants.begin(), s.train_variants.end());
  }
  return splits;
}

MultimodalStream generate_stream(const World& world, const std::vector<CategorySplit>& splits,
                                 const StreamConfig& cfg, uint64_t seed) {
  const int k = world.k();
  check(static_cast<int>(splits.size()) == k, "generate_stream: splits/world size mismatch");
  check(cfg.n_fixations >= 1, "generate_stream: need at least one fixation");
  check(!cfg.negatives_enabled || k >= 2,
        "generate_stream: negative sampling needs at least 2 categories");
  check(cfg.fix_min_frames >= 1 && cfg.fix_max_frames >= cfg.fix_min_frames,
        "generate_stream: bad fixation length range");
  check(cfg.sac_min_frames >= 1 && cfg.sac_max_frames >= cfg.sac_min_frames,
        "generate_stream: bad saccade length range");
  for (const auto& s : splits) {
    check(!s.train_ring.angles.empty(), "generate_stream: empty train ring");
    check(!s.train_variants.empty(), "generate_stream: no train variants");
  }

  Rng rng(seed);
  Rng sched_rng = rng.fork("scheduler");
  Rng walk_rng = rng.fork("walk");
  Rng audio_rng = rng.fork("audio");

  // Schedule fixations and saccades first so frame placement is known.
  MultimodalStream stream;
  stream.image_size = cfg.image_size;
  stream.frame_rate = cfg.frame_rate;
  stream.noise_floor = cfg.noise_floor;

  std::vector<int> last_end(k, std::numeric_limits<int>::min() / 2);
  int frame = 0;
  for (int f = 0; f < cfg.n_fixations; ++f) {
    if (f > 0) frame += cfg.sac_min_frames + sched_rng.below_int(cfg.sac_max_frames -
                                                                 cfg.sac_min_frames + 1);
    // Categories whose last appearance is at least exclusion_frames back.
    std::vector<int> eligible;
    for (int c = 0; c < k; ++c) {
      if (last_end[c] < frame - cfg.exclusion_frames) eligible.push_back(c);
    }
    check(!eligible.empty(),
          "generate_stream: no eligible category at frame " + std::to_string(frame) +
              "; increase k or reduce exclusion_frames");
    const int cat = eligible[sched_rng.below_int(static_cast<int>(eligible.size()))];
    const int len =
        cfg.fix_min_frames + sched_rng.below_int(cfg.fix_max_frames - cfg.fix_min_frames + 1);

    FixationRecord rec;
    rec.start = frame;
    rec.length = len;
    rec.category = cat;
    rec.ring_start = walk_rng.below_int(static_cast<int>(splits[cat].train_ring.size()));
    rec.direction = walk_rng.below(2) == 0 ? 1 : -1;
    rec.variant = splits[cat].train_variants[audio_rng.below_int(
        static_cast<int>(splits[cat].train_variants.size()))];
    stream.fixations.push_back(rec);
    last_end[cat] = frame + len - 1;
    frame += len;
  }
  const int total_frames = frame;

  stream.frames.assign(total_frames, Tensor{});
  stream.labels.assign(total_frames, kLabelNone);
  stream.audio = Tensor({kMelBands, total_frames});
  stream.audio.fill(cfg.noise_floor);

  // Render fixation frames by walking the train ring cyclically. Views are
  // rendered once per (category, angle) and shared.
  std::vector<std::vector<Tensor>> view_cache(k);
  for (int c = 0; c < k; ++c) view_cache[c].resize(splits[c].train_ring.size());

  int prev_segment_end = -1;
  for (const FixationRecord& rec : stream.fixations) {
    const ViewRing& ring = splits[rec.category].train_ring;
    const int ring_len = static_cast<int>(ring.size());
    for (int j = 0; j < rec.length; ++j) {
      const int pos = ((rec.ring_start + rec.direction * j) % ring_len + ring_len) % ring_len;
      Tensor& cached = view_cache[rec.category][pos];
      if (cached.empty()) {
        cached = render_view(world.categories[rec.category], ring.angles[pos], cfg.image_size);
      }
      stream.frames[rec.start + j] = cached;
      stream.labels[rec.start + j] = rec.category;
    }

    // Place the spoken name so segment and fixation midpoints align.
    SpectrogramSegment seg =
        synth_spectrogram(world.categories[rec.category], rec.variant, cfg.noise_floor);
    const int L = seg.columns();
    const int start_col = rec.mid_frame() - (L - 1) / 2;
    check(start_col >= 0 && start_col + L <= total_frames,
          "generate_stream: segment out of stream bounds");
    check(start_col > prev_segment_end, "generate_stream: segment overlap");
    prev_segment_end = start_col + L - 1;
    for (int b = 0; b < kMelBands; ++b) {
      for (int col = 0; col < L; ++col) {
        // Deposits add on top of the shared noise floor.
        stream.audio.at(b, start_col + col) += seg.values.at(b, col) - cfg.noise_floor;
      }
    }
    SegmentRecord srec;
    srec.fixation = static_cast<int>(&rec - stream.fixations.data());
    srec.category = rec.category;
    srec.variant = rec.variant;
    srec.start_col = start_col;
    srec.length = L;
    stream.segments.push_back(srec);
  }
  return stream;
}

}  // namespace stum::sim
