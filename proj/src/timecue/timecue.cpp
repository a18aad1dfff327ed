#include "stum/timecue/timecue.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "stum/numerics/rng.hpp"

namespace stum::cue {

using num::check;
using num::Rng;
using num::Tensor;

float target_distance(int delta_frames, const TimeCueFunction& f) {
  const int d = std::abs(delta_frames);
  if (d <= f.window_frames) return 0.0f;
  if (d == f.negative_gap) return 1.0f;
  throw num::StumError("target_distance: H is undefined at delta " + std::to_string(d) +
                       " (window " + std::to_string(f.window_frames) + ", gap " +
                       std::to_string(f.negative_gap) + ")");
}

namespace {

// Anchors are drawn uniformly; rejected anchors are redrawn rather than
// patched (saccade frames are never processed).
int draw_anchor(Rng& rng, const sim::StreamView& stream, const SamplePolicy& policy,
                const std::function<bool(int)>& accept) {
  const int T = static_cast<int>(stream.length());
  for (int tries = 0; tries < policy.max_redraws; ++tries) {
    const int a = rng.below_int(T);
    if (accept(a)) return a;
  }
  throw num::StumError("pair sampling: no valid anchors after " +
                       std::to_string(policy.max_redraws) + " draws");
}

// Negative partner frame for an anchor; in batch mode either side of the gap.
int gap_partner(Rng& rng, int anchor, int gap, int total, bool online) {
  if (online) return anchor - gap;
  const bool back = rng.below(2) == 0;
  int p = back ? anchor - gap : anchor + gap;
  if (p < 0 || p >= total) p = back ? anchor + gap : anchor - gap;
  return p;
}

}  // namespace

PairBatch sample_visual_pairs(const sim::StreamView& stream, int count, uint64_t seed,
                              const SamplePolicy& policy) {
  const int T = static_cast<int>(stream.length());
  const int g = policy.cue.negative_gap;
  check(T > g, "sample_visual_pairs: stream length must exceed the negative gap");
  check(count >= 0, "sample_visual_pairs: count must be >= 0");

  Rng rng(seed);
  const int n_anchors = (count + 1) / 2;
  PairBatch batch;
  batch.seed = seed;
  batch.partner_modality = Modality::image;
  batch.samples.reserve(count);

  auto accept = [&](int a) {
    if (a - 1 < 0 || stream.is_blank(a) || stream.is_blank(a - 1)) return false;
    const int neg = policy.online ? a - g : a - g >= 0 ? a - g : a + g;
    if (policy.online) {
      return neg >= 0 && !stream.is_blank(neg);
    }
    // Batch mode: at least one side of the gap must be usable.
    const bool back_ok = a - g >= 0 && !stream.is_blank(a - g);
    const bool fwd_ok = a + g < T && !stream.is_blank(a + g);
    return back_ok || fwd_ok;
  };

  for (int i = 0; i < n_anchors; ++i) {
    const int a = draw_anchor(rng, stream, policy, accept);
    PairSample pos;
    pos.anchor_frame = a;
    pos.partner_frame = a - 1;
    pos.partner_modality = Modality::image;
    pos.z = 0;
    batch.samples.push_back(pos);
    if (static_cast<int>(batch.samples.size()) >= count) break;

    int neg_frame = gap_partner(rng, a, g, T, policy.online);
    if (!policy.online && (neg_frame < 0 || neg_frame >= T || stream.is_blank(neg_frame))) {
      neg_frame = (neg_frame == a - g) ? a + g : a - g;
    }
    PairSample neg;
    neg.anchor_frame = a;
    neg.partner_frame = neg_frame;
    neg.partner_modality = Modality::image;
    neg.z = 1;
    batch.samples.push_back(neg);
  }
  return batch;
}

namespace {

struct AudioRegion {
  Tensor crop;
  int run_lo = 0;  // absolute column range of the winning high-energy run
  int run_hi = 0;  // inclusive
};

std::optional<AudioRegion> find_audio_region(const sim::StreamView& stream, int frame_idx) {
  const auto& audio = stream.audio();
  const int T = audio.shape[1];
  check(frame_idx >= 0 && frame_idx < T, "associate_audio: frame index out of range");

  const float threshold = sim::energy_threshold(stream.noise_floor());
  const int lo = std::max(0, frame_idx - kScanHalfWidth);
  const int hi = std::min(T - 1, frame_idx + kScanHalfWidth);

  // Column L2 energies in the scan window.
  std::vector<float> energy(hi - lo + 1, 0.0f);
  for (int b = 0; b < sim::kMelBands; ++b) {
    const float* row = audio.data.data() + static_cast<size_t>(b) * T;
    for (int c = lo; c <= hi; ++c) energy[c - lo] += row[c] * row[c];
  }
  for (auto& e : energy) e = std::sqrt(e);

  // Maximal-energy contiguous run above the threshold.
  double best_sum = 0;
  int best_lo = -1, best_hi = -1;
  int run_lo = -1;
  double run_sum = 0;
  const int n = static_cast<int>(energy.size());
  for (int i = 0; i <= n; ++i) {
    if (i < n && energy[i] > threshold) {
      if (run_lo < 0) {
        run_lo = i;
        run_sum = 0;
      }
      run_sum += energy[i];
    } else if (run_lo >= 0) {
      if (run_sum > best_sum) {
        best_sum = run_sum;
        best_lo = run_lo;
        best_hi = i - 1;
      }
      run_lo = -1;
    }
  }
  if (best_lo < 0) return std::nullopt;

  // Energy-weighted centroid of the winning run.
  double wsum = 0, csum = 0;
  for (int i = best_lo; i <= best_hi; ++i) {
    wsum += energy[i];
    csum += energy[i] * i;
  }
  const int centroid = lo + static_cast<int>(std::lround(csum / wsum));

  // 54-column crop centered on the centroid, zero-padded symmetrically to 64.
  AudioRegion region;
  region.run_lo = lo + best_lo;
  region.run_hi = lo + best_hi;
  region.crop = Tensor({sim::kMelBands, kCropColumns});
  const int pad_left = (kCropColumns - kWindowColumns) / 2;
  const int win_lo = centroid - kWindowColumns / 2;
  for (int b = 0; b < sim::kMelBands; ++b) {
    const float* row = audio.data.data() + static_cast<size_t>(b) * T;
    float* out = region.crop.data.data() + static_cast<size_t>(b) * kCropColumns;
    for (int i = 0; i < kWindowColumns; ++i) {
      const int src = win_lo + i;
      if (src >= 0 && src < T) out[pad_left + i] = row[src];
    }
  }
  return region;
}

// Contiguous non-blank frame run around a frame (the observable fixation
// span); empty for blank frames.
std::pair<int, int> nonblank_span(const sim::StreamView& stream, int frame) {
  const int T = static_cast<int>(stream.length());
  if (stream.is_blank(frame)) return {frame, frame - 1};
  int lo = frame, hi = frame;
  while (lo > 0 && !stream.is_blank(lo - 1)) --lo;
  while (hi + 1 < T && !stream.is_blank(hi + 1)) ++hi;
  return {lo, hi};
}

// The positive/negative audio for a frame must be the name spoken during
// that frame's own fixation: the winning region has to overlap the frame's
// non-blank run, or the frame is rejected. Purely observable, no labels.
bool region_in_own_window(const sim::StreamView& stream, int frame, const AudioRegion& region) {
  const auto [lo, hi] = nonblank_span(stream, frame);
  return region.run_hi >= lo && region.run_lo <= hi;
}

}  // namespace

std::optional<Tensor> associate_audio(const sim::StreamView& stream, int frame_idx) {
  auto region = find_audio_region(stream, frame_idx);
  if (!region) return std::nullopt;
  return std::move(region->crop);
}

PairBatch sample_av_pairs(const sim::StreamView& stream, int count, uint64_t seed,
                          const SamplePolicy& policy) {
  const int T = static_cast<int>(stream.length());
  const int g = policy.cue.negative_gap;
  check(T > g, "sample_av_pairs: stream length must exceed the negative gap");
  check(count >= 0, "sample_av_pairs: count must be >= 0");

  Rng rng(seed);
  const int n_anchors = (count + 1) / 2;
  PairBatch batch;
  batch.seed = seed;
  batch.partner_modality = Modality::audio;
  batch.samples.reserve(count);

  // Association itself is deterministic, so acceptance only needs frame
  // validity plus an own-window crop on both sides.
  auto has_audio = [&](int f) {
    auto region = find_audio_region(stream, f);
    return region.has_value() && region_in_own_window(stream, f, *region);
  };
  auto accept = [&](int a) {
    if (stream.is_blank(a) || !has_audio(a)) return false;
    if (policy.online) {
      const int neg = a - g;
      return neg >= 0 && !stream.is_blank(neg) && has_audio(neg);
    }
    const bool back_ok = a - g >= 0 && !stream.is_blank(a - g) && has_audio(a - g);
    const bool fwd_ok = a + g < T && !stream.is_blank(a + g) && has_audio(a + g);
    return back_ok || fwd_ok;
  };

  for (int i = 0; i < n_anchors; ++i) {
    const int a = draw_anchor(rng, stream, policy, accept);
    PairSample pos;
    pos.anchor_frame = a;
    pos.partner_frame = a;
    pos.partner_modality = Modality::audio;
    pos.z = 0;
    batch.samples.push_back(pos);
    if (static_cast<int>(batch.samples.size()) >= count) break;

    int neg_frame = gap_partner(rng, a, g, T, policy.online);
    if (!policy.online &&
        (neg_frame < 0 || neg_frame >= T || stream.is_blank(neg_frame) || !has_audio(neg_frame))) {
      neg_frame = (neg_frame == a - g) ? a + g : a - g;
    }
    PairSample neg;
    neg.anchor_frame = a;
    neg.partner_frame = neg_frame;
    neg.partner_modality = Modality::audio;
    neg.z = 1;
    batch.samples.push_back(neg);
  }
  return batch;
}

num::Tensor center_pad_segment(const Tensor& segment_cols) {
  check(segment_cols.ndim() == 2 && segment_cols.shape[0] == sim::kMelBands,
        "center_pad_segment: need [64, L]");
  const int L = segment_cols.shape[1];
  check(L <= kCropColumns, "center_pad_segment: segment wider than the crop window");
  Tensor crop({sim::kMelBands, kCropColumns});
  const int off = (kCropColumns - L) / 2;
  for (int b = 0; b < sim::kMelBands; ++b) {
    for (int c = 0; c < L; ++c) {
      crop.at(b, off + c) = segment_cols.at(b, c);
    }
  }
  return crop;
}

void export_pairs_jsonl(const std::filesystem::path& path, const PairBatch& batch) {
  std::ofstream os(path);
  check(os.is_open(), "export_pairs_jsonl: cannot open " + path.string());
  for (const auto& s : batch.samples) {
    nlohmann::ordered_json rec;
    rec["anchor"] = s.anchor_frame;
    if (s.partner_modality == Modality::audio) {
      rec["partner"] = "audio@" + std::to_string(s.partner_frame);
    } else {
      rec["partner"] = s.partner_frame;
    }
    rec["z"] = s.z;
    rec["modality"] = {
        "image", s.partner_modality == Modality::audio ? "audio" : "image"};
    os << rec.dump() << '\n';
  }
  check(os.good(), "export_pairs_jsonl: write failed");
}

}  // namespace stum::cue
