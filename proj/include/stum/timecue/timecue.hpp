#pragma once

#include <filesystem>
#include <optional>

#include "stum/streamsim/stream.hpp"

namespace stum::cue {

// Target feature distance as a function of frame distance: 0 inside the
// fire-together window, 1 at the negative gap, undefined elsewhere (the
// sampler only ever queries those two regions).
struct TimeCueFunction {
  int window_frames = 1;   // w: |t_i - t_a| <= w fires together
  int negative_gap = 300;  // g
};

// Target distance for a queried frame distance. Querying an undefined delta
// is an error; no interpolation.
float target_distance(int delta_frames, const TimeCueFunction& f);

enum class Modality { image, audio };

struct PairSample {
  int anchor_frame = -1;          // always an image frame
  int partner_frame = -1;         // frame index; for audio, the frame it was associated from
  Modality partner_modality = Modality::image;
  int z = 0;                      // 0 fire-together, 1 gap negative
};

struct PairBatch {
  std::vector<PairSample> samples;
  uint64_t seed = 0;
  Modality partner_modality = Modality::image;
};

struct SamplePolicy {
  TimeCueFunction cue;
  bool online = true;     // partners strictly in the past (lookback negatives)
  int max_redraws = 10000;
};

// Visual pairs: each accepted anchor emits a positive (anchor, anchor-1) and
// a negative (anchor, anchor-g). Anchors must be non-blank with a non-blank
// predecessor and a non-blank negative partner; others are redrawn. In batch
// mode (online=false) the negative side is drawn from {-g, +g}.
PairBatch sample_visual_pairs(const sim::StreamView& stream, int count, uint64_t seed,
                              const SamplePolicy& policy);

// Audio crop associated with a video frame: scans +/- 2 s of spectrogram
// columns for the maximal-energy contiguous region above the energy
// threshold, crops 1.8 s (54 columns) around its centroid and zero-pads
// symmetrically to [64, 64]. NOT_FOUND (nullopt) if nothing exceeds the
// threshold.
std::optional<num::Tensor> associate_audio(const sim::StreamView& stream, int frame_idx);

// Audiovisual pairs: positive (anchor frame, audio at anchor), negative
// (anchor frame, audio at anchor-g); anchors failing either association (or
// with a blank gap frame) are redrawn.
PairBatch sample_av_pairs(const sim::StreamView& stream, int count, uint64_t seed,
                          const SamplePolicy& policy);

// One JSON record per pair: anchor index, partner (frame index or
// "audio@index"), z, modality tags.
void export_pairs_jsonl(const std::filesystem::path& path, const PairBatch& batch);

// Crop geometry shared with evaluation code: pads/centers an arbitrary-width
// segment into the 64-column window.
num::Tensor center_pad_segment(const num::Tensor& segment_cols);

inline constexpr int kCropColumns = 64;
inline constexpr int kWindowColumns = 54;  // 1.8 s at 33 ms
inline constexpr int kScanHalfWidth = 60;  // 2 s at 30 fps

}  // namespace stum::cue
