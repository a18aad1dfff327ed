#pragma once

#include <cstdint>
#include <vector>

#include "stum/numerics/rng.hpp"
#include "stum/numerics/tensor.hpp"

namespace stum::sim {

inline constexpr int kAngleStep = 5;
inline constexpr int kAnglesPerRing = 72;  // 0..355 degrees
inline constexpr int kMelBands = 64;
inline constexpr double kColumnSeconds = 1.0 / 30.0;  // one column per frame period
inline constexpr int kMinSegmentCols = 15;             // 0.5 s
inline constexpr int kMaxSegmentCols = 52;             // 1.7 s

// One formant-like band trajectory of a synthetic spoken name.
struct BandTrack {
  double start_band = 0;       // [0, 64)
  double end_band = 0;
  double onset = 0;            // relative position in [0, 1]
  double offset = 1;
  double amplitude = 1;
  double sigma = 1.5;          // band-axis spread
};

// Deterministic render and name parameters for one category. Everything is a
// pure function of (dataset_seed, category_id).
struct CategorySpec {
  int category_id = 0;
  uint64_t rng_seed = 0;

  // shape
  int n_vertices = 5;
  std::vector<double> vertex_radius;  // relative to half image size
  double hue = 0;                     // [0,1)
  double saturation = 0.45;
  double value = 0.75;
  double marker_angle = 0;            // radians, relative to shape
  double marker_dist = 0.5;           // relative to half image size
  double lighting_phase = 0;          // radians
  double lighting_amp = 0.45;
  double scale_phase = 0;             // view-dependent apparent size
  double scale_amp = 0.25;

  // name
  std::vector<BandTrack> name_signature;
  double base_duration_s = 1.0;

  static CategorySpec derive(uint64_t dataset_seed, int category_id);
};

// All categories of one dataset seed.
struct World {
  uint64_t dataset_seed = 0;
  std::vector<CategorySpec> categories;

  static World derive(uint64_t dataset_seed, int k);
  int k() const { return static_cast<int>(categories.size()); }
};

}  // namespace stum::sim
