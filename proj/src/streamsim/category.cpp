#include "stum/streamsim/category.hpp"

namespace stum::sim {

using num::Rng;

CategorySpec CategorySpec::derive(uint64_t dataset_seed, int category_id) {
  CategorySpec spec;
  spec.category_id = category_id;
  spec.rng_seed = Rng::mix(dataset_seed, 0x5CA7E000ULL + static_cast<uint64_t>(category_id));
  Rng rng(spec.rng_seed);

  Rng shape_rng = rng.fork("shape");
  spec.n_vertices = 3 + shape_rng.below_int(6);  // 3..8
  const double base_r = shape_rng.uniform(0.60, 0.68);
  spec.vertex_radius.resize(spec.n_vertices);
  for (auto& r : spec.vertex_radius) r = base_r * shape_rng.uniform(0.75, 1.25);
  spec.hue = shape_rng.uniform();
  spec.saturation = shape_rng.uniform(0.18, 0.32);
  spec.value = shape_rng.uniform(0.66, 0.74);
  spec.lighting_amp = shape_rng.uniform(0.65, 0.75);
  spec.marker_angle = shape_rng.uniform(0.0, 6.283185307179586);
  spec.marker_dist = base_r * shape_rng.uniform(0.35, 0.55);
  spec.lighting_phase = shape_rng.uniform(0.0, 6.283185307179586);
  spec.scale_phase = shape_rng.uniform(0.0, 6.283185307179586);
  spec.scale_amp = shape_rng.uniform(0.25, 0.35);

  Rng name_rng = rng.fork("name");
  spec.base_duration_s = name_rng.uniform(0.7, 1.5);
  const int n_tracks = 2 + name_rng.below_int(3);  // 2..4
  spec.name_signature.resize(n_tracks);
  for (int t = 0; t < n_tracks; ++t) {
    BandTrack& tr = spec.name_signature[t];
    // Base bands kept in [2, 62) so variant shifts of +/-1 stay in range.
    tr.start_band = name_rng.uniform(2.0, 62.0);
    tr.end_band = name_rng.uniform(2.0, 62.0);
    if (t == 0) {
      // Dominant full-span track keeps the segment's time profile symmetric.
      tr.onset = 0.0;
      tr.offset = 1.0;
      tr.amplitude = 1.0;
    } else {
      tr.onset = name_rng.uniform(0.0, 0.55);
      tr.offset = tr.onset + name_rng.uniform(0.25, 1.0 - tr.onset);
      tr.amplitude = name_rng.uniform(0.25, 0.5);
    }
    tr.sigma = name_rng.uniform(1.0, 2.2);
  }
  return spec;
}

World World::derive(uint64_t dataset_seed, int k) {
  num::check(k >= 1, "world: k must be >= 1");
  World w;
  w.dataset_seed = dataset_seed;
  w.categories.reserve(k);
  for (int c = 0; c < k; ++c) w.categories.push_back(CategorySpec::derive(dataset_seed, c));
  return w;
}

}  // namespace stum::sim
