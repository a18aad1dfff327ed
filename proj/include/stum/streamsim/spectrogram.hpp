#pragma once

#include "stum/streamsim/category.hpp"

namespace stum::sim {

// One synthetic spoken-name spectrogram: 64 mel-like bands by L columns,
// 15 <= L <= 52 (0.5-1.7 s at one 33 ms column per frame period).
struct SpectrogramSegment {
  int category_id = 0;
  int variant_seed = 0;
  num::Tensor values;  // [64, L], noise floor plus band deposits

  int columns() const { return values.shape[1]; }
};

inline constexpr float kNoiseFloor = 1e-3f;

// Deterministic in (spec, variant_seed). Variants jitter duration, amplitude
// (+/-20%) and band offsets (+/-1 band) around the category signature.
SpectrogramSegment synth_spectrogram(const CategorySpec& spec, int variant_seed,
                                     float noise_floor = kNoiseFloor);

// Column L2 energies of a [64, T] spectrogram block.
std::vector<float> column_energies(const num::Tensor& spectro);

// Association threshold on column L2 energy: 10x the all-floor column energy.
float energy_threshold(float noise_floor = kNoiseFloor);

}  // namespace stum::sim
