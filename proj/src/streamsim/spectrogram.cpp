#include "stum/streamsim/spectrogram.hpp"

#include <cmath>

namespace stum::sim {

using num::Rng;
using num::Tensor;

SpectrogramSegment synth_spectrogram(const CategorySpec& spec, int variant_seed,
                                     float noise_floor) {
  Rng rng(Rng::mix(spec.rng_seed, 0xA0D10000ULL + static_cast<uint64_t>(variant_seed)));

  const double duration =
      std::min(1.7, std::max(0.5, spec.base_duration_s + rng.uniform(-0.2, 0.2)));
  int L = static_cast<int>(std::lround(duration / kColumnSeconds));
  L = std::min(kMaxSegmentCols, std::max(kMinSegmentCols, L));
  const double amp_scale = 1.0 + rng.uniform(-0.2, 0.2);
  const int band_shift = static_cast<int>(rng.below(3)) - 1;  // -1, 0, +1

  SpectrogramSegment seg;
  seg.category_id = spec.category_id;
  seg.variant_seed = variant_seed;
  seg.values = Tensor({kMelBands, L});
  seg.values.fill(noise_floor);

  for (const BandTrack& tr : spec.name_signature) {
    const int c_lo = static_cast<int>(std::floor(tr.onset * (L - 1)));
    const int c_hi = static_cast<int>(std::ceil(tr.offset * (L - 1)));
    for (int col = c_lo; col <= c_hi && col < L; ++col) {
      const double u = (c_hi == c_lo) ? 0.0 : static_cast<double>(col - c_lo) / (c_hi - c_lo);
      const double center = tr.start_band + (tr.end_band - tr.start_band) * u + band_shift;
      // Symmetric attack/decay over the whole segment.
      const double envelope = std::sin(3.141592653589793 * (col + 0.5) / L);
      const double amp = amp_scale * tr.amplitude * envelope;
      const int b_lo = std::max(0, static_cast<int>(std::floor(center - 4 * tr.sigma)));
      const int b_hi = std::min(kMelBands - 1, static_cast<int>(std::ceil(center + 4 * tr.sigma)));
      for (int b = b_lo; b <= b_hi; ++b) {
        const double d = (b - center) / tr.sigma;
        seg.values.at(b, col) += static_cast<float>(amp * std::exp(-0.5 * d * d));
      }
    }
  }
  return seg;
}

std::vector<float> column_energies(const Tensor& spectro) {
  num::check(spectro.ndim() == 2 && spectro.shape[0] == kMelBands,
             "column_energies: need [64, T]");
  const int T = spectro.shape[1];
  std::vector<float> out(T, 0.0f);
  for (int b = 0; b < kMelBands; ++b) {
    const float* row = spectro.data.data() + static_cast<size_t>(b) * T;
    for (int t = 0; t < T; ++t) out[t] += row[t] * row[t];
  }
  for (auto& v : out) v = std::sqrt(v);
  return out;
}

float energy_threshold(float noise_floor) {
  return 10.0f * noise_floor * std::sqrt(static_cast<float>(kMelBands));
}

}  // namespace stum::sim
