#pragma once

#include "stum/streamsim/category.hpp"

namespace stum::sim {

// Renders one view of a category's shape rotated by angle_deg over a dark
// background. angle_deg must be a multiple of 5 in [0, 360). Output is
// [3,S,S] with values quantized to the 8-bit grid (multiples of 1/255), so
// PNG export/import round-trips exactly.
num::Tensor render_view(const CategorySpec& spec, int angle_deg, int image_size);

// HSV -> RGB, h in [0,1), s/v in [0,1].
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

}  // namespace stum::sim
