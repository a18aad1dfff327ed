#include "stum/streamsim/render.hpp"

#include <cmath>

namespace stum::sim {

using num::check;
using num::Tensor;

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

namespace {

constexpr double kTau = 6.283185307179586;
constexpr double kBackground = 8.0 / 255.0;

// Crossing-number point-in-polygon.
bool inside_polygon(const std::vector<double>& vx, const std::vector<double>& vy, double px,
                    double py) {
  bool in = false;
  const size_t n = vx.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((vy[i] > py) != (vy[j] > py)) {
      const double x_cross = vx[j] + (py - vy[j]) / (vy[i] - vy[j]) * (vx[i] - vx[j]);
      if (px < x_cross) in = !in;
    }
  }
  return in;
}

}  // namespace

Tensor render_view(const CategorySpec& spec, int angle_deg, int image_size) {
  check(angle_deg % kAngleStep == 0 && angle_deg >= 0 && angle_deg < 360,
        "render_view: angle must be a multiple of 5 in [0,360), got " +
            std::to_string(angle_deg));
  check(image_size >= 8, "render_view: image size too small");

  const double rot = static_cast<double>(angle_deg) * kTau / 360.0;
  const double half = image_size / 2.0;

  // Apparent size varies with viewing angle, like distance to a held object.
  const double scale = 1.0 - spec.scale_amp * (0.5 - 0.5 * std::cos(rot - spec.scale_phase));

  // Rotated polygon vertices in pixel coordinates.
  const int n = spec.n_vertices;
  std::vector<double> vx(n), vy(n);
  for (int i = 0; i < n; ++i) {
    const double a = rot + kTau * i / n;
    const double r = spec.vertex_radius[i] * half * scale;
    vx[i] = half + r * std::cos(a);
    vy[i] = half + r * std::sin(a);
  }
  const double mx = half + spec.marker_dist * half * scale * std::cos(rot + spec.marker_angle);
  const double my = half + spec.marker_dist * half * scale * std::sin(rot + spec.marker_angle);
  const double marker_r = 0.10 * half * scale;

  // View-dependent lighting: distant angles of one object differ noticeably,
  // adjacent angles barely.
  const double lighting =
      1.0 - spec.lighting_amp * (0.5 - 0.5 * std::cos(rot - spec.lighting_phase));

  double br, bg, bb;
  hsv_to_rgb(spec.hue, spec.saturation, spec.value, br, bg, bb);
  double kr, kg, kb;
  hsv_to_rgb(spec.hue + 0.5, spec.saturation, std::min(1.0, spec.value + 0.15), kr, kg, kb);

  Tensor out({3, image_size, image_size});
  const size_t plane = static_cast<size_t>(image_size) * image_size;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      // 2x2 supersampling.
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx;
          const double py = y + 0.25 + 0.5 * sy;
          double r = kBackground, g = kBackground, b = kBackground;
          if (inside_polygon(vx, vy, px, py)) {
            r = br * lighting;
            g = bg * lighting;
            b = bb * lighting;
          }
          const double dx = px - mx, dy = py - my;
          if (dx * dx + dy * dy < marker_r * marker_r) {
            r = kr * lighting;
            g = kg * lighting;
            b = kb * lighting;
          }
          acc[0] += r;
          acc[1] += g;
          acc[2] += b;
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double v = acc[c] / 4.0;
        // Quantize to the 8-bit sensor grid.
        const int q = static_cast<int>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
        out.data[c * plane + static_cast<size_t>(y) * image_size + x] =
            static_cast<float>(q) / 255.0f;
      }
    }
  }
  return out;
}

}  // namespace stum::sim
