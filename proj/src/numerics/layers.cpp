#include "stum/numerics/layers.hpp"

namespace stum::num {

std::vector<int> validate_layer_chain(const std::vector<LayerSpec>& specs,
                                      std::vector<int> input_shape) {
  check(!specs.empty(), "layer chain: empty");
  std::vector<int> shape = std::move(input_shape);
  int li = 0;
  auto fail = [&](const std::string& msg) {
    throw StumError("layer " + std::to_string(li) + " (" + layer_kind_name(specs[li].kind) +
                    "): " + msg + " (incoming shape " + shape_str(shape) + ")");
  };
  for (const auto& s : specs) {
    switch (s.kind) {
      case LayerKind::conv2d:
      case LayerKind::downsample: {
        if (shape.size() != 3) fail("needs a [C,H,W] input");
        if (s.in_ch <= 0 || s.out_ch <= 0) fail("channel counts must be positive");
        if (s.in_ch != shape[0])
          fail("in_ch " + std::to_string(s.in_ch) + " does not match input channels");
        if (s.kernel <= 0) fail("kernel must be positive");
        if (s.stride < 1) fail("stride must be >= 1");
        if (s.kind == LayerKind::downsample && s.stride != 2) fail("downsample stride must be 2");
        if (s.pad < 0) fail("pad must be >= 0");
        const int H = shape[1], W = shape[2];
        if (s.kernel > H + 2 * s.pad || s.kernel > W + 2 * s.pad)
          fail("kernel larger than padded input");
        shape = {s.out_ch, (H + 2 * s.pad - s.kernel) / s.stride + 1,
                 (W + 2 * s.pad - s.kernel) / s.stride + 1};
        break;
      }
      case LayerKind::norm: {
        if (shape.size() != 3) fail("needs a [C,H,W] input");
        if (s.channels != shape[0]) fail("channels do not match input");
        if (s.eps <= 0) fail("eps must be positive");
        if (s.momentum < 0 || s.momentum >= 1) fail("momentum must be in [0,1)");
        break;
      }
      case LayerKind::leaky_relu: {
        if (s.slope < 0 || s.slope >= 1) fail("slope must be in [0,1)");
        break;
      }
      case LayerKind::affine: {
        size_t numel = 1;
        for (int e : shape) numel *= static_cast<size_t>(e);
        if (s.in_dim <= 0 || s.out_dim <= 0) fail("dims must be positive");
        if (numel != static_cast<size_t>(s.in_dim))
          fail("in_dim " + std::to_string(s.in_dim) + " does not match flattened input " +
               std::to_string(numel));
        shape = {s.out_dim};
        break;
      }
    }
    ++li;
  }
  return shape;
}

}  // namespace stum::num
