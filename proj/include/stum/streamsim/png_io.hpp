#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stum/numerics/tensor.hpp"

namespace stum::sim {

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;  // row-major, interleaved
};

void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

// [3,H,W] float tensor in [0,1] <-> 8-bit RGB. Quantization is round-to-
// nearest; tensors whose values are multiples of 1/255 round-trip exactly.
Image8 tensor_to_rgb8(const num::Tensor& t);
num::Tensor rgb8_to_tensor(const Image8& img);

// [H,W] float tensor scaled by its max into an 8-bit grayscale heatmap.
Image8 tensor_to_gray8(const num::Tensor& t);

}  // namespace stum::sim
