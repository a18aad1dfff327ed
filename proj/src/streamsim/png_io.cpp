#include "stum/streamsim/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace stum::sim {

using num::check;
using num::StumError;

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& img) {
  check(img.channels == 1 || img.channels == 3, "write_png: channels must be 1 or 3");
  check(img.pixels.size() == static_cast<size_t>(img.width) * img.height * img.channels,
        "write_png: pixel buffer size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  check(fp != nullptr, "write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw StumError("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw StumError("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() +
                                    static_cast<size_t>(y) * img.width * img.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  check(fp != nullptr, "read_png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw StumError("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw StumError("read_png: unreadable image " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize whatever we get to 8-bit RGB.
  png_set_strip_16(png);
  png_set_packing(png);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image8 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Image8 tensor_to_rgb8(const num::Tensor& t) {
  check(t.ndim() == 3 && t.shape[0] == 3, "tensor_to_rgb8: need [3,H,W]");
  Image8 img;
  img.height = t.shape[1];
  img.width = t.shape[2];
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      float v = t.data[c * plane + i];
      v = std::min(1.0f, std::max(0.0f, v));
      img.pixels[i * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

num::Tensor rgb8_to_tensor(const Image8& img) {
  check(img.channels == 3, "rgb8_to_tensor: need RGB input");
  num::Tensor t({3, img.height, img.width});
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      t.data[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c]) / 255.0f;
    }
  }
  return t;
}

Image8 tensor_to_gray8(const num::Tensor& t) {
  check(t.ndim() == 2, "tensor_to_gray8: need [H,W]");
  float mx = 0;
  for (float v : t.data) mx = std::max(mx, v);
  if (mx <= 0) mx = 1;
  Image8 img;
  img.height = t.shape[0];
  img.width = t.shape[1];
  img.channels = 1;
  img.pixels.resize(t.numel());
  for (size_t i = 0; i < t.numel(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, t.data[i] / mx));
    img.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return img;
}

}  // namespace stum::sim
