#pragma once

#include <filesystem>
#include <iosfwd>

#include "stum/numerics/tensor.hpp"

namespace stum::num {

// STUMT1 blob: header line "STUMT1 <dtype> <ndim> <d0> <d1> ...\n" followed
// by the raw little-endian float32 payload in row-major order. Used by
// dataset and checkpoint files.
void save_blob(std::ostream& os, const Tensor& t);
void save_blob(const std::filesystem::path& path, const Tensor& t);
Tensor load_blob(std::istream& is);
Tensor load_blob(const std::filesystem::path& path);

}  // namespace stum::num
