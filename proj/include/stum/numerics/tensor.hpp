#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace stum::num {

// Thrown for contract violations anywhere in the library.
class StumError : public std::runtime_error {
 public:
  explicit StumError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw StumError(msg);
}

// Dense n-dimensional row-major array. Invariant: numel(shape) == data.size().
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(checked_numel(shape), T(0));
  }

  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check(checked_numel(shape) == data.size(), "tensor: shape/data size mismatch");
  }

  static size_t checked_numel(const std::vector<int>& s) {
    size_t n = 1;
    for (int e : s) {
      check(e > 0, "tensor: non-positive extent");
      n *= static_cast<size_t>(e);
    }
    return n;
  }

  size_t numel() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool empty() const { return data.empty(); }

  int extent(int axis) const {
    check(axis >= 0 && axis < ndim(), "tensor: axis out of range");
    return shape[axis];
  }

  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  // Indexed access for up to 4 dims; used in tests and reference code paths,
  // hot loops index data directly.
  T& at(int i) { return data[static_cast<size_t>(i)]; }
  T& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  T& at(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  T& at(int i, int j, int k, int l) {
    return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  const T& at(int i) const { return data[static_cast<size_t>(i)]; }
  const T& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  const T& at(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const T& at(int i, int j, int k, int l) const {
    return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
TensorT<T> zeros_like(const TensorT<T>& t) {
  return TensorT<T>(t.shape);
}

template <typename U, typename T>
TensorT<U> cast_tensor(const TensorT<T>& t) {
  TensorT<U> out(t.shape);
  for (size_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<U>(t.data[i]);
  return out;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

}  // namespace stum::num
