#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cal {

// Dense row-major float32 matrix. Row vectors are 1 x n.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> v;

  Tensor() = default;

  Tensor(int r, int c, float fill = 0.0f)
      : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
  }

  static Tensor from_row(const std::vector<float>& x) {
    Tensor t(1, static_cast<int>(x.size()));
    t.v = x;
    return t;
  }

  float& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  float* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const float* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  size_t count() const { return v.size(); }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::vector<float> row_copy(int r) const {
    return std::vector<float>(row_ptr(r), row_ptr(r) + cols);
  }
};

inline bool all_finite(const Tensor& t) {
  for (float x : t.v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace cal
