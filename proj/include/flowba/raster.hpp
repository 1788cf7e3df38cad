#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowba/errors.hpp"

namespace flowba {

// Row-major 2D grid. (x, y) indexes column x of row y; storage is row 0 first.
template <typename T>
class Raster {
 public:
  int width = 0;
  int height = 0;

  Raster() = default;
  Raster(int w, int h, T value = T{})
      : width(w), height(h), data_(static_cast<size_t>(w) * h, value) {
    if (w < 0 || h < 0) throw ShapeMismatch("negative raster dimensions");
  }

  int size() const { return width * height; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data_[static_cast<size_t>(y) * width + x]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return width == other.width && height == other.height;
  }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::vector<T> data_;
};

using GridD = Raster<double>;
using MaskU8 = Raster<uint8_t>;
using FlowGrid = Raster<Eigen::Vector2d>;  // target coordinates, pixels

// Resolution tag for grids that exist at both the solver scale and image scale.
enum class Level : uint8_t { kLow, kFull };

// Per-frame inverse-depth unknowns plus validity. Valid means the pixel carries
// a positive finite disparity and participates in optimization.
struct DisparityGrid {
  GridD values;
  MaskU8 valid;
  Level level = Level::kLow;

  DisparityGrid() = default;
  DisparityGrid(int w, int h, Level lvl = Level::kLow)
      : values(w, h, 0.0), valid(w, h, 0), level(lvl) {}

  int width() const { return values.width; }
  int height() const { return values.height; }

  void check_consistent() const {
    if (!values.same_shape(valid)) throw ShapeMismatch("disparity value/valid shape mismatch");
  }
};

// Bilinear sample of a scalar grid at (x, y). Writes the four corner indices and
// weights so callers can push gradients back through the sample. Returns false
// when any corner falls outside the grid.
struct BilinearSample {
  double value = 0.0;
  int idx[4] = {-1, -1, -1, -1};  // flat indices, row-major
  double w[4] = {0, 0, 0, 0};
};

inline bool bilinear(const GridD& g, double x, double y, BilinearSample* out) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= g.width || y0 + 1 >= g.height) return false;
  const double fx = x - x0, fy = y - y0;
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
  const double w01 = (1 - fx) * fy, w11 = fx * fy;
  const size_t base = static_cast<size_t>(y0) * g.width + x0;
  out->idx[0] = static_cast<int>(base);
  out->idx[1] = static_cast<int>(base + 1);
  out->idx[2] = static_cast<int>(base + g.width);
  out->idx[3] = static_cast<int>(base + g.width + 1);
  out->w[0] = w00;
  out->w[1] = w10;
  out->w[2] = w01;
  out->w[3] = w11;
  out->value =
      w00 * g[out->idx[0]] + w10 * g[out->idx[1]] + w01 * g[out->idx[2]] + w11 * g[out->idx[3]];
  return true;
}

// Valid-aware k-by-k average pooling. Output pixel is the mean of the valid
// inputs in its block; invalid when the block holds none. Input dimensions must
// be exact multiples of the factor.
inline void avg_pool(const GridD& in, const MaskU8& in_valid, int factor, GridD* out,
                     MaskU8* out_valid) {
  if (!in.same_shape(in_valid)) throw ShapeMismatch("avg_pool: value/valid shape mismatch");
  if (factor <= 0 || in.width % factor != 0 || in.height % factor != 0)
    throw ShapeMismatch("avg_pool: dimensions not divisible by factor " + std::to_string(factor));
  const int ow = in.width / factor, oh = in.height / factor;
  *out = GridD(ow, oh, 0.0);
  *out_valid = MaskU8(ow, oh, 0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const int sx = x * factor + dx, sy = y * factor + dy;
          if (in_valid.at(sx, sy)) {
            sum += in.at(sx, sy);
            ++n;
          }
        }
      if (n > 0) {
        out->at(x, y) = sum / n;
        out_valid->at(x, y) = 1;
      }
    }
  }
}

}  // namespace flowba
