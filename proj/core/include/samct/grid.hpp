#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace samct {

/// Dense row-major 2D array. Used for rasters, binary masks and HU slices.
template <class T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("Grid: negative extent");
  }

  T& operator()(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }

  bool contains(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool operator==(const Grid&) const = default;
};

/// Binary mask; every element is 0 or 1.
using Mask = Grid<std::uint8_t>;
/// 8-bit single-channel raster.
using Image8 = Grid<std::uint8_t>;

inline size_t count_foreground(const Mask& m) {
  size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

inline void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
}

/// Pixel coordinate; x is the column, y the row.
struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

/// Inclusive pixel box, x0 <= x1 and y0 <= y1.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  bool operator==(const Box&) const = default;
};

}  // namespace samct
