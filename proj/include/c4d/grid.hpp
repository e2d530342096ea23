#pragma once

#include <cassert>
#include <vector>

namespace c4d {

// Row-major H x W grid. (x, y) = (column, row).
template <typename T>
class Grid {
 public:
  Grid() : width_(0), height_(0) {}
  Grid(int width, int height, const T& fill = T())
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[static_cast<size_t>(y) * width_ + x];
  }
  const T& at(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[static_cast<size_t>(y) * width_ + x];
  }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(int w, int h) const { return width_ == w && height_ == h; }

 private:
  int width_;
  int height_;
  std::vector<T> data_;
};

}  // namespace c4d
