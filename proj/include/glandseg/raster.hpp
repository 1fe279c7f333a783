#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace glandseg {

/// Row-major 2-D grid with value semantics.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}
  Raster(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw std::invalid_argument("Raster: data size does not match " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(const Raster& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Raster: negative dimension");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using BinaryMask = Raster<std::uint8_t>;   // 0 or 1
using FloatRaster = Raster<float>;
using LabelRaster = Raster<std::int32_t>;

/// Integer-labelled segmentation: 0 is background, each positive label is one
/// object. Connectivity is never re-derived from the labels.
struct InstanceMask {
  LabelRaster labels;

  InstanceMask() = default;
  explicit InstanceMask(LabelRaster l) : labels(std::move(l)) {}
  InstanceMask(int rows, int cols) : labels(rows, cols, 0) {}

  int rows() const { return labels.rows(); }
  int cols() const { return labels.cols(); }
  std::int32_t max_label() const;
  BinaryMask foreground() const;

  friend bool operator==(const InstanceMask&, const InstanceMask&) = default;
};

/// 8-bit RGB, interleaved.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols * 3, 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::uint8_t& at(int r, int c, int ch) { return data_[(static_cast<std::size_t>(r) * cols_ + c) * 3 + ch]; }
  std::uint8_t at(int r, int c, int ch) const { return data_[(static_cast<std::size_t>(r) * cols_ + c) * 3 + ch]; }

  std::uint8_t* data() { return data_.data(); }
  const std::uint8_t* data() const { return data_.data(); }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> data_;
};

struct Offset {
  int row = 0;
  int col = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

template <typename T>
Raster<T> crop(const Raster<T>& src, Offset at, int rows, int cols) {
  if (at.row < 0 || at.col < 0 || at.row + rows > src.rows() || at.col + cols > src.cols()) {
    throw std::out_of_range("crop: window exceeds raster bounds");
  }
  Raster<T> out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = src(at.row + r, at.col + c);
  return out;
}

RgbImage crop(const RgbImage& src, Offset at, int rows, int cols);

/// Rotates a square raster by k quarter turns. One turn maps (r, c) to
/// (c, N-1-r), which is clockwise on screen.
template <typename T>
Raster<T> rotate_quarter_turns(const Raster<T>& src, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return src;
  if (src.rows() != src.cols()) throw std::invalid_argument("rotate_quarter_turns: raster is not square");
  const int n = src.rows();
  Raster<T> out(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int rr = r, cc = c;
      for (int i = 0; i < k; ++i) {
        const int nr = cc;
        const int nc = n - 1 - rr;
        rr = nr;
        cc = nc;
      }
      out(rr, cc) = src(r, c);
    }
  }
  return out;
}

RgbImage rotate_quarter_turns(const RgbImage& src, int k);

}  // namespace glandseg
