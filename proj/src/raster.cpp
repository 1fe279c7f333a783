#include "glandseg/raster.hpp"

#include <algorithm>

namespace glandseg {

std::int32_t InstanceMask::max_label() const {
  std::int32_t m = 0;
  for (auto v : labels) m = std::max(m, v);
  return m;
}

BinaryMask InstanceMask::foreground() const {
  BinaryMask out(rows(), cols(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) out.values()[i] = labels.values()[i] > 0 ? 1 : 0;
  return out;
}

RgbImage crop(const RgbImage& src, Offset at, int rows, int cols) {
  if (at.row < 0 || at.col < 0 || at.row + rows > src.rows() || at.col + cols > src.cols()) {
    throw std::out_of_range("crop: window exceeds image bounds");
  }
  RgbImage out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const std::uint8_t* s = &src.data()[(static_cast<std::size_t>(at.row + r) * src.cols() + at.col) * 3];
    std::copy(s, s + static_cast<std::size_t>(cols) * 3, &out.at(r, 0, 0));
  }
  return out;
}

RgbImage rotate_quarter_turns(const RgbImage& src, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return src;
  if (src.rows() != src.cols()) throw std::invalid_argument("rotate_quarter_turns: image is not square");
  const int n = src.rows();
  RgbImage out(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int rr = r, cc = c;
      for (int i = 0; i < k; ++i) {
        const int nr = cc;
        cc = n - 1 - rr;
        rr = nr;
      }
      for (int ch = 0; ch < 3; ++ch) out.at(rr, cc, ch) = src.at(r, c, ch);
    }
  }
  return out;
}

}  // namespace glandseg
