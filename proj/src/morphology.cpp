#include "glandseg/morphology.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace glandseg {

std::vector<Offset> disk_offsets(int radius) {
  if (radius < 0) throw std::invalid_argument("disk_offsets: negative radius");
  std::vector<Offset> out;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc)
      if (dr * dr + dc * dc <= radius * radius) out.push_back({dr, dc});
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  const auto se = disk_offsets(radius);
  BinaryMask out(mask.rows(), mask.cols(), 0);
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      for (const auto& o : se) {
        const int rr = r + o.row, cc = c + o.col;
        if (out.contains(rr, cc)) out(rr, cc) = 1;
      }
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& mask, int radius) {
  const auto se = disk_offsets(radius);
  BinaryMask out(mask.rows(), mask.cols(), 0);
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      bool keep = true;
      for (const auto& o : se) {
        const int rr = r + o.row, cc = c + o.col;
        if (mask.contains(rr, cc) && !mask(rr, cc)) {
          keep = false;
          break;
        }
      }
      out(r, c) = keep ? 1 : 0;
    }
  }
  return out;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), in place on a strided line.
void distance_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        if (--k < 0) break;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = (k == 0) ? -inf : s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

Raster<double> squared_distance_transform(const BinaryMask& mask) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int rows = mask.rows(), cols = mask.cols();
  Raster<double> dt(rows, cols, inf);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.values()[i]) dt.values()[i] = 0.0;

  const int n = std::max(rows, cols);
  std::vector<double> f, d;
  std::vector<int> v(n);
  std::vector<double> z(n + 1);

  f.resize(rows);
  d.resize(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) f[r] = dt(r, c);
    distance_1d(f, d, v, z);
    for (int r = 0; r < rows; ++r) dt(r, c) = d[r];
  }
  f.resize(cols);
  d.resize(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) f[c] = dt(r, c);
    distance_1d(f, d, v, z);
    for (int c = 0; c < cols; ++c) dt(r, c) = d[c];
  }
  return dt;
}

InstanceMask label_components(const BinaryMask& mask, Connectivity conn) {
  static constexpr int dr4[] = {-1, 1, 0, 0};
  static constexpr int dc4[] = {0, 0, -1, 1};
  static constexpr int dr8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static constexpr int dc8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
  const int* dr = conn == Connectivity::Four ? dr4 : dr8;
  const int* dc = conn == Connectivity::Four ? dc4 : dc8;
  const int nn = conn == Connectivity::Four ? 4 : 8;

  InstanceMask out(mask.rows(), mask.cols());
  std::int32_t next = 0;
  std::queue<Offset> frontier;
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c) || out.labels(r, c)) continue;
      ++next;
      out.labels(r, c) = next;
      frontier.push({r, c});
      while (!frontier.empty()) {
        const Offset p = frontier.front();
        frontier.pop();
        for (int i = 0; i < nn; ++i) {
          const int rr = p.row + dr[i], cc = p.col + dc[i];
          if (mask.contains(rr, cc) && mask(rr, cc) && !out.labels(rr, cc)) {
            out.labels(rr, cc) = next;
            frontier.push({rr, cc});
          }
        }
      }
    }
  }
  return out;
}

std::vector<std::int64_t> label_areas(const InstanceMask& mask) {
  std::vector<std::int64_t> areas(static_cast<std::size_t>(mask.max_label()) + 1, 0);
  for (auto v : mask.labels) {
    if (v < 0) throw std::invalid_argument("label_areas: negative label");
    ++areas[v];
  }
  return areas;
}

BinaryMask object_mask(const InstanceMask& mask, std::int32_t label) {
  BinaryMask out(mask.rows(), mask.cols(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = mask.labels.values()[i] == label ? 1 : 0;
  return out;
}

BinaryMask inner_boundary(const BinaryMask& mask) {
  BinaryMask out(mask.rows(), mask.cols(), 0);
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r == mask.rows() - 1 || c == mask.cols() - 1 || !mask(r - 1, c) ||
                        !mask(r + 1, c) || !mask(r, c - 1) || !mask(r, c + 1);
      out(r, c) = edge ? 1 : 0;
    }
  }
  return out;
}

BinaryMask median_filter(const BinaryMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("median_filter: negative radius");
  if (radius == 0 || mask.empty()) return mask;
  const int rows = mask.rows(), cols = mask.cols();
  // Summed-area table over the replicate-padded mask.
  const int pr = rows + 2 * radius, pc = cols + 2 * radius;
  Raster<std::int32_t> sat(pr + 1, pc + 1, 0);
  for (int r = 0; r < pr; ++r) {
    const int sr = std::clamp(r - radius, 0, rows - 1);
    std::int32_t row_sum = 0;
    for (int c = 0; c < pc; ++c) {
      const int sc = std::clamp(c - radius, 0, cols - 1);
      row_sum += mask(sr, sc) ? 1 : 0;
      sat(r + 1, c + 1) = sat(r, c + 1) + row_sum;
    }
  }
  const int side = 2 * radius + 1;
  const int half = side * side / 2;
  BinaryMask out(rows, cols, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::int32_t s = sat(r + side, c + side) - sat(r, c + side) - sat(r + side, c) + sat(r, c);
      out(r, c) = s > half ? 1 : 0;
    }
  }
  return out;
}

}  // namespace glandseg
