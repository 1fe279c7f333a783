#pragma once

#include <cstdint>
#include <vector>

#include "glandseg/raster.hpp"

namespace glandseg {

enum class Connectivity { Four, Eight };

/// Offsets (dr, dc) with dr^2 + dc^2 <= radius^2.
std::vector<Offset> disk_offsets(int radius);

/// Binary dilation with a disk. Out-of-bounds neighbours are ignored.
BinaryMask dilate(const BinaryMask& mask, int radius);

/// Binary erosion with a disk. Out-of-bounds neighbours are ignored, so
/// objects are not eroded away from the raster edge.
BinaryMask erode(const BinaryMask& mask, int radius);

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `mask`. Pixels in an empty mask get +inf.
Raster<double> squared_distance_transform(const BinaryMask& mask);

/// Connected components of the set pixels, labelled 1..K in raster scan order
/// of each component's first pixel.
InstanceMask label_components(const BinaryMask& mask, Connectivity conn);

/// Per-label pixel counts, indexed by label (index 0 = background).
std::vector<std::int64_t> label_areas(const InstanceMask& mask);

/// Binary mask of a single label.
BinaryMask object_mask(const InstanceMask& mask, std::int32_t label);

/// Pixels of `mask` with at least one 4-neighbour outside the mask (the raster
/// exterior counts as outside).
BinaryMask inner_boundary(const BinaryMask& mask);

/// Majority filter over a (2r+1)^2 square window with replicated borders: the
/// binary case of a median filter.
BinaryMask median_filter(const BinaryMask& mask, int radius);

}  // namespace glandseg
