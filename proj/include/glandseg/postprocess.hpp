#pragma once

#include <cstdint>
#include <span>

#include "glandseg/raster.hpp"

namespace glandseg {

struct PatchPrediction {
  Offset offset;
  FloatRaster values;
};

/// Running sum/count accumulator for overlapping patch predictions.
class StitchCanvas {
 public:
  StitchCanvas(int rows, int cols) : sum_(rows, cols, 0.0), count_(rows, cols, 0) {}

  void add(const PatchPrediction& patch);

  /// Per-pixel mean of every patch that covered it. Throws if any pixel was
  /// never covered.
  FloatRaster mean() const;

  const Raster<double>& sum() const { return sum_; }
  const Raster<std::int32_t>& count() const { return count_; }

 private:
  Raster<double> sum_;
  Raster<std::int32_t> count_;
};

FloatRaster stitch_patches(std::span<const PatchPrediction> patches, int rows, int cols);

/// Foreground where value >= threshold.
BinaryMask binarize(const FloatRaster& prob, float threshold = 0.5f);

/// gland AND NOT contour.
BinaryMask remove_contour_overlap(const BinaryMask& gland, const BinaryMask& contour);

/// Drops 8-connected foreground components smaller than min_px.
BinaryMask remove_small_objects(const BinaryMask& mask, std::int64_t min_px);

/// Fills 4-connected background components that do not touch the raster edge
/// and are smaller than max_px.
BinaryMask fill_small_holes(const BinaryMask& mask, std::int64_t max_px);

struct CleanOptions {
  int median_radius = 2;
  std::int64_t min_object_px = 500;
  std::int64_t max_hole_px = 200;
};

/// Median filter, small-object removal, hole filling, then 8-connected
/// labelling with labels 1..K.
InstanceMask clean(const BinaryMask& mask, const CleanOptions& opts);

struct PostprocessOptions {
  float threshold = 0.5f;
  CleanOptions clean;
};

/// Full chain from stitched probabilities to instances: threshold both maps,
/// subtract the contour from the gland, clean.
InstanceMask postprocess(const FloatRaster& gland_prob, const FloatRaster& contour_prob,
                         const PostprocessOptions& opts);

}  // namespace glandseg
