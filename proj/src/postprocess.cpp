#include "glandseg/postprocess.hpp"

#include <stdexcept>
#include <string>

#include "glandseg/morphology.hpp"

namespace glandseg {

void StitchCanvas::add(const PatchPrediction& patch) {
  const auto& v = patch.values;
  const Offset o = patch.offset;
  if (o.row < 0 || o.col < 0 || o.row + v.rows() > sum_.rows() || o.col + v.cols() > sum_.cols()) {
    throw std::out_of_range("stitch: patch at (" + std::to_string(o.row) + "," + std::to_string(o.col) +
                            ") exceeds canvas");
  }
  for (int r = 0; r < v.rows(); ++r) {
    for (int c = 0; c < v.cols(); ++c) {
      sum_(o.row + r, o.col + c) += v(r, c);
      ++count_(o.row + r, o.col + c);
    }
  }
}

FloatRaster StitchCanvas::mean() const {
  FloatRaster out(sum_.rows(), sum_.cols(), 0.0f);
  for (int r = 0; r < sum_.rows(); ++r) {
    for (int c = 0; c < sum_.cols(); ++c) {
      if (count_(r, c) == 0) {
        throw std::runtime_error("stitch: pixel (" + std::to_string(r) + "," + std::to_string(c) +
                                 ") not covered by any patch");
      }
      out(r, c) = static_cast<float>(sum_(r, c) / count_(r, c));
    }
  }
  return out;
}

FloatRaster stitch_patches(std::span<const PatchPrediction> patches, int rows, int cols) {
  StitchCanvas canvas(rows, cols);
  for (const auto& p : patches) canvas.add(p);
  return canvas.mean();
}

BinaryMask binarize(const FloatRaster& prob, float threshold) {
  BinaryMask out(prob.rows(), prob.cols(), 0);
  for (std::size_t i = 0; i < prob.size(); ++i) out.values()[i] = prob.values()[i] >= threshold ? 1 : 0;
  return out;
}

BinaryMask remove_contour_overlap(const BinaryMask& gland, const BinaryMask& contour) {
  if (!gland.same_shape(contour)) throw std::invalid_argument("remove_contour_overlap: shape mismatch");
  BinaryMask out(gland.rows(), gland.cols(), 0);
  for (std::size_t i = 0; i < gland.size(); ++i) {
    const bool g = gland.values()[i] != 0;
    const bool overlap = g && contour.values()[i] != 0;
    out.values()[i] = (g && !overlap) ? 1 : 0;
  }
  return out;
}

BinaryMask remove_small_objects(const BinaryMask& mask, std::int64_t min_px) {
  const auto comps = label_components(mask, Connectivity::Eight);
  const auto areas = label_areas(comps);
  BinaryMask out(mask.rows(), mask.cols(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto l = comps.labels.values()[i];
    out.values()[i] = (l > 0 && areas[l] >= min_px) ? 1 : 0;
  }
  return out;
}

BinaryMask fill_small_holes(const BinaryMask& mask, std::int64_t max_px) {
  BinaryMask background(mask.rows(), mask.cols(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) background.values()[i] = mask.values()[i] ? 0 : 1;
  const auto comps = label_components(background, Connectivity::Four);
  const auto areas = label_areas(comps);
  std::vector<bool> touches_edge(areas.size(), false);
  for (int r = 0; r < mask.rows(); ++r) {
    touches_edge[comps.labels(r, 0)] = true;
    touches_edge[comps.labels(r, mask.cols() - 1)] = true;
  }
  for (int c = 0; c < mask.cols(); ++c) {
    touches_edge[comps.labels(0, c)] = true;
    touches_edge[comps.labels(mask.rows() - 1, c)] = true;
  }
  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto l = comps.labels.values()[i];
    if (l > 0 && !touches_edge[l] && areas[l] < max_px) out.values()[i] = 1;
  }
  return out;
}

InstanceMask clean(const BinaryMask& mask, const CleanOptions& opts) {
  if (opts.median_radius < 0 || opts.min_object_px < 0 || opts.max_hole_px < 0) {
    throw std::invalid_argument("clean: thresholds must be non-negative");
  }
  BinaryMask m = median_filter(mask, opts.median_radius);
  m = remove_small_objects(m, opts.min_object_px);
  m = fill_small_holes(m, opts.max_hole_px);
  return label_components(m, Connectivity::Eight);
}

InstanceMask postprocess(const FloatRaster& gland_prob, const FloatRaster& contour_prob,
                         const PostprocessOptions& opts) {
  const auto gland = binarize(gland_prob, opts.threshold);
  const auto contour = binarize(contour_prob, opts.threshold);
  return clean(remove_contour_overlap(gland, contour), opts.clean);
}

}  // namespace glandseg
