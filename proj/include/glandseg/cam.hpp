#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glandseg/classifier.hpp"
#include "glandseg/dataset.hpp"
#include "glandseg/raster.hpp"

namespace glandseg {

struct HeatMap {
  FloatRaster values;  // in [0, 1]
  Grade target_class = Grade::Benign;
  std::string source_id;
};

/// Grad-CAM++ map on the feature grid, before upsampling.
/// activations, gradients: [C, G, G] (or batched [B, C, G, G]).
/// alpha = g^2 / (2 g^2 + sum_ab(A) g^3), 0 where the denominator vanishes;
/// w_k = sum_ij alpha relu(g); L = relu(sum_k w_k A_k).
torch::Tensor gradcam_pp_map(const torch::Tensor& activations, const torch::Tensor& gradients);

/// Bilinear upsampling of a [G, G] map to out_size, then min-max scaling to
/// [0, 1]. A constant map becomes all zeros.
FloatRaster finalize_cam(const torch::Tensor& map, int out_size);

struct CamOptions {
  /// Argmax class when unset.
  std::optional<Grade> target;
  /// Multiplies the class score before differentiation.
  double score_scale = 1.0;
};

/// Heat maps for a batch of normalised images [B, 3, S, S]. The classifier
/// is switched to evaluation mode for the call.
std::vector<HeatMap> gradcam_pp(VisionClassifier& model, const torch::Tensor& images, const CamOptions& opts = {});

/// The cam for one patch stored as a float TIFF, keyed by source, offset and
/// rotation.
struct HeatMapEntry {
  std::string source_id;
  Offset offset;
  int rotation = 0;
  Grade target_class = Grade::Benign;
  std::string path;
};

std::string heatmap_key(const std::string& source_id, Offset offset, int rotation);

class HeatMapStore {
 public:
  explicit HeatMapStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void put(const HeatMapEntry& meta, const FloatRaster& values);
  /// Writes manifest.csv with every entry put so far, sorted by key.
  void write_manifest() const;
  void read_manifest();

  FloatRaster get(const std::string& source_id, Offset offset, int rotation) const;
  const std::vector<HeatMapEntry>& entries() const { return entries_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<HeatMapEntry> entries_;
};

}  // namespace glandseg
