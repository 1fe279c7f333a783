#pragma once

#include <cstdint>
#include <filesystem>

#include "glandseg/dataset.hpp"

namespace glandseg::synthetic {

/// Parametric stand-in for GlaS: elliptical glands on a stroma background.
/// Benign glands carry a pale central lumen and a smooth low-frequency
/// texture, malignant glands a high-frequency speckle; the background is
/// identical for both grades.
struct SynthSpec {
  int train_count = 40;
  int test_a_count = 5;
  int test_b_count = 5;
  int canvas = 500;
  int glands_min = 2;
  int glands_max = 5;
  double axis_min = 30.0;
  double axis_max = 70.0;
  int min_gap = 6;           // free pixels kept between any two glands
  int max_attempts = 500;    // placement retries per gland
  double benign_period = 48.0;
  double benign_amplitude = 28.0;
  double benign_lumen = 0.45;  // pale lumen ellipse, as a fraction of the gland axes; 0 disables
  double malignant_amplitude = 70.0;
  double background_noise = 8.0;
  std::uint64_t seed = 7;
};

struct GeneratedImage {
  RgbImage image;
  InstanceMask annotation;
  Grade grade = Grade::Benign;
};

/// One image; throws std::runtime_error if the glands cannot be packed within
/// the retry budget.
GeneratedImage generate_image(const SynthSpec& spec, Grade grade, std::uint64_t seed);

/// Writes <split>_<n>.png, <split>_<n>_anno.png and Grade.csv under `root`.
void generate(const SynthSpec& spec, const std::filesystem::path& root);

}  // namespace glandseg::synthetic
