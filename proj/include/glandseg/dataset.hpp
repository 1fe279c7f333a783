#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glandseg/raster.hpp"

namespace glandseg {

namespace fs = std::filesystem;

enum class Grade { Benign = 0, Malignant = 1 };
enum class Split { Train, TestA, TestB };

const char* to_string(Grade g);
const char* to_string(Split s);
Grade grade_from_string(const std::string& s);
Split split_from_string(const std::string& s);
/// Split implied by a GlaS image id ("train_12", "testA_3", ...).
Split split_of_id(const std::string& id);

struct ImageRecord {
  std::string id;
  Split split = Split::Train;
  RgbImage image;
  InstanceMask annotation;
  Grade grade = Grade::Benign;
};

/// Reads a header line then "id,...,grade,..." rows. The grade column is the
/// first header field starting with "grade", or column 1 when none does.
std::map<std::string, Grade> read_grade_table(const fs::path& path);

struct LoadOptions {
  int min_side = 400;
  std::optional<Split> only_split;
};

/// Loads every <id>.<ext> / <id>_anno.<ext> pair under `root` with grades from
/// Grade.csv. Records are ordered by split, then naturally by id.
std::vector<ImageRecord> load_glas_dataset(const fs::path& root, const LoadOptions& opts = {});

std::vector<ImageRecord> filter_split(const std::vector<ImageRecord>& records, Split split);

/// Aligned image/annotation crop before rotation.
struct PatchCrop {
  std::string source_id;
  Grade grade = Grade::Benign;
  Offset offset;
  RgbImage image;
  InstanceMask annotation;
};

/// Corner offsets (0,0), (0,W-p), (H-p,0), (H-p,W-p).
std::array<Offset, 4> corner_offsets(int rows, int cols, int patch);
std::array<PatchCrop, 4> extract_corner_patches(const ImageRecord& record, int patch = 400);

struct ClassWeights {
  double background = 1.0;
  double foreground = 1.0;
};

/// Inverse pixel frequency, normalised so that a balanced split gives 1/1:
/// w_c = N / (2 N_c).
ClassWeights balanced_class_weights(std::int64_t foreground_px, std::int64_t total_px);

/// w(x) = w_c(x) + w0 * exp(-(d1 + d2)^2 / (2 sigma^2)) with d1, d2 the
/// distances to the nearest and second-nearest object. With fewer than two
/// objects the exponential term vanishes.
FloatRaster compute_weight_map(const InstanceMask& gland, double w0, double sigma, ClassWeights weights);

/// Union over objects of dilate(obj) AND NOT erode(obj), with disk elements.
BinaryMask derive_contour_mask(const InstanceMask& gland, int dilate_radius, int erode_radius);

struct PatchSample {
  RgbImage image;
  BinaryMask gland_mask;
  BinaryMask contour_mask;
  FloatRaster weight_map;
  Grade grade = Grade::Benign;
  std::string source_id;
  Offset offset;
  int rotation_quarter_turns = 0;
};

struct PatchOptions {
  int patch = 400;
  int dilate_radius = 2;
  int erode_radius = 2;
  double w0 = 10.0;
  double sigma = 5.0;
  /// Balanced from the training annotations when unset.
  std::optional<ClassWeights> class_weights;
};

PatchSample make_patch_sample(const PatchCrop& crop, const PatchOptions& opts, ClassWeights weights);

/// The four k*90 degree rotations of a square sample; images and masks turn together.
std::array<PatchSample, 4> augment_rotations(const PatchSample& sample);

ClassWeights class_weights_for(const std::vector<ImageRecord>& records, const PatchOptions& opts);

/// One manifest row per rotated sample. Rasters are stored once per corner
/// crop; the rotation is applied when the sample is loaded.
struct PatchManifestEntry {
  std::string source_id;
  Grade grade = Grade::Benign;
  Offset offset;
  int rotation = 0;
  std::string image_path;
  std::string gland_path;
  std::string contour_path;
  std::string weight_path;
};

std::string patch_key(const std::string& source_id, Offset offset);
std::string patch_key(const PatchManifestEntry& e);

/// Writes crops and a manifest.csv under `dir`, returns the manifest rows.
std::vector<PatchManifestEntry> write_patch_set(const fs::path& dir, const std::vector<ImageRecord>& records,
                                                const PatchOptions& opts);
void write_patch_manifest(const fs::path& path, const std::vector<PatchManifestEntry>& entries);
std::vector<PatchManifestEntry> read_patch_manifest(const fs::path& path);
PatchSample load_patch_sample(const fs::path& dir, const PatchManifestEntry& entry);

}  // namespace glandseg
