#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "glandseg/classifier.hpp"
#include "glandseg/dataset.hpp"
#include "glandseg/metrics.hpp"
#include "glandseg/postprocess.hpp"
#include "glandseg/segmenter.hpp"
#include "glandseg/synthetic.hpp"
#include "glandseg/training.hpp"

namespace glandseg {

namespace fs = std::filesystem;

struct CamSettings {
  /// Heat maps for the ground-truth grade instead of the predicted one.
  bool use_true_label = false;
  int batch_size = 8;
};

/// Everything a run needs. Per-module seeds are derived from `seed`.
struct RunConfig {
  std::string run_id = "default";
  fs::path data_root = "data/synthetic";
  fs::path work_dir = "work";
  std::uint64_t seed = 7;
  int threads = 0;  // 0 keeps the libtorch default

  int min_side = 400;
  PatchOptions patches;
  synthetic::SynthSpec synthetic;
  ClassifierConfig classifier;
  ClassifierTrainConfig classifier_training;
  CamSettings cam;
  SegmenterConfig segmenter;
  StageConfig gland_stage = StageConfig::for_stage(Stage::Gland);
  StageConfig contour_stage = StageConfig::for_stage(Stage::Contour);
  std::optional<fs::path> pretrained;  // weight manifest directory
  bool duplicate_gland_into_contour = false;
  PostprocessOptions postprocess;
  AggregationMode aggregation = AggregationMode::Pooled;
  std::optional<double> hausdorff_empty_penalty;

  /// Re-derives the module seeds from `seed` and checks every section.
  void finalize();
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
/// Defaults when `path` is empty. GLANDSEG_DATA_ROOT and GLANDSEG_WORK_DIR
/// override the two path fields.
RunConfig load_run_config(const std::optional<fs::path>& path);

/// work_dir/run_id/{patches, heatmaps, checkpoints, predictions, reports, figures}
struct RunPaths {
  fs::path root, patches, heatmaps, checkpoints, predictions, reports, figures;

  fs::path classifier_checkpoint() const { return checkpoints / "classifier"; }
  fs::path stage_dir(Stage s) const { return checkpoints / to_string(s); }
  fs::path stage_checkpoint(Stage s) const { return stage_dir(s) / "checkpoint"; }
  fs::path prediction_dir(Split s) const { return predictions / to_string(s); }
};

RunPaths run_paths(const RunConfig& cfg);

struct CommandOptions {
  bool force = false;
  bool strict_weights = false;
  std::optional<Split> split;
  std::ostream* log = nullptr;
};

void cmd_synth(const RunConfig& cfg, const CommandOptions& opts);
void cmd_prepare(const RunConfig& cfg, const CommandOptions& opts);

struct ClassifierRunReport {
  ClassifierTrainReport training;
  double val_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> split_accuracy;  // "val", "testA", ...
};
ClassifierRunReport cmd_train_classifier(const RunConfig& cfg, const CommandOptions& opts);

struct LocalizationRecord {
  std::string source_id;
  Offset offset;
  double mean_inside = 0.0;
  double mean_outside = 0.0;
};

struct HeatmapRunReport {
  std::size_t heatmaps = 0;
  /// Unrotated patches of the validation sources.
  std::vector<LocalizationRecord> localization;
  double fraction_inside_higher = 0.0;
};
HeatmapRunReport cmd_heatmaps(const RunConfig& cfg, const CommandOptions& opts);

StageRun cmd_train_seg(const RunConfig& cfg, Stage stage, const CommandOptions& opts);
void cmd_predict(const RunConfig& cfg, const CommandOptions& opts);
std::vector<MetricsReport> cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts);
void cmd_plot(const RunConfig& cfg, const CommandOptions& opts);

/// Segmenter inference on one whole image: heat maps and probabilities for
/// the four corner patches, stitched by averaging.
struct ImagePrediction {
  FloatRaster heatmap;
  FloatRaster gland_prob;
  FloatRaster contour_prob;
  InstanceMask instances;
};
ImagePrediction predict_image(VisionClassifier& classifier, PromptedSegmenter& segmenter, const RgbImage& image,
                              const RunConfig& cfg);

}  // namespace glandseg
