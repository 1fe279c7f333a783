#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "glandseg/segmenter.hpp"
#include "glandseg/weights.hpp"

namespace glandseg {

/// sum_x w(x) (pred(x) - target(x))^2 per sample, averaged over the leading
/// batch dimension. Throws on shape mismatch or any negative weight.
torch::Tensor weighted_mse(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weight);

enum class Stage { Gland, Contour };

const char* to_string(Stage s);  // "gland_stage" / "contour_stage"
Stage stage_from_string(const std::string& s);  // accepts "gland", "gland_stage", ...

/// The groups a stage is allowed to update.
std::set<ParamGroup> stage_groups(Stage s);

struct StageConfig {
  Stage stage = Stage::Gland;
  std::set<ParamGroup> trainable_groups = stage_groups(Stage::Gland);
  int epochs = 10;
  double lr = 1e-4;
  double min_lr = 0.0;
  int batch_size = 4;
  std::uint64_t seed = 0;
  /// Unweighted loss, used for the plain fine-tuning baseline.
  bool plain_mse = false;

  static StageConfig for_stage(Stage s);
  /// Throws unless trainable_groups is exactly stage_groups(stage).
  void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& c);
/// Reads everything except the stage and its groups, which come from `for_stage`.
void from_json(const nlohmann::json& j, StageConfig& c);

/// One training patch. image (uint8 [3, S, S]), masks (uint8 [1, S, S]) and
/// weight (float [1, S, S]) are unrotated and may be shared between the
/// rotations of a crop; heatmap (float [1, S, S]) is already in the rotated
/// frame.
struct SegSample {
  torch::Tensor image;
  torch::Tensor gland;
  torch::Tensor contour;
  torch::Tensor weight;
  torch::Tensor heatmap;
  int rotation = 0;
};

struct SegBatch {
  torch::Tensor images;   // normalised float [B, 3, S, S]
  torch::Tensor gland;    // float [B, 1, S, S]
  torch::Tensor contour;  // float [B, 1, S, S]
  torch::Tensor weight;   // float [B, 1, S, S]
  torch::Tensor heatmap;  // float [B, 1, S, S]
};

/// Rotates the unrotated rasters of samples[idx] by their rotation (clockwise
/// quarter turns, as rotate_quarter_turns) and stacks them.
SegBatch make_seg_batch(const std::vector<SegSample>& samples, const std::vector<std::size_t>& idx);

/// Loss on the branch a stage trains, for one batch.
torch::Tensor stage_loss(PromptedSegmenter& model, const SegBatch& batch, const StageConfig& cfg);

struct LossPoint {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
};

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

/// Freezes every group outside cfg.trainable_groups (no gradients, evaluation
/// mode so normalisation statistics stay fixed) and trains the rest with Adam
/// under a cosine schedule. Sample order is drawn from cfg.seed.
std::vector<LossPoint> run_stage(PromptedSegmenter& model, const std::vector<SegSample>& samples, const StageConfig& cfg,
                                 const std::function<void(const LossPoint&)>& on_step = {});

/// Checkpoint metadata carries {"model": "prompted_segmenter", "stage": ...,
/// "config": ...}.
void save_segmenter(const std::filesystem::path& dir, PromptedSegmenter& model, const std::string& stage_tag);
std::string checkpoint_stage(const std::filesystem::path& dir);
SegmenterConfig checkpoint_config(const std::filesystem::path& dir);

struct StageRun {
  std::vector<LossPoint> curve;
  std::filesystem::path checkpoint;
};

/// Full stage with artifacts: loads `input` (required for the contour stage,
/// and it must be a gland-stage checkpoint), trains, writes
/// `out_dir/checkpoint` and `out_dir/loss_curve.csv`.
StageRun train_stage(PromptedSegmenter& model, const std::vector<SegSample>& samples, const StageConfig& cfg,
                     const std::optional<std::filesystem::path>& input, const std::filesystem::path& out_dir,
                     const std::function<void(const LossPoint&)>& on_step = {});

/// Rules that populate the contour prompt encoder and decoder from the gland
/// branch entries of a source manifest.
std::vector<weights::PrefixRule> contour_duplication_rules();

/// Initialises the model from a manifest. With `duplicate_gland_into_contour`
/// the contour branch is filled from the gland branch entries.
weights::LoadReport load_pretrained(PromptedSegmenter& model, const weights::NamedTensors& source, weights::Mode mode,
                                    bool duplicate_gland_into_contour);

}  // namespace glandseg
