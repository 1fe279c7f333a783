#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "glandseg/dataset.hpp"
#include "glandseg/nn_blocks.hpp"
#include "glandseg/tensor_convert.hpp"

namespace glandseg {

struct ClassifierConfig {
  int image_size = 400;
  int token_patch_size = 16;
  int embed_dim = 192;
  int depth = 6;
  int heads = 3;
  double mlp_ratio = 4.0;
  int num_classes = 2;
  double dropout = 0.1;

  int grid() const { return image_size / token_patch_size; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

struct ClassifierOutput {
  torch::Tensor logits;        // [B, num_classes]
  torch::Tensor feature_grid;  // [B, D, G, G]; logits = head(mean over the grid)
};

/// Patch-token vision transformer. The class token takes part in attention,
/// but the head reads the mean of the normalised spatial outputs of the last
/// block, which are also returned as `feature_grid`.
class VisionClassifierImpl : public torch::nn::Module {
 public:
  explicit VisionClassifierImpl(const ClassifierConfig& config);

  /// images: [B, 3, S, S] normalised.
  ClassifierOutput forward(const torch::Tensor& images);

  const ClassifierConfig& config() const { return config_; }

  torch::nn::Conv2d patch_embed{nullptr};
  torch::Tensor cls_token;
  torch::Tensor pos_embed;
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear head{nullptr};

 private:
  ClassifierConfig config_;
};
TORCH_MODULE(VisionClassifier);

/// A patch as stored in memory: uint8 [3, S, S] before rotation.
struct ClassifierSample {
  torch::Tensor image;
  int rotation = 0;
  Grade grade = Grade::Benign;
  std::string source_id;
};

/// Stacks rotated, normalised images of samples[idx].
torch::Tensor make_image_batch(const std::vector<ClassifierSample>& samples, const std::vector<std::size_t>& idx);

struct SourceSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Holds out roughly `val_fraction` of the distinct source ids, drawn per
/// grade so both classes appear in validation. Every patch of one source
/// lands on the same side.
SourceSplit split_by_source(const std::vector<ClassifierSample>& samples, double val_fraction, std::uint64_t seed);

struct ClassifierTrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 0.05;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ClassifierTrainConfig& c);
void from_json(const nlohmann::json& j, ClassifierTrainConfig& c);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct ClassifierTrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
};

/// Argmax accuracy in evaluation mode.
double classifier_accuracy(VisionClassifier& model, const std::vector<ClassifierSample>& samples,
                           const std::vector<std::size_t>& idx, int batch_size = 16);

/// Trains with AdamW and cross-entropy; the model ends holding the weights of
/// the epoch with the best validation accuracy. Throws if either index set is
/// empty.
ClassifierTrainReport train_classifier(VisionClassifier& model, const std::vector<ClassifierSample>& samples,
                                       const SourceSplit& split, const ClassifierTrainConfig& cfg,
                                       const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace glandseg
