#pragma once

#include <torch/torch.h>

#include <json.hpp>

namespace glandseg {

struct AdapterConfig {
  int mid_channels = 8;
  int kernel_size = 3;

  void validate() const;
};

void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);

/// prompt = heatmap + relu(bn2(conv2(relu(bn1(conv1([heatmap, image]))))))
class PromptAdapterImpl : public torch::nn::Module {
 public:
  explicit PromptAdapterImpl(const AdapterConfig& config = {});

  /// heatmap [B, 1, H, W], image [B, 3, H, W] -> [B, 1, H, W].
  torch::Tensor forward(const torch::Tensor& heatmap, const torch::Tensor& image);

  /// The convolutional branch alone, without the residual.
  torch::Tensor residual(const torch::Tensor& heatmap, const torch::Tensor& image);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(PromptAdapter);

}  // namespace glandseg
