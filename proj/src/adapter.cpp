#include "glandseg/adapter.hpp"

#include <stdexcept>

namespace glandseg {

void AdapterConfig::validate() const {
  if (mid_channels < 1) throw std::invalid_argument("adapter: mid_channels must be at least 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("adapter: kernel_size must be odd");
}

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = {{"mid_channels", c.mid_channels}, {"kernel_size", c.kernel_size}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c.mid_channels = j.value("mid_channels", c.mid_channels);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
}

PromptAdapterImpl::PromptAdapterImpl(const AdapterConfig& config) {
  config.validate();
  const int k = config.kernel_size, pad = k / 2, mid = config.mid_channels;
  conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(4, mid, k).padding(pad)));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(mid));
  conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(mid, 1, k).padding(pad)));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(1));
}

torch::Tensor PromptAdapterImpl::residual(const torch::Tensor& heatmap, const torch::Tensor& image) {
  if (heatmap.dim() != 4 || image.dim() != 4 || heatmap.size(1) != 1 || image.size(1) != 3 ||
      heatmap.size(0) != image.size(0) || heatmap.size(2) != image.size(2) || heatmap.size(3) != image.size(3))
    throw std::invalid_argument("adapter: expected heatmap [B, 1, H, W] and image [B, 3, H, W]");
  auto x = torch::relu(bn1(conv1(torch::cat({heatmap, image}, 1))));
  return torch::relu(bn2(conv2(x)));
}

torch::Tensor PromptAdapterImpl::forward(const torch::Tensor& heatmap, const torch::Tensor& image) {
  return heatmap + residual(heatmap, image);
}

}  // namespace glandseg
