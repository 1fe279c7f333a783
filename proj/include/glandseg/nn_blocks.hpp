#pragma once

#include <torch/torch.h>

namespace glandseg::nn {

/// Multi-head attention with separate query/key/value inputs.
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int64_t dim, int64_t heads);
  torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

  int64_t heads;
  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
};
TORCH_MODULE(Attention);

struct MlpImpl : torch::nn::Module {
  MlpImpl(int64_t in, int64_t hidden, int64_t out, double dropout = 0.0);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(Mlp);

/// Pre-norm transformer encoder block.
struct EncoderBlockImpl : torch::nn::Module {
  EncoderBlockImpl(int64_t dim, int64_t heads, double mlp_ratio, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  Attention attn{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(EncoderBlock);

/// Channel-wise layer norm for NCHW tensors.
struct LayerNorm2dImpl : torch::nn::Module {
  explicit LayerNorm2dImpl(int64_t channels, double eps = 1e-6);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;
  double eps;
};
TORCH_MODULE(LayerNorm2d);

/// Resamples a learned absolute position table of shape [1, (cls) + g*g, D]
/// to a new grid side. A leading class-token row is kept unchanged.
torch::Tensor resize_position_table(const torch::Tensor& table, int64_t new_grid, bool has_cls_token);

/// [B, G*G, D] tokens <-> [B, D, G, G] grid, row-major token order.
torch::Tensor tokens_to_grid(const torch::Tensor& tokens, int64_t grid);
torch::Tensor grid_to_tokens(const torch::Tensor& grid);

}  // namespace glandseg::nn
