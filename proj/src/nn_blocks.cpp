#include "glandseg/nn_blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace glandseg::nn {

namespace F = torch::nn::functional;

AttentionImpl::AttentionImpl(int64_t dim, int64_t heads_) : heads(heads_) {
  if (dim % heads != 0) throw std::invalid_argument("attention: dim must be divisible by heads");
  q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
  k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
  v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
  out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) {
  auto split = [this](const torch::Tensor& x) {
    const auto b = x.size(0), n = x.size(1), d = x.size(2);
    return x.view({b, n, heads, d / heads}).transpose(1, 2);  // B, h, N, d_h
  };
  auto qh = split(q_proj(q)), kh = split(k_proj(k)), vh = split(v_proj(v));
  const double scale = 1.0 / std::sqrt(static_cast<double>(qh.size(-1)));
  auto attn = torch::softmax(torch::matmul(qh, kh.transpose(-2, -1)) * scale, -1);
  auto out = torch::matmul(attn, vh).transpose(1, 2).contiguous();
  return out_proj(out.view({out.size(0), out.size(1), -1}));
}

MlpImpl::MlpImpl(int64_t in, int64_t hidden, int64_t out, double dropout) {
  fc1 = register_module("fc1", torch::nn::Linear(in, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, out));
  drop = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor MlpImpl::forward(torch::Tensor x) { return drop(fc2(drop(torch::gelu(fc1(x))))); }

EncoderBlockImpl::EncoderBlockImpl(int64_t dim, int64_t heads, double mlp_ratio, double dropout) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  attn = register_module("attn", Attention(dim, heads));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  mlp = register_module("mlp", Mlp(dim, static_cast<int64_t>(dim * mlp_ratio), dim, dropout));
}

torch::Tensor EncoderBlockImpl::forward(const torch::Tensor& x) {
  auto normed = norm1(x);
  auto h = x + attn(normed, normed, normed);
  return h + mlp(norm2(h));
}

LayerNorm2dImpl::LayerNorm2dImpl(int64_t channels, double eps_) : eps(eps_) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
  auto mean = x.mean(1, true);
  auto var = (x - mean).pow(2).mean(1, true);
  auto y = (x - mean) / torch::sqrt(var + eps);
  return y * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

torch::Tensor resize_position_table(const torch::Tensor& table, int64_t new_grid, bool has_cls_token) {
  if (table.dim() != 3 || table.size(0) != 1) throw std::invalid_argument("position table must be [1, N, D]");
  const int64_t offset = has_cls_token ? 1 : 0;
  const int64_t n = table.size(1) - offset;
  const auto old_grid = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (old_grid * old_grid != n) throw std::invalid_argument("position table does not hold a square grid");
  if (old_grid == new_grid) return table.clone();
  const auto d = table.size(2);
  auto grid = table.narrow(1, offset, n).reshape({1, old_grid, old_grid, d}).permute({0, 3, 1, 2});
  auto resized = F::interpolate(grid, F::InterpolateFuncOptions()
                                          .size(std::vector<int64_t>{new_grid, new_grid})
                                          .mode(torch::kBicubic)
                                          .align_corners(false));
  auto flat = resized.permute({0, 2, 3, 1}).reshape({1, new_grid * new_grid, d});
  return has_cls_token ? torch::cat({table.narrow(1, 0, 1), flat}, 1) : flat;
}

torch::Tensor tokens_to_grid(const torch::Tensor& tokens, int64_t grid) {
  // [B, G*G, D] -> [B, D, G, G], row-major token order.
  return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), grid, grid});
}

torch::Tensor grid_to_tokens(const torch::Tensor& grid) { return grid.flatten(2).transpose(1, 2); }

}  // namespace glandseg::nn
