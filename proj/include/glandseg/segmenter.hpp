#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <json.hpp>
#include <string>

#include "glandseg/adapter.hpp"
#include "glandseg/nn_blocks.hpp"

namespace glandseg {

struct SegmenterConfig {
  int image_size = 400;
  int encoder_patch = 16;
  int encoder_dim = 192;
  int encoder_depth = 6;
  int encoder_heads = 3;
  double encoder_mlp_ratio = 4.0;
  int embed_dim = 128;  // neck output and decoder width
  int decoder_depth = 2;
  int decoder_heads = 4;
  int decoder_mlp_dim = 512;
  int mask_in_chans = 16;
  int num_output_tokens = 1;
  AdapterConfig adapter;

  int grid() const { return image_size / encoder_patch; }
  void validate() const;
};

void to_json(nlohmann::json& j, const SegmenterConfig& c);
void from_json(const nlohmann::json& j, SegmenterConfig& c);

/// Patch-embedding transformer followed by a convolutional neck.
class ImageEncoderImpl : public torch::nn::Module {
 public:
  explicit ImageEncoderImpl(const SegmenterConfig& config);
  /// [B, 3, S, S] -> [B, C, G, G]
  torch::Tensor forward(const torch::Tensor& images);

  torch::nn::Conv2d patch_embed{nullptr};
  torch::Tensor pos_embed;
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::Conv2d neck_conv1{nullptr}, neck_conv2{nullptr};
  nn::LayerNorm2d neck_norm1{nullptr}, neck_norm2{nullptr};

 private:
  int image_size_, grid_;
};
TORCH_MODULE(ImageEncoder);

/// Dense prompt pathway: a strided convolution stack maps a full-resolution
/// one-channel prompt onto the embedding grid; with no prompt a learned
/// constant embedding is broadcast instead.
class PromptEncoderImpl : public torch::nn::Module {
 public:
  explicit PromptEncoderImpl(const SegmenterConfig& config);
  /// [B, 1, S, S] -> [B, C, G, G]
  torch::Tensor forward(const torch::Tensor& prompt);
  /// [batch, C, G, G], identical for every call.
  torch::Tensor no_prompt(std::int64_t batch);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  nn::LayerNorm2d norm1{nullptr}, norm2{nullptr};
  torch::Tensor no_mask_embed;

 private:
  int image_size_, grid_;
};
TORCH_MODULE(PromptEncoder);

/// Positional encoding of grid coordinates through a fixed random Gaussian
/// projection followed by sin/cos.
class RandomPositionEncodingImpl : public torch::nn::Module {
 public:
  RandomPositionEncodingImpl(int channels, int grid);
  torch::Tensor forward();  // [1, C, G, G]

  torch::Tensor gaussian;  // buffer [2, C/2]

 private:
  int grid_;
};
TORCH_MODULE(RandomPositionEncoding);

class TwoWayBlockImpl : public torch::nn::Module {
 public:
  TwoWayBlockImpl(int dim, int heads, int mlp_dim, bool skip_first_pe);
  /// queries [B, T, C], keys [B, N, C]; returns updated (queries, keys).
  std::pair<torch::Tensor, torch::Tensor> forward(torch::Tensor queries, torch::Tensor keys, const torch::Tensor& query_pe,
                                                  const torch::Tensor& key_pe);

  nn::Attention self_attn{nullptr}, token_to_image{nullptr}, image_to_token{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr}, norm4{nullptr};
  nn::Mlp mlp{nullptr};

 private:
  bool skip_first_pe_;
};
TORCH_MODULE(TwoWayBlock);

/// Learned output tokens and the grid attend to each other; the first token
/// then drives a hypernetwork over the upsampled grid features.
class MaskDecoderImpl : public torch::nn::Module {
 public:
  explicit MaskDecoderImpl(const SegmenterConfig& config);
  /// embedding [B, C, G, G] (image plus dense prompt), pe [1, C, G, G]
  /// -> logits [B, 1, S, S]
  torch::Tensor forward(const torch::Tensor& embedding, const torch::Tensor& pe);

  torch::Tensor output_tokens;
  torch::nn::ModuleList layers{nullptr};
  nn::Attention final_attn{nullptr};
  torch::nn::LayerNorm final_norm{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};
  nn::LayerNorm2d up_norm{nullptr};
  torch::nn::Linear hyper1{nullptr}, hyper2{nullptr}, hyper3{nullptr};

 private:
  int image_size_, grid_;
};
TORCH_MODULE(MaskDecoder);

enum class ParamGroup {
  ImageEncoder,
  GlandPromptEncoder,
  Adapter,
  GlandDecoder,
  ContourPromptEncoder,
  ContourDecoder,
};

const char* to_string(ParamGroup g);
/// Module name prefix of a group inside PromptedSegmenter ("image_encoder.").
std::string group_prefix(ParamGroup g);

struct SegmenterOutput {
  torch::Tensor gland_logits;    // [B, 1, S, S]
  torch::Tensor contour_logits;  // [B, 1, S, S]
  torch::Tensor gland_prob() const { return torch::sigmoid(gland_logits); }
  torch::Tensor contour_prob() const { return torch::sigmoid(contour_logits); }
};

class PromptedSegmenterImpl : public torch::nn::Module {
 public:
  explicit PromptedSegmenterImpl(const SegmenterConfig& config);

  torch::Tensor encode_image(const torch::Tensor& images);
  torch::Tensor adapt_prompt(const torch::Tensor& heatmaps, const torch::Tensor& images);

  torch::Tensor decode_gland(const torch::Tensor& embedding, const torch::Tensor& prompt);
  torch::Tensor decode_contour(const torch::Tensor& embedding);

  /// images [B, 3, S, S] normalised, heatmaps [B, 1, S, S]. The heat map is
  /// passed through the adapter and prompts the gland branch only.
  SegmenterOutput forward(const torch::Tensor& images, const torch::Tensor& heatmaps);
  /// As forward, with `prompt` fed to the gland prompt encoder directly.
  SegmenterOutput forward_with_prompt(const torch::Tensor& images, const torch::Tensor& prompt);

  torch::nn::Module& group(ParamGroup g);

  std::int64_t encoder_calls() const { return encoder_calls_; }
  const SegmenterConfig& config() const { return config_; }

  ImageEncoder image_encoder{nullptr};
  PromptAdapter adapter{nullptr};
  PromptEncoder gland_prompt_encoder{nullptr}, contour_prompt_encoder{nullptr};
  MaskDecoder gland_decoder{nullptr}, contour_decoder{nullptr};
  RandomPositionEncoding pe_layer{nullptr};

 private:
  SegmenterConfig config_;
  std::int64_t encoder_calls_ = 0;
};
TORCH_MODULE(PromptedSegmenter);

}  // namespace glandseg
