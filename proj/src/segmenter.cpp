#include "glandseg/segmenter.hpp"

#include <cmath>
#include <stdexcept>

namespace glandseg {

namespace F = torch::nn::functional;

void SegmenterConfig::validate() const {
  if (image_size <= 0 || encoder_patch <= 0 || image_size % encoder_patch != 0)
    throw std::invalid_argument("segmenter: image_size must be a positive multiple of encoder_patch");
  if (encoder_patch % 4 != 0) throw std::invalid_argument("segmenter: encoder_patch must be a multiple of 4");
  if (encoder_dim <= 0 || encoder_heads <= 0 || encoder_dim % encoder_heads != 0)
    throw std::invalid_argument("segmenter: encoder_dim must be a positive multiple of encoder_heads");
  if (encoder_depth < 1 || decoder_depth < 1) throw std::invalid_argument("segmenter: depths must be at least 1");
  if (embed_dim <= 0 || embed_dim % 8 != 0 || embed_dim % decoder_heads != 0)
    throw std::invalid_argument("segmenter: embed_dim must be a multiple of 8 and of decoder_heads");
  if (mask_in_chans < 4 || mask_in_chans % 4 != 0) throw std::invalid_argument("segmenter: mask_in_chans must be a multiple of 4");
  if (num_output_tokens < 1) throw std::invalid_argument("segmenter: num_output_tokens must be at least 1");
  adapter.validate();
}

void to_json(nlohmann::json& j, const SegmenterConfig& c) {
  j = {{"image_size", c.image_size},
       {"encoder_patch", c.encoder_patch},
       {"encoder_dim", c.encoder_dim},
       {"encoder_depth", c.encoder_depth},
       {"encoder_heads", c.encoder_heads},
       {"encoder_mlp_ratio", c.encoder_mlp_ratio},
       {"embed_dim", c.embed_dim},
       {"decoder_depth", c.decoder_depth},
       {"decoder_heads", c.decoder_heads},
       {"decoder_mlp_dim", c.decoder_mlp_dim},
       {"mask_in_chans", c.mask_in_chans},
       {"num_output_tokens", c.num_output_tokens},
       {"adapter", c.adapter}};
}

void from_json(const nlohmann::json& j, SegmenterConfig& c) {
  c.image_size = j.value("image_size", c.image_size);
  c.encoder_patch = j.value("encoder_patch", c.encoder_patch);
  c.encoder_dim = j.value("encoder_dim", c.encoder_dim);
  c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
  c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
  c.encoder_mlp_ratio = j.value("encoder_mlp_ratio", c.encoder_mlp_ratio);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
  c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
  c.decoder_mlp_dim = j.value("decoder_mlp_dim", c.decoder_mlp_dim);
  c.mask_in_chans = j.value("mask_in_chans", c.mask_in_chans);
  c.num_output_tokens = j.value("num_output_tokens", c.num_output_tokens);
  if (j.contains("adapter")) c.adapter = j.at("adapter").get<AdapterConfig>();
}

namespace {

void check_square(const torch::Tensor& x, std::int64_t channels, int size, const char* what) {
  if (x.dim() != 4 || x.size(1) != channels || x.size(2) != size || x.size(3) != size)
    throw std::invalid_argument(std::string(what) + ": expected [B, " + std::to_string(channels) + ", " +
                                std::to_string(size) + ", " + std::to_string(size) + "]");
}

}  // namespace

ImageEncoderImpl::ImageEncoderImpl(const SegmenterConfig& c) : image_size_(c.image_size), grid_(c.grid()) {
  const int d = c.encoder_dim;
  patch_embed = register_module(
      "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, c.encoder_patch).stride(c.encoder_patch)));
  pos_embed = register_parameter("pos_embed", torch::randn({1, grid_ * grid_, d}) * 0.02);
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < c.encoder_depth; ++i) blocks->push_back(nn::EncoderBlock(d, c.encoder_heads, c.encoder_mlp_ratio, 0.0));
  neck_conv1 = register_module("neck_conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(d, c.embed_dim, 1).bias(false)));
  neck_norm1 = register_module("neck_norm1", nn::LayerNorm2d(c.embed_dim));
  neck_conv2 = register_module(
      "neck_conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(c.embed_dim, c.embed_dim, 3).padding(1).bias(false)));
  neck_norm2 = register_module("neck_norm2", nn::LayerNorm2d(c.embed_dim));
}

torch::Tensor ImageEncoderImpl::forward(const torch::Tensor& images) {
  check_square(images, 3, image_size_, "image encoder");
  auto x = nn::grid_to_tokens(patch_embed(images)) + pos_embed;
  for (const auto& block : *blocks) x = block->as<nn::EncoderBlock>()->forward(x);
  auto grid = nn::tokens_to_grid(x, grid_);
  return neck_norm2(neck_conv2(neck_norm1(neck_conv1(grid))));
}

PromptEncoderImpl::PromptEncoderImpl(const SegmenterConfig& c) : image_size_(c.image_size), grid_(c.grid()) {
  const int mid = c.mask_in_chans / 4, s2 = c.encoder_patch / 4;
  conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(1, mid, 4).stride(4)));
  norm1 = register_module("norm1", nn::LayerNorm2d(mid));
  conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(mid, c.mask_in_chans, s2).stride(s2)));
  norm2 = register_module("norm2", nn::LayerNorm2d(c.mask_in_chans));
  conv3 = register_module("conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(c.mask_in_chans, c.embed_dim, 1)));
  no_mask_embed = register_parameter("no_mask_embed", torch::randn({1, c.embed_dim, 1, 1}));
}

torch::Tensor PromptEncoderImpl::forward(const torch::Tensor& prompt) {
  check_square(prompt, 1, image_size_, "prompt encoder");
  auto x = torch::gelu(norm1(conv1(prompt)));
  x = torch::gelu(norm2(conv2(x)));
  return conv3(x);
}

torch::Tensor PromptEncoderImpl::no_prompt(std::int64_t batch) {
  return no_mask_embed.expand({batch, -1, grid_, grid_});
}

RandomPositionEncodingImpl::RandomPositionEncodingImpl(int channels, int grid) : grid_(grid) {
  gaussian = register_buffer("gaussian", torch::randn({2, channels / 2}));
}

torch::Tensor RandomPositionEncodingImpl::forward() {
  auto centers = (torch::arange(grid_, torch::kFloat32) + 0.5) / grid_;
  auto ys = centers.view({grid_, 1}).expand({grid_, grid_});
  auto xs = centers.view({1, grid_}).expand({grid_, grid_});
  auto coords = torch::stack({xs, ys}, -1) * 2.0 - 1.0;  // [G, G, 2]
  auto proj = torch::matmul(coords, gaussian) * (2.0 * M_PI);
  return torch::cat({torch::sin(proj), torch::cos(proj)}, -1).permute({2, 0, 1}).unsqueeze(0);
}

TwoWayBlockImpl::TwoWayBlockImpl(int dim, int heads, int mlp_dim, bool skip_first_pe) : skip_first_pe_(skip_first_pe) {
  auto ln = [dim] { return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})); };
  self_attn = register_module("self_attn", nn::Attention(dim, heads));
  norm1 = register_module("norm1", ln());
  token_to_image = register_module("token_to_image", nn::Attention(dim, heads));
  norm2 = register_module("norm2", ln());
  mlp = register_module("mlp", nn::Mlp(dim, mlp_dim, dim));
  norm3 = register_module("norm3", ln());
  image_to_token = register_module("image_to_token", nn::Attention(dim, heads));
  norm4 = register_module("norm4", ln());
}

std::pair<torch::Tensor, torch::Tensor> TwoWayBlockImpl::forward(torch::Tensor queries, torch::Tensor keys,
                                                                 const torch::Tensor& query_pe,
                                                                 const torch::Tensor& key_pe) {
  if (skip_first_pe_) {
    queries = self_attn(queries, queries, queries);
  } else {
    auto q = queries + query_pe;
    queries = queries + self_attn(q, q, queries);
  }
  queries = norm1(queries);

  queries = norm2(queries + token_to_image(queries + query_pe, keys + key_pe, keys));
  queries = norm3(queries + mlp(queries));
  keys = norm4(keys + image_to_token(keys + key_pe, queries + query_pe, queries));
  return {queries, keys};
}

MaskDecoderImpl::MaskDecoderImpl(const SegmenterConfig& c) : image_size_(c.image_size), grid_(c.grid()) {
  const int d = c.embed_dim;
  output_tokens = register_parameter("output_tokens", torch::randn({c.num_output_tokens, d}));
  layers = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < c.decoder_depth; ++i) layers->push_back(TwoWayBlock(d, c.decoder_heads, c.decoder_mlp_dim, i == 0));
  final_attn = register_module("final_attn", nn::Attention(d, c.decoder_heads));
  final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  up1 = register_module("up1", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(d, d / 4, 2).stride(2)));
  up_norm = register_module("up_norm", nn::LayerNorm2d(d / 4));
  up2 = register_module("up2", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(d / 4, d / 8, 2).stride(2)));
  hyper1 = register_module("hyper1", torch::nn::Linear(d, d));
  hyper2 = register_module("hyper2", torch::nn::Linear(d, d));
  hyper3 = register_module("hyper3", torch::nn::Linear(d, d / 8));
}

torch::Tensor MaskDecoderImpl::forward(const torch::Tensor& embedding, const torch::Tensor& pe) {
  const auto b = embedding.size(0);
  auto tokens = output_tokens.unsqueeze(0).expand({b, -1, -1});
  auto keys = nn::grid_to_tokens(embedding);
  auto key_pe = nn::grid_to_tokens(pe.expand({b, -1, -1, -1}));
  auto queries = tokens;
  for (const auto& layer : *layers) std::tie(queries, keys) = layer->as<TwoWayBlock>()->forward(queries, keys, tokens, key_pe);
  queries = final_norm(queries + final_attn(queries + tokens, keys + key_pe, keys));

  auto grid = nn::tokens_to_grid(keys, grid_);
  auto up = torch::gelu(up2(torch::gelu(up_norm(up1(grid)))));  // [B, C/8, 4G, 4G]
  auto h = hyper3(torch::relu(hyper2(torch::relu(hyper1(queries.select(1, 0))))));  // [B, C/8]
  const auto side = up.size(2);
  auto low = torch::bmm(h.unsqueeze(1), up.flatten(2)).view({b, 1, side, side});
  return F::interpolate(low, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{image_size_, image_size_})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::ImageEncoder: return "image_encoder";
    case ParamGroup::GlandPromptEncoder: return "gland_prompt_encoder";
    case ParamGroup::Adapter: return "adapter";
    case ParamGroup::GlandDecoder: return "gland_decoder";
    case ParamGroup::ContourPromptEncoder: return "contour_prompt_encoder";
    case ParamGroup::ContourDecoder: return "contour_decoder";
  }
  return "?";
}

std::string group_prefix(ParamGroup g) { return std::string(to_string(g)) + "."; }

PromptedSegmenterImpl::PromptedSegmenterImpl(const SegmenterConfig& config) : config_(config) {
  config_.validate();
  image_encoder = register_module("image_encoder", ImageEncoder(config_));
  adapter = register_module("adapter", PromptAdapter(config_.adapter));
  gland_prompt_encoder = register_module("gland_prompt_encoder", PromptEncoder(config_));
  contour_prompt_encoder = register_module("contour_prompt_encoder", PromptEncoder(config_));
  gland_decoder = register_module("gland_decoder", MaskDecoder(config_));
  contour_decoder = register_module("contour_decoder", MaskDecoder(config_));
  pe_layer = register_module("pe_layer", RandomPositionEncoding(config_.embed_dim, config_.grid()));
}

torch::Tensor PromptedSegmenterImpl::encode_image(const torch::Tensor& images) {
  ++encoder_calls_;
  return image_encoder(images);
}

torch::Tensor PromptedSegmenterImpl::adapt_prompt(const torch::Tensor& heatmaps, const torch::Tensor& images) {
  return adapter(heatmaps, images);
}

torch::Tensor PromptedSegmenterImpl::decode_gland(const torch::Tensor& embedding, const torch::Tensor& prompt) {
  return gland_decoder(embedding + gland_prompt_encoder(prompt), pe_layer());
}

torch::Tensor PromptedSegmenterImpl::decode_contour(const torch::Tensor& embedding) {
  return contour_decoder(embedding + contour_prompt_encoder->no_prompt(embedding.size(0)), pe_layer());
}

SegmenterOutput PromptedSegmenterImpl::forward(const torch::Tensor& images, const torch::Tensor& heatmaps) {
  return forward_with_prompt(images, adapt_prompt(heatmaps, images));
}

SegmenterOutput PromptedSegmenterImpl::forward_with_prompt(const torch::Tensor& images, const torch::Tensor& prompt) {
  const auto embedding = encode_image(images);
  return {decode_gland(embedding, prompt), decode_contour(embedding)};
}

torch::nn::Module& PromptedSegmenterImpl::group(ParamGroup g) {
  switch (g) {
    case ParamGroup::ImageEncoder: return *image_encoder;
    case ParamGroup::GlandPromptEncoder: return *gland_prompt_encoder;
    case ParamGroup::Adapter: return *adapter;
    case ParamGroup::GlandDecoder: return *gland_decoder;
    case ParamGroup::ContourPromptEncoder: return *contour_prompt_encoder;
    case ParamGroup::ContourDecoder: return *contour_decoder;
  }
  throw std::invalid_argument("unknown parameter group");
}

}  // namespace glandseg
