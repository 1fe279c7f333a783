#pragma once

#include <torch/torch.h>

#include <array>

#include "glandseg/raster.hpp"

namespace glandseg {

struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

/// uint8 [3, H, W] or [B, 3, H, W] -> float scaled to [0, 1] then normalised
/// per channel.
torch::Tensor normalize_images(const torch::Tensor& u8, const Normalization& norm = {});

/// uint8 [3, H, W], channel-first copy of the interleaved pixels.
torch::Tensor image_to_u8_tensor(const RgbImage& image);

/// Normalised float [3, H, W].
torch::Tensor image_to_tensor(const RgbImage& image, const Normalization& norm = {});

/// [1, H, W]; float for real rasters, uint8 for masks.
torch::Tensor raster_to_tensor(const FloatRaster& raster);
torch::Tensor raster_to_tensor(const BinaryMask& mask);

/// Accepts [H, W] or [1, H, W].
FloatRaster tensor_to_raster(const torch::Tensor& t);

}  // namespace glandseg
