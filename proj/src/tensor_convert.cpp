#include "glandseg/tensor_convert.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

namespace glandseg {

torch::Tensor normalize_images(const torch::Tensor& u8, const Normalization& norm) {
  if (u8.dim() < 3 || u8.size(-3) != 3) throw std::invalid_argument("normalize_images: expected [.., 3, H, W]");
  auto x = u8.to(torch::kFloat32).div(255.0f);
  std::vector<std::int64_t> shape(static_cast<std::size_t>(x.dim()), 1);
  shape[shape.size() - 3] = 3;
  auto mean = torch::tensor({norm.mean[0], norm.mean[1], norm.mean[2]}).view(shape);
  auto std = torch::tensor({norm.std[0], norm.std[1], norm.std[2]}).view(shape);
  return ((x - mean) / std).contiguous();
}

torch::Tensor image_to_u8_tensor(const RgbImage& image) {
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(image.data()), {image.rows(), image.cols(), 3}, torch::kUInt8);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor image_to_tensor(const RgbImage& image, const Normalization& norm) {
  return normalize_images(image_to_u8_tensor(image), norm);
}

torch::Tensor raster_to_tensor(const FloatRaster& raster) {
  return torch::from_blob(const_cast<float*>(raster.data()), {1, raster.rows(), raster.cols()}, torch::kFloat32).clone();
}

torch::Tensor raster_to_tensor(const BinaryMask& mask) {
  return torch::from_blob(const_cast<std::uint8_t*>(mask.data()), {1, mask.rows(), mask.cols()}, torch::kUInt8).clone();
}

FloatRaster tensor_to_raster(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (x.dim() == 3 && x.size(0) == 1) x = x.squeeze(0);
  if (x.dim() != 2) throw std::invalid_argument("tensor_to_raster: expected [H, W] or [1, H, W]");
  FloatRaster out(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)));
  std::memcpy(out.data(), x.data_ptr<float>(), out.size() * sizeof(float));
  return out;
}

}  // namespace glandseg
