#include "glandseg/cam.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "glandseg/image_io.hpp"
#include "glandseg/tensor_convert.hpp"

namespace glandseg {

namespace F = torch::nn::functional;

torch::Tensor gradcam_pp_map(const torch::Tensor& activations, const torch::Tensor& gradients) {
  if (activations.sizes() != gradients.sizes() || (activations.dim() != 3 && activations.dim() != 4))
    throw std::invalid_argument("gradcam_pp_map: expected matching [C, G, G] or [B, C, G, G] tensors");
  const bool batched = activations.dim() == 4;
  auto a = batched ? activations : activations.unsqueeze(0);
  auto g = batched ? gradients : gradients.unsqueeze(0);

  auto g2 = g.pow(2);
  auto g3 = g.pow(3);
  auto a_sum = a.sum({2, 3}, true);
  auto denom = 2.0 * g2 + a_sum * g3;
  auto safe = torch::where(denom != 0, denom, torch::ones_like(denom));
  auto alpha = torch::where(denom != 0, g2 / safe, torch::zeros_like(denom));
  auto w = (alpha * torch::relu(g)).sum({2, 3}, true);
  auto cam = torch::relu((w * a).sum(1));  // [B, G, G]
  return batched ? cam : cam.squeeze(0);
}

FloatRaster finalize_cam(const torch::Tensor& map, int out_size) {
  if (map.dim() != 2) throw std::invalid_argument("finalize_cam: expected [G, G]");
  auto up = F::interpolate(map.detach().to(torch::kFloat32).view({1, 1, map.size(0), map.size(1)}),
                           F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{out_size, out_size})
                               .mode(torch::kBilinear)
                               .align_corners(false))
                .view({out_size, out_size});
  const auto lo = up.min().item<float>();
  const auto hi = up.max().item<float>();
  if (!(hi > lo)) return FloatRaster(out_size, out_size, 0.0f);
  return tensor_to_raster(((up - lo) / (hi - lo)).clamp(0.0, 1.0));
}

std::vector<HeatMap> gradcam_pp(VisionClassifier& model, const torch::Tensor& images, const CamOptions& opts) {
  model->eval();
  torch::AutoGradMode grad_mode(true);
  auto out = model->forward(images);
  const auto b = images.size(0);
  std::vector<std::int64_t> targets(static_cast<std::size_t>(b));
  const auto argmax = out.logits.argmax(1);
  for (std::int64_t i = 0; i < b; ++i)
    targets[static_cast<std::size_t>(i)] =
        opts.target ? static_cast<std::int64_t>(*opts.target) : argmax[i].item<std::int64_t>();

  // Samples do not interact inside the classifier, so one backward pass on the
  // summed scores yields every per-sample gradient.
  const auto target_idx = torch::tensor(targets).view({b, 1});
  auto picked = out.logits.gather(1, target_idx);
  auto score = picked.sum() * opts.score_scale;
  auto grads = torch::autograd::grad({score}, {out.feature_grid}, {}, false, false, true)[0];
  if (!grads.defined()) grads = torch::zeros_like(out.feature_grid);
  auto cams = gradcam_pp_map(out.feature_grid.detach(), grads.detach());

  std::vector<HeatMap> result;
  result.reserve(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    HeatMap h;
    h.values = finalize_cam(cams[i], static_cast<int>(images.size(2)));
    h.target_class = static_cast<Grade>(targets[static_cast<std::size_t>(i)]);
    result.push_back(std::move(h));
  }
  return result;
}

std::string heatmap_key(const std::string& source_id, Offset offset, int rotation) {
  return source_id + "_r" + std::to_string(offset.row) + "_c" + std::to_string(offset.col) + "_rot" +
         std::to_string(rotation);
}

void HeatMapStore::put(const HeatMapEntry& meta, const FloatRaster& values) {
  auto e = meta;
  e.path = heatmap_key(meta.source_id, meta.offset, meta.rotation) + ".tiff";
  std::filesystem::create_directories(dir_);
  io::write_float(dir_ / e.path, values);
  entries_.push_back(std::move(e));
}

void HeatMapStore::write_manifest() const {
  auto sorted = entries_;
  std::sort(sorted.begin(), sorted.end(), [](const HeatMapEntry& a, const HeatMapEntry& b) { return a.path < b.path; });
  std::ofstream os(dir_ / "manifest.csv");
  if (!os) throw std::runtime_error("heat maps: cannot write manifest in " + dir_.string());
  os << "source_id,row,col,rotation,target,path\n";
  for (const auto& e : sorted)
    os << e.source_id << ',' << e.offset.row << ',' << e.offset.col << ',' << e.rotation << ','
       << to_string(e.target_class) << ',' << e.path << '\n';
}

void HeatMapStore::read_manifest() {
  std::ifstream in(dir_ / "manifest.csv");
  if (!in) throw std::runtime_error("heat maps: no manifest in " + dir_.string());
  entries_.clear();
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[6];
    for (auto& s : f) std::getline(ss, s, ',');
    HeatMapEntry e;
    e.source_id = f[0];
    e.offset = {std::stoi(f[1]), std::stoi(f[2])};
    e.rotation = std::stoi(f[3]);
    e.target_class = grade_from_string(f[4]);
    e.path = f[5];
    entries_.push_back(std::move(e));
  }
}

FloatRaster HeatMapStore::get(const std::string& source_id, Offset offset, int rotation) const {
  const auto path = dir_ / (heatmap_key(source_id, offset, rotation) + ".tiff");
  if (!std::filesystem::exists(path))
    throw std::runtime_error("heat maps: no entry for " + heatmap_key(source_id, offset, rotation));
  return io::read_float(path);
}

}  // namespace glandseg
