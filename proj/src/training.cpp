#include "glandseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>

#include "glandseg/classifier.hpp"

namespace glandseg {

torch::Tensor weighted_mse(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weight) {
  if (pred.sizes() != target.sizes() || pred.sizes() != weight.sizes())
    throw std::invalid_argument("weighted_mse: pred, target and weight must have the same shape");
  if (pred.dim() < 1) throw std::invalid_argument("weighted_mse: expected a leading batch dimension");
  if ((weight < 0).any().item<bool>()) throw std::invalid_argument("weighted_mse: negative weight");
  auto per_pixel = weight * (pred - target.to(pred.dtype())).pow(2);
  return per_pixel.flatten(1).sum(1).mean();
}

const char* to_string(Stage s) { return s == Stage::Gland ? "gland_stage" : "contour_stage"; }

Stage stage_from_string(const std::string& s) {
  if (s == "gland" || s == "gland_stage") return Stage::Gland;
  if (s == "contour" || s == "contour_stage") return Stage::Contour;
  throw std::invalid_argument("unknown stage '" + s + "' (expected gland or contour)");
}

std::set<ParamGroup> stage_groups(Stage s) {
  if (s == Stage::Gland)
    return {ParamGroup::ImageEncoder, ParamGroup::GlandPromptEncoder, ParamGroup::Adapter, ParamGroup::GlandDecoder};
  return {ParamGroup::ContourPromptEncoder, ParamGroup::ContourDecoder};
}

StageConfig StageConfig::for_stage(Stage s) {
  StageConfig c;
  c.stage = s;
  c.trainable_groups = stage_groups(s);
  return c;
}

void StageConfig::validate() const {
  if (trainable_groups != stage_groups(stage))
    throw std::invalid_argument(std::string("stage config: ") + to_string(stage) + " must train exactly its own groups");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("stage config: epochs and batch_size must be positive");
  if (lr <= 0.0 || min_lr < 0.0 || min_lr > lr) throw std::invalid_argument("stage config: need 0 <= min_lr <= lr, lr > 0");
}

void to_json(nlohmann::json& j, const StageConfig& c) {
  j = {{"stage", to_string(c.stage)}, {"epochs", c.epochs}, {"lr", c.lr},     {"min_lr", c.min_lr},
       {"batch_size", c.batch_size},  {"seed", c.seed},     {"plain_mse", c.plain_mse}};
}

void from_json(const nlohmann::json& j, StageConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.plain_mse = j.value("plain_mse", c.plain_mse);
}

SegBatch make_seg_batch(const std::vector<SegSample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<torch::Tensor> im, gl, co, we, he;
  auto turn = [](const torch::Tensor& t, int k) { return k ? torch::rot90(t, -k, {1, 2}) : t; };
  for (const auto i : idx) {
    const auto& s = samples.at(i);
    im.push_back(turn(s.image, s.rotation));
    gl.push_back(turn(s.gland, s.rotation));
    co.push_back(turn(s.contour, s.rotation));
    we.push_back(turn(s.weight, s.rotation));
    he.push_back(s.heatmap);
  }
  SegBatch b;
  b.images = normalize_images(torch::stack(im));
  b.gland = torch::stack(gl).to(torch::kFloat32);
  b.contour = torch::stack(co).to(torch::kFloat32);
  b.weight = torch::stack(we).to(torch::kFloat32);
  b.heatmap = torch::stack(he).to(torch::kFloat32);
  return b;
}

torch::Tensor stage_loss(PromptedSegmenter& model, const SegBatch& batch, const StageConfig& cfg) {
  const auto weight = cfg.plain_mse ? torch::ones_like(batch.weight) : batch.weight;
  if (cfg.stage == Stage::Gland) {
    const auto embedding = model->encode_image(batch.images);
    const auto prompt = model->adapt_prompt(batch.heatmap, batch.images);
    return weighted_mse(torch::sigmoid(model->decode_gland(embedding, prompt)), batch.gland, weight);
  }
  torch::Tensor embedding;
  {
    torch::NoGradGuard guard;
    embedding = model->encode_image(batch.images);
  }
  return weighted_mse(torch::sigmoid(model->decode_contour(embedding)), batch.contour, weight);
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write loss curve " + path.string());
  os << "epoch,step,loss\n" << std::setprecision(10);
  for (const auto& p : curve) os << p.epoch << ',' << p.step << ',' << p.loss << '\n';
}

std::vector<LossPoint> run_stage(PromptedSegmenter& model, const std::vector<SegSample>& samples, const StageConfig& cfg,
                                 const std::function<void(const LossPoint&)>& on_step) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("run_stage: no training samples");
  torch::manual_seed(cfg.seed);

  model->train();
  std::vector<torch::Tensor> params;
  for (const auto g : {ParamGroup::ImageEncoder, ParamGroup::GlandPromptEncoder, ParamGroup::Adapter,
                       ParamGroup::GlandDecoder, ParamGroup::ContourPromptEncoder, ParamGroup::ContourDecoder}) {
    const bool trainable = cfg.trainable_groups.count(g) > 0;
    auto& m = model->group(g);
    m.train(trainable);
    for (auto& p : m.parameters()) {
      p.set_requires_grad(trainable);
      if (trainable) params.push_back(p);
    }
  }

  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.lr));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const auto steps_per_epoch = (order.size() + bs - 1) / bs;
  const double total = static_cast<double>(steps_per_epoch * static_cast<std::size_t>(cfg.epochs));

  std::vector<LossPoint> curve;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      const double lr = cfg.min_lr + (cfg.lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total));
      for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

      opt.zero_grad();
      auto loss = stage_loss(model, make_seg_batch(samples, chunk), cfg);
      loss.backward();
      opt.step();
      LossPoint p{epoch, step++, loss.item<double>()};
      curve.push_back(p);
      if (on_step) on_step(p);
    }
  }
  for (auto& p : model->parameters()) p.set_requires_grad(true);
  model->eval();
  return curve;
}

void save_segmenter(const std::filesystem::path& dir, PromptedSegmenter& model, const std::string& stage_tag) {
  weights::save(dir, *model, {{"model", "prompted_segmenter"}, {"stage", stage_tag}, {"config", model->config()}});
}

std::string checkpoint_stage(const std::filesystem::path& dir) {
  return weights::load_metadata(dir).value("stage", std::string());
}

SegmenterConfig checkpoint_config(const std::filesystem::path& dir) {
  const auto meta = weights::load_metadata(dir);
  if (!meta.contains("config")) throw std::runtime_error("checkpoint " + dir.string() + " has no model config");
  return meta.at("config").get<SegmenterConfig>();
}

StageRun train_stage(PromptedSegmenter& model, const std::vector<SegSample>& samples, const StageConfig& cfg,
                     const std::optional<std::filesystem::path>& input, const std::filesystem::path& out_dir,
                     const std::function<void(const LossPoint&)>& on_step) {
  cfg.validate();
  if (cfg.stage == Stage::Contour) {
    if (!input || !weights::exists(*input))
      throw std::runtime_error("contour stage requires a gland stage checkpoint (run train-seg --stage gland first)");
    if (checkpoint_stage(*input) != to_string(Stage::Gland))
      throw std::runtime_error("checkpoint " + input->string() + " was not produced by the gland stage");
  }
  if (input) weights::apply(*model, weights::load(*input).tensors, weights::Mode::Strict);

  StageRun run;
  run.curve = run_stage(model, samples, cfg, on_step);
  std::filesystem::create_directories(out_dir);
  run.checkpoint = out_dir / "checkpoint";
  save_segmenter(run.checkpoint, model, to_string(cfg.stage));
  write_loss_curve(out_dir / "loss_curve.csv", run.curve);
  return run;
}

std::vector<weights::PrefixRule> contour_duplication_rules() {
  return {{group_prefix(ParamGroup::GlandPromptEncoder), group_prefix(ParamGroup::ContourPromptEncoder)},
          {group_prefix(ParamGroup::GlandDecoder), group_prefix(ParamGroup::ContourDecoder)}};
}

weights::LoadReport load_pretrained(PromptedSegmenter& model, const weights::NamedTensors& source, weights::Mode mode,
                                    bool duplicate_gland_into_contour) {
  return weights::apply(*model, source, mode,
                        duplicate_gland_into_contour ? contour_duplication_rules() : std::vector<weights::PrefixRule>{});
}

}  // namespace glandseg
