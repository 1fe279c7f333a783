#include "glandseg/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "glandseg/tensor_convert.hpp"
#include "glandseg/weights.hpp"

namespace glandseg {

void ClassifierConfig::validate() const {
  if (image_size <= 0 || token_patch_size <= 0 || image_size % token_patch_size != 0)
    throw std::invalid_argument("classifier: image_size must be a positive multiple of token_patch_size");
  if (num_classes != 2) throw std::invalid_argument("classifier: num_classes must be 2");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
    throw std::invalid_argument("classifier: embed_dim must be a positive multiple of heads");
  if (depth < 1) throw std::invalid_argument("classifier: depth must be at least 1");
  if (mlp_ratio <= 0.0 || dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("classifier: invalid mlp_ratio or dropout");
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"image_size", c.image_size}, {"token_patch_size", c.token_patch_size},
       {"embed_dim", c.embed_dim},   {"depth", c.depth},
       {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio},
       {"num_classes", c.num_classes}, {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  c.image_size = j.value("image_size", c.image_size);
  c.token_patch_size = j.value("token_patch_size", c.token_patch_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.dropout = j.value("dropout", c.dropout);
}

void to_json(nlohmann::json& j, const ClassifierTrainConfig& c) {
  j = {{"epochs", c.epochs},           {"batch_size", c.batch_size},     {"lr", c.lr},
       {"weight_decay", c.weight_decay}, {"val_fraction", c.val_fraction}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ClassifierTrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.seed = j.value("seed", c.seed);
}

VisionClassifierImpl::VisionClassifierImpl(const ClassifierConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.embed_dim, p = config_.token_patch_size, g = config_.grid();
  patch_embed = register_module("patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, p).stride(p)));
  cls_token = register_parameter("cls_token", torch::zeros({1, 1, d}));
  pos_embed = register_parameter("pos_embed", torch::randn({1, 1 + g * g, d}) * 0.02);
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < config_.depth; ++i)
    blocks->push_back(nn::EncoderBlock(d, config_.heads, config_.mlp_ratio, config_.dropout));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}).eps(1e-6)));
  head = register_module("head", torch::nn::Linear(d, config_.num_classes));
}

ClassifierOutput VisionClassifierImpl::forward(const torch::Tensor& images) {
  const int s = config_.image_size, g = config_.grid();
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != s || images.size(3) != s)
    throw std::invalid_argument("classifier: expected [B, 3, " + std::to_string(s) + ", " + std::to_string(s) + "]");
  const auto b = images.size(0);
  auto x = nn::grid_to_tokens(patch_embed(images));
  x = torch::cat({cls_token.expand({b, -1, -1}), x}, 1) + pos_embed;

  for (const auto& block : *blocks) x = block->as<nn::EncoderBlock>()->forward(x);
  auto grid = nn::tokens_to_grid(norm(x.narrow(1, 1, g * g)), g);
  auto logits = head(nn::grid_to_tokens(grid).mean(1));
  return {logits, grid};
}

torch::Tensor make_image_batch(const std::vector<ClassifierSample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<torch::Tensor> items;
  items.reserve(idx.size());
  for (const auto i : idx) {
    const auto& s = samples.at(i);
    items.push_back(s.rotation ? torch::rot90(s.image, -s.rotation, {1, 2}) : s.image);
  }
  return normalize_images(torch::stack(items));
}

SourceSplit split_by_source(const std::vector<ClassifierSample>& samples, double val_fraction, std::uint64_t seed) {
  std::map<Grade, std::vector<std::string>> sources;
  std::set<std::string> seen;
  for (const auto& s : samples)
    if (seen.insert(s.source_id).second) sources[s.grade].push_back(s.source_id);

  std::mt19937_64 rng(seed);
  std::set<std::string> held_out;
  for (auto& [grade, ids] : sources) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    auto k = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(ids.size())));
    if (val_fraction > 0.0 && ids.size() > 1) k = std::clamp<std::size_t>(k, 1, ids.size() - 1);
    held_out.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(k, ids.size())));
  }
  SourceSplit split;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (held_out.count(samples[i].source_id) ? split.val : split.train).push_back(i);
  return split;
}

double classifier_accuracy(VisionClassifier& model, const std::vector<ClassifierSample>& samples,
                           const std::vector<std::size_t>& idx, int batch_size) {
  if (idx.empty()) throw std::invalid_argument("classifier_accuracy: empty split");
  torch::NoGradGuard guard;
  const bool was_training = model->is_training();
  model->eval();
  std::int64_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                        idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + batch_size)));
    const auto pred = model->forward(make_image_batch(samples, chunk)).logits.argmax(1);
    for (std::size_t j = 0; j < chunk.size(); ++j)
      correct += pred[static_cast<std::int64_t>(j)].item<std::int64_t>() == static_cast<std::int64_t>(samples[chunk[j]].grade);
  }
  model->train(was_training);
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

ClassifierTrainReport train_classifier(VisionClassifier& model, const std::vector<ClassifierSample>& samples,
                                       const SourceSplit& split, const ClassifierTrainConfig& cfg,
                                       const std::function<void(const EpochStats&)>& on_epoch) {
  if (split.train.empty()) throw std::invalid_argument("train_classifier: empty training split");
  if (split.val.empty()) throw std::invalid_argument("train_classifier: empty validation split");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train_classifier: epochs and batch_size must be positive");

  torch::optim::AdamW opt(model->parameters(), torch::optim::AdamWOptions(cfg.lr).weight_decay(cfg.weight_decay));
  std::mt19937_64 rng(cfg.seed);
  auto order = split.train;
  const auto steps_per_epoch = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * cfg.epochs);
  std::int64_t step = 0;

  ClassifierTrainReport report;
  weights::NamedTensors best;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model->train();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      std::vector<std::int64_t> labels;
      for (const auto i : chunk) labels.push_back(static_cast<std::int64_t>(samples[i].grade));
      const auto target = torch::tensor(labels);

      const double lr = cfg.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
      for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);

      opt.zero_grad();
      const auto logits = model->forward(make_image_batch(samples, chunk)).logits;
      auto loss = torch::nn::functional::cross_entropy(logits, target);
      loss.backward();
      opt.step();
      ++step;
      loss_sum += loss.item<double>() * static_cast<double>(chunk.size());
      correct += logits.argmax(1).eq(target).sum().item<std::int64_t>();
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    stats.val_accuracy = classifier_accuracy(model, samples, split.val);
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (report.best_epoch < 0 || stats.val_accuracy > report.best_val_accuracy) {
      report.best_epoch = epoch;
      report.best_val_accuracy = stats.val_accuracy;
      best = weights::snapshot(*model);
    }
  }
  weights::apply(*model, best, weights::Mode::Strict);
  model->eval();
  return report;
}

}  // namespace glandseg
