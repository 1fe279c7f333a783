#include "glandseg/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "glandseg/cam.hpp"
#include "glandseg/figures.hpp"
#include "glandseg/image_io.hpp"
#include "glandseg/tensor_convert.hpp"
#include "glandseg/weights.hpp"

namespace glandseg {

namespace synthetic {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSpec, train_count, test_a_count, test_b_count, canvas, glands_min,
                                                glands_max, axis_min, axis_max, min_gap, max_attempts, benign_period,
                                                benign_amplitude, benign_lumen, malignant_amplitude, background_noise)
}  // namespace synthetic

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CleanOptions, median_radius, min_object_px, max_hole_px)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CamSettings, use_true_label, batch_size)

using nlohmann::json;

namespace {

std::ostream& null_stream() {
  static std::ostream os(nullptr);
  return os;
}

std::ostream& log_of(const CommandOptions& opts) { return opts.log ? *opts.log : null_stream(); }

void require(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path))
    throw std::runtime_error("missing " + what + " at " + path.string() + "; run `glandseg " + producer + "` first");
}

void claim_output(const fs::path& path, bool force) {
  if (fs::exists(path)) {
    if (!force) throw std::runtime_error(path.string() + " already exists; pass --force to overwrite");
    fs::remove_all(path);
  }
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
}

std::vector<Split> requested_splits(const CommandOptions& opts) {
  if (opts.split) return {*opts.split};
  return {Split::TestA, Split::TestB};
}

// One unrotated crop per patch key, in manifest order.
struct Crop {
  PatchManifestEntry entry;
  PatchSample sample;
};

std::vector<Crop> load_crops(const fs::path& patches_dir) {
  const auto manifest = patches_dir / "manifest.csv";
  require(manifest, "patch manifest", "prepare");
  std::vector<Crop> crops;
  std::set<std::string> seen;
  for (auto e : read_patch_manifest(manifest)) {
    if (!seen.insert(patch_key(e)).second) continue;
    e.rotation = 0;
    crops.push_back({e, load_patch_sample(patches_dir, e)});
  }
  if (crops.empty()) throw std::runtime_error("patch manifest " + manifest.string() + " is empty");
  return crops;
}

VisionClassifier load_classifier(const RunPaths& paths) {
  const auto dir = paths.classifier_checkpoint();
  require(dir / "manifest.json", "classifier checkpoint", "train-cls");
  const auto m = weights::load(dir);
  VisionClassifier model(m.metadata.at("config").get<ClassifierConfig>());
  weights::apply(*model, m.tensors, weights::Mode::Strict);
  model->eval();
  return model;
}

PromptedSegmenter load_segmenter(const fs::path& checkpoint) {
  const auto m = weights::load(checkpoint);
  PromptedSegmenter model(m.metadata.at("config").get<SegmenterConfig>());
  weights::apply(*model, m.tensors, weights::Mode::Strict);
  model->eval();
  return model;
}

std::vector<ImageRecord> load_split(const RunConfig& cfg, Split split) {
  if (!fs::exists(cfg.data_root))
    throw std::runtime_error("data root " + cfg.data_root.string() +
                             " does not exist; run `glandseg synth` or set GLANDSEG_DATA_ROOT");
  LoadOptions lo;
  lo.min_side = cfg.min_side;
  return filter_split(load_glas_dataset(cfg.data_root, lo), split);
}

std::vector<LossPoint> read_loss_curve(const fs::path& path) {
  std::ifstream in(path);
  std::vector<LossPoint> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    if (!c.empty()) out.push_back({std::stoi(a), std::stoll(b), std::stod(c)});
  }
  return out;
}

json patch_options_json(const PatchOptions& p) {
  json j = {{"patch", p.patch}, {"dilate_radius", p.dilate_radius}, {"erode_radius", p.erode_radius},
            {"w0", p.w0},       {"sigma", p.sigma}};
  if (p.class_weights) j["class_weights"] = {{"background", p.class_weights->background}, {"foreground", p.class_weights->foreground}};
  return j;
}

PatchOptions patch_options_from(const json& j, PatchOptions p) {
  p.patch = j.value("patch", p.patch);
  p.dilate_radius = j.value("dilate_radius", p.dilate_radius);
  p.erode_radius = j.value("erode_radius", p.erode_radius);
  p.w0 = j.value("w0", p.w0);
  p.sigma = j.value("sigma", p.sigma);
  if (j.contains("class_weights") && !j.at("class_weights").is_null()) {
    ClassWeights w;
    w.background = j.at("class_weights").value("background", 1.0);
    w.foreground = j.at("class_weights").value("foreground", 1.0);
    p.class_weights = w;
  }
  return p;
}

}  // namespace

void RunConfig::finalize() {
  synthetic.seed = seed;
  classifier_training.seed = seed;
  gland_stage.seed = seed + 1;
  contour_stage.seed = seed + 2;
  gland_stage.stage = Stage::Gland;
  gland_stage.trainable_groups = stage_groups(Stage::Gland);
  contour_stage.stage = Stage::Contour;
  contour_stage.trainable_groups = stage_groups(Stage::Contour);
  if (run_id.empty() || run_id.find('/') != std::string::npos) throw std::invalid_argument("config: invalid run_id");
  if (patches.patch != classifier.image_size || patches.patch != segmenter.image_size)
    throw std::invalid_argument("config: patch size must equal the classifier and segmenter image sizes");
  if (min_side < patches.patch) throw std::invalid_argument("config: min_side must be at least the patch size");
  if (cam.batch_size < 1) throw std::invalid_argument("config: cam.batch_size must be positive");
  if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
  classifier.validate();
  segmenter.validate();
  gland_stage.validate();
  contour_stage.validate();
}

json to_json(const RunConfig& c) {
  json j;
  j["run_id"] = c.run_id;
  j["paths"] = {{"data_root", c.data_root.string()}, {"work_dir", c.work_dir.string()}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["dataset"] = patch_options_json(c.patches);
  j["dataset"]["min_side"] = c.min_side;
  j["synthetic"] = c.synthetic;
  j["classifier"] = c.classifier;
  j["classifier_training"] = c.classifier_training;
  j["cam"] = c.cam;
  j["segmenter"] = c.segmenter;
  j["training"] = {{"gland", c.gland_stage},
                   {"contour", c.contour_stage},
                   {"pretrained", c.pretrained ? json(c.pretrained->string()) : json(nullptr)},
                   {"duplicate_gland_into_contour", c.duplicate_gland_into_contour}};
  j["postprocess"] = {{"threshold", c.postprocess.threshold}, {"clean", c.postprocess.clean}};
  j["metrics"] = {{"aggregation", to_string(c.aggregation)},
                  {"hausdorff_empty_penalty",
                   c.hausdorff_empty_penalty ? json(*c.hausdorff_empty_penalty) : json(nullptr)}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.run_id = j.value("run_id", c.run_id);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    c.data_root = p.value("data_root", c.data_root.string());
    c.work_dir = p.value("work_dir", c.work_dir.string());
  }
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (j.contains("dataset")) {
    c.patches = patch_options_from(j.at("dataset"), c.patches);
    c.min_side = j.at("dataset").value("min_side", c.min_side);
  }
  if (j.contains("synthetic")) j.at("synthetic").get_to(c.synthetic);
  if (j.contains("classifier")) j.at("classifier").get_to(c.classifier);
  if (j.contains("classifier_training")) j.at("classifier_training").get_to(c.classifier_training);
  if (j.contains("cam")) j.at("cam").get_to(c.cam);
  if (j.contains("segmenter")) j.at("segmenter").get_to(c.segmenter);
  if (j.contains("training")) {
    const auto& t = j.at("training");
    if (t.contains("gland")) from_json(t.at("gland"), c.gland_stage);
    if (t.contains("contour")) from_json(t.at("contour"), c.contour_stage);
    if (t.contains("pretrained") && !t.at("pretrained").is_null()) c.pretrained = t.at("pretrained").get<std::string>();
    c.duplicate_gland_into_contour = t.value("duplicate_gland_into_contour", c.duplicate_gland_into_contour);
  }
  if (j.contains("postprocess")) {
    const auto& p = j.at("postprocess");
    c.postprocess.threshold = p.value("threshold", c.postprocess.threshold);
    if (p.contains("clean")) p.at("clean").get_to(c.postprocess.clean);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    c.aggregation = aggregation_mode_from_string(m.value("aggregation", std::string(to_string(c.aggregation))));
    if (m.contains("hausdorff_empty_penalty") && !m.at("hausdorff_empty_penalty").is_null())
      c.hausdorff_empty_penalty = m.at("hausdorff_empty_penalty").get<double>();
  }
  return c;
}

RunConfig load_run_config(const std::optional<fs::path>& path) {
  RunConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw std::runtime_error("cannot open config " + path->string());
    cfg = run_config_from_json(json::parse(in, nullptr, true, true));
  }
  if (const char* v = std::getenv("GLANDSEG_DATA_ROOT"); v && *v) cfg.data_root = v;
  if (const char* v = std::getenv("GLANDSEG_WORK_DIR"); v && *v) cfg.work_dir = v;
  return cfg;
}

RunPaths run_paths(const RunConfig& cfg) {
  RunPaths p;
  p.root = cfg.work_dir / cfg.run_id;
  p.patches = p.root / "patches";
  p.heatmaps = p.root / "heatmaps";
  p.checkpoints = p.root / "checkpoints";
  p.predictions = p.root / "predictions";
  p.reports = p.root / "reports";
  p.figures = p.root / "figures";
  return p;
}

void cmd_synth(const RunConfig& cfg, const CommandOptions& opts) {
  if (fs::exists(cfg.data_root) && !fs::is_empty(cfg.data_root)) claim_output(cfg.data_root, opts.force);
  synthetic::generate(cfg.synthetic, cfg.data_root);
  log_of(opts) << "synthetic dataset written to " << cfg.data_root.string() << '\n';
}

void cmd_prepare(const RunConfig& cfg, const CommandOptions& opts) {
  const auto paths = run_paths(cfg);
  const auto records = load_split(cfg, Split::Train);
  if (records.empty()) throw std::runtime_error("no training images under " + cfg.data_root.string());
  claim_output(paths.patches, opts.force);
  const auto entries = write_patch_set(paths.patches, records, cfg.patches);
  fs::create_directories(paths.root);
  std::ofstream(paths.root / "run_config.json") << to_json(cfg).dump(2) << '\n';
  log_of(opts) << "prepared " << records.size() << " training images into " << entries.size() << " patches\n";
}

ClassifierRunReport cmd_train_classifier(const RunConfig& cfg, const CommandOptions& opts) {
  apply_threads(cfg);
  const auto paths = run_paths(cfg);
  const auto crops = load_crops(paths.patches);
  claim_output(paths.classifier_checkpoint(), opts.force);
  auto& log = log_of(opts);

  std::vector<ClassifierSample> samples;
  for (const auto& c : crops) {
    const auto u8 = image_to_u8_tensor(c.sample.image);
    for (int k = 0; k < 4; ++k) samples.push_back({u8, k, c.sample.grade, c.sample.source_id});
  }
  const auto split = split_by_source(samples, cfg.classifier_training.val_fraction, cfg.seed);

  torch::manual_seed(cfg.seed);
  VisionClassifier model(cfg.classifier);
  ClassifierRunReport report;
  report.training = train_classifier(model, samples, split, cfg.classifier_training, [&](const EpochStats& s) {
    log << "epoch " << s.epoch << " loss " << s.loss << " train_acc " << s.train_accuracy << " val_acc "
        << s.val_accuracy << '\n';
  });
  report.val_accuracy = report.training.best_val_accuracy;
  report.split_accuracy.emplace_back("val", report.val_accuracy);

  std::set<std::string> val_sources;
  for (const auto i : split.val) val_sources.insert(samples[i].source_id);

  for (const auto s : {Split::TestA, Split::TestB}) {
    const auto records = load_split(cfg, s);
    if (records.empty()) continue;
    std::vector<ClassifierSample> test;
    for (const auto& r : records)
      for (const auto& c : extract_corner_patches(r, cfg.patches.patch))
        test.push_back({image_to_u8_tensor(c.image), 0, c.grade, c.source_id});
    std::vector<std::size_t> idx(test.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    report.split_accuracy.emplace_back(to_string(s), classifier_accuracy(model, test, idx));
  }

  weights::save(paths.classifier_checkpoint(), *model,
                {{"model", "vision_classifier"},
                 {"config", cfg.classifier},
                 {"best_epoch", report.training.best_epoch},
                 {"val_accuracy", report.val_accuracy},
                 {"val_sources", val_sources}});

  fs::create_directories(paths.reports);
  std::ofstream ep(paths.reports / "classifier_epochs.csv");
  ep << "epoch,loss,train_accuracy,val_accuracy\n";
  for (const auto& e : report.training.epochs)
    ep << e.epoch << ',' << e.loss << ',' << e.train_accuracy << ',' << e.val_accuracy << '\n';
  std::ofstream acc(paths.reports / "classifier_accuracy.csv");
  acc << "split,accuracy\n";
  for (const auto& [name, a] : report.split_accuracy) {
    acc << name << ',' << a << '\n';
    log << name << " accuracy " << a << '\n';
  }
  return report;
}

HeatmapRunReport cmd_heatmaps(const RunConfig& cfg, const CommandOptions& opts) {
  apply_threads(cfg);
  const auto paths = run_paths(cfg);
  auto model = load_classifier(paths);
  const auto crops = load_crops(paths.patches);
  claim_output(paths.heatmaps, opts.force);

  std::set<std::string> val_sources;
  for (const auto& s : weights::load_metadata(paths.classifier_checkpoint()).value("val_sources", json::array()))
    val_sources.insert(s.get<std::string>());

  HeatMapStore store(paths.heatmaps);
  HeatmapRunReport report;
  CamOptions cam_opts;

  struct Job {
    std::size_t crop;
    int rotation;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < crops.size(); ++i)
    for (int k = 0; k < 4; ++k) jobs.push_back({i, k});

  std::map<std::size_t, torch::Tensor> u8;
  for (std::size_t start = 0; start < jobs.size(); start += static_cast<std::size_t>(cfg.cam.batch_size)) {
    const auto end = std::min(jobs.size(), start + static_cast<std::size_t>(cfg.cam.batch_size));
    std::vector<torch::Tensor> batch;
    std::vector<std::int64_t> labels;
    for (std::size_t j = start; j < end; ++j) {
      const auto& c = crops[jobs[j].crop];
      if (!u8.count(jobs[j].crop)) u8[jobs[j].crop] = image_to_u8_tensor(c.sample.image);
      const auto& img = u8[jobs[j].crop];
      batch.push_back(jobs[j].rotation ? torch::rot90(img, -jobs[j].rotation, {1, 2}) : img);
    }
    const auto images = normalize_images(torch::stack(batch));
    std::vector<HeatMap> maps;
    if (cfg.cam.use_true_label) {
      // Targets differ per sample, so run one call per grade.
      for (std::size_t j = start; j < end; ++j) {
        CamOptions o;
        o.target = crops[jobs[j].crop].sample.grade;
        auto one = gradcam_pp(model, images.narrow(0, static_cast<std::int64_t>(j - start), 1), o);
        maps.push_back(std::move(one.front()));
      }
    } else {
      maps = gradcam_pp(model, images, cam_opts);
    }
    for (std::size_t j = start; j < end; ++j) {
      const auto& c = crops[jobs[j].crop];
      const auto& h = maps[j - start];
      store.put({c.sample.source_id, c.sample.offset, jobs[j].rotation, h.target_class, {}}, h.values);
      ++report.heatmaps;
      if (jobs[j].rotation != 0 || !val_sources.count(c.sample.source_id)) continue;
      double in = 0, out = 0;
      std::int64_t n_in = 0, n_out = 0;
      for (std::size_t p = 0; p < h.values.size(); ++p) {
        if (c.sample.gland_mask.values()[p]) {
          in += h.values.values()[p];
          ++n_in;
        } else {
          out += h.values.values()[p];
          ++n_out;
        }
      }
      if (n_in && n_out) report.localization.push_back({c.sample.source_id, c.sample.offset, in / n_in, out / n_out});
    }
  }
  store.write_manifest();

  std::size_t higher = 0;
  fs::create_directories(paths.reports);
  std::ofstream os(paths.reports / "heatmap_localization.csv");
  os << "source_id,row,col,mean_inside,mean_outside\n";
  for (const auto& r : report.localization) {
    higher += r.mean_inside > r.mean_outside;
    os << r.source_id << ',' << r.offset.row << ',' << r.offset.col << ',' << r.mean_inside << ',' << r.mean_outside << '\n';
  }
  report.fraction_inside_higher =
      report.localization.empty() ? 0.0 : static_cast<double>(higher) / static_cast<double>(report.localization.size());
  log_of(opts) << report.heatmaps << " heat maps; inside > outside on " << higher << "/" << report.localization.size()
               << " validation patches\n";
  return report;
}

StageRun cmd_train_seg(const RunConfig& cfg, Stage stage, const CommandOptions& opts) {
  apply_threads(cfg);
  const auto paths = run_paths(cfg);
  auto& log = log_of(opts);
  const auto crops = load_crops(paths.patches);
  require(paths.heatmaps / "manifest.csv", "heat maps", "heatmaps");
  std::optional<fs::path> input;
  if (stage == Stage::Contour) {
    require(paths.stage_checkpoint(Stage::Gland) / "manifest.json", "gland stage checkpoint", "train-seg --stage gland");
    input = paths.stage_checkpoint(Stage::Gland);
  }
  claim_output(paths.stage_dir(stage), opts.force);

  torch::manual_seed(cfg.seed);
  PromptedSegmenter model(input ? checkpoint_config(*input) : cfg.segmenter);
  if (stage == Stage::Gland && cfg.pretrained) {
    const auto m = weights::load(*cfg.pretrained);
    const auto rep = load_pretrained(model, m.tensors, opts.strict_weights ? weights::Mode::Strict : weights::Mode::Permissive,
                                     cfg.duplicate_gland_into_contour);
    log << "pretrained weights: " << rep.summary() << '\n';
  }

  HeatMapStore store(paths.heatmaps);
  std::vector<SegSample> samples;
  for (const auto& c : crops) {
    SegSample base;
    base.image = image_to_u8_tensor(c.sample.image);
    base.gland = raster_to_tensor(c.sample.gland_mask);
    base.contour = raster_to_tensor(c.sample.contour_mask);
    base.weight = raster_to_tensor(c.sample.weight_map);
    for (int k = 0; k < 4; ++k) {
      auto s = base;
      s.rotation = k;
      s.heatmap = raster_to_tensor(store.get(c.sample.source_id, c.sample.offset, k));
      samples.push_back(std::move(s));
    }
  }

  const auto& scfg = stage == Stage::Gland ? cfg.gland_stage : cfg.contour_stage;
  const auto steps_per_epoch = static_cast<std::int64_t>((samples.size() + scfg.batch_size - 1) / scfg.batch_size);
  auto run = train_stage(model, samples, scfg, input, paths.stage_dir(stage), [&](const LossPoint& p) {
    if ((p.step + 1) % steps_per_epoch == 0) log << to_string(stage) << " epoch " << p.epoch << " loss " << p.loss << '\n';
  });
  log << "checkpoint written to " << run.checkpoint.string() << '\n';
  return run;
}

ImagePrediction predict_image(VisionClassifier& classifier, PromptedSegmenter& segmenter, const RgbImage& image,
                              const RunConfig& cfg) {
  const int p = cfg.patches.patch;
  const auto offsets = corner_offsets(image.rows(), image.cols(), p);
  std::vector<torch::Tensor> crops;
  for (const auto& o : offsets) crops.push_back(image_to_u8_tensor(crop(image, o, p, p)));
  const auto images = normalize_images(torch::stack(crops));
  const auto heat = gradcam_pp(classifier, images);

  std::vector<torch::Tensor> heat_t;
  for (const auto& h : heat) heat_t.push_back(raster_to_tensor(h.values));
  SegmenterOutput out;
  {
    torch::NoGradGuard guard;
    segmenter->eval();
    out = segmenter->forward(images, torch::stack(heat_t));
  }
  const auto gland = out.gland_prob();
  const auto contour = out.contour_prob();

  StitchCanvas g(image.rows(), image.cols()), c(image.rows(), image.cols()), h(image.rows(), image.cols());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i);
    g.add({offsets[i], tensor_to_raster(gland[k])});
    c.add({offsets[i], tensor_to_raster(contour[k])});
    h.add({offsets[i], heat[i].values});
  }
  ImagePrediction pred;
  pred.gland_prob = g.mean();
  pred.contour_prob = c.mean();
  pred.heatmap = h.mean();
  pred.instances = postprocess(pred.gland_prob, pred.contour_prob, cfg.postprocess);
  return pred;
}

void cmd_predict(const RunConfig& cfg, const CommandOptions& opts) {
  apply_threads(cfg);
  const auto paths = run_paths(cfg);
  require(paths.stage_checkpoint(Stage::Gland) / "manifest.json", "gland stage checkpoint", "train-seg --stage gland");
  require(paths.stage_checkpoint(Stage::Contour) / "manifest.json", "contour stage checkpoint", "train-seg --stage contour");
  auto classifier = load_classifier(paths);
  auto segmenter = load_segmenter(paths.stage_checkpoint(Stage::Contour));
  for (const auto split : requested_splits(opts)) {
    const auto records = load_split(cfg, split);
    if (records.empty()) continue;
    const auto dir = paths.prediction_dir(split);
    claim_output(dir, opts.force);
    fs::create_directories(dir);
    for (const auto& r : records) {
      const auto pred = predict_image(classifier, segmenter, r.image, cfg);
      io::write_labels(dir / (r.id + ".png"), pred.instances);
      io::write_float(dir / (r.id + "_gland.tiff"), pred.gland_prob);
      io::write_float(dir / (r.id + "_contour.tiff"), pred.contour_prob);
      io::write_float(dir / (r.id + "_heat.tiff"), pred.heatmap);
    }
    log_of(opts) << "predicted " << records.size() << " " << to_string(split) << " images\n";
  }
}

std::vector<MetricsReport> cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts) {
  const auto paths = run_paths(cfg);
  HausdorffOptions hopts;
  hopts.empty_penalty = cfg.hausdorff_empty_penalty;
  std::vector<MetricsReport> reports;
  for (const auto split : requested_splits(opts)) {
    const auto records = load_split(cfg, split);
    if (records.empty()) continue;
    const auto dir = paths.prediction_dir(split);
    require(dir, std::string(to_string(split)) + " predictions", "predict");
    std::vector<ImageMetrics> per_image;
    for (const auto& r : records) {
      const auto file = dir / (r.id + ".png");
      require(file, "prediction for " + r.id, "predict");
      per_image.push_back(evaluate_image(r.id, io::read_labels(file), r.annotation, hopts));
    }
    reports.push_back(aggregate(per_image, to_string(split), cfg.aggregation));
  }
  if (reports.empty()) throw std::runtime_error("no test images to evaluate under " + cfg.data_root.string());

  fs::create_directories(paths.reports);
  for (const auto& rep : reports) {
    const auto out = paths.reports / ("metrics_" + rep.split + ".csv");
    claim_output(out, opts.force);
    std::ofstream os(out);
    write_report_csv(os, rep);
  }
  const auto summary = paths.reports / "summary.md";
  if (fs::exists(summary)) fs::remove(summary);
  std::ofstream os(summary);
  write_summary_table(os, reports);
  write_summary_table(log_of(opts), reports);
  return reports;
}

void cmd_plot(const RunConfig& cfg, const CommandOptions& opts) {
  const auto paths = run_paths(cfg);
  claim_output(paths.figures, opts.force);
  fs::create_directories(paths.figures);
  std::size_t written = 0;

  for (const auto stage : {Stage::Gland, Stage::Contour}) {
    const auto curve = paths.stage_dir(stage) / "loss_curve.csv";
    if (!fs::exists(curve)) continue;
    io::write_rgb(paths.figures / (std::string("loss_") + to_string(stage) + ".png"),
                  figures::loss_plot(read_loss_curve(curve), std::string(to_string(stage)) + " loss"));
    ++written;
  }

  for (const auto split : requested_splits(opts)) {
    const auto dir = paths.prediction_dir(split);
    if (!fs::exists(dir)) continue;
    const auto records = load_split(cfg, split);
    std::vector<RgbImage> overview;
    for (const auto& r : records) {
      const auto labels = dir / (r.id + ".png");
      require(labels, "prediction for " + r.id, "predict");
      const auto pred = io::read_labels(labels);
      const auto gland = io::read_float(dir / (r.id + "_gland.tiff"));
      const auto contour = io::read_float(dir / (r.id + "_contour.tiff"));
      const auto heat = io::read_float(dir / (r.id + "_heat.tiff"));
      const auto gland_bin = binarize(gland, cfg.postprocess.threshold);
      const auto contour_bin = binarize(contour, cfg.postprocess.threshold);

      const auto heat_row = figures::panel_row({r.image, figures::heat_overlay(r.image, heat)},
                                               {r.id + " (" + to_string(r.grade) + ")", "grade heat map"});
      const auto post_row = figures::panel_row(
          {figures::gray(gland), figures::gray(contour), figures::gray(remove_contour_overlap(gland_bin, contour_bin)),
           figures::instance_overlay(r.image, pred)},
          {"gland probability", "contour probability", "gland minus contour", "final instances"});
      const auto seg_row = figures::panel_row(
          {r.image, figures::instance_overlay(r.image, r.annotation), figures::instance_overlay(r.image, pred)},
          {"image", "ground truth", "prediction"});

      fs::create_directories(paths.figures / "heatmaps");
      fs::create_directories(paths.figures / "postprocess");
      io::write_rgb(paths.figures / "heatmaps" / (r.id + ".png"), heat_row);
      io::write_rgb(paths.figures / "postprocess" / (r.id + ".png"), post_row);
      written += 2;
      if (overview.size() < 4) overview.push_back(seg_row);
    }
    if (!overview.empty()) {
      io::write_rgb(paths.figures / (std::string("segmentation_") + to_string(split) + ".png"),
                    figures::stack_rows(overview));
      ++written;
    }
  }
  if (written == 0) throw std::runtime_error("nothing to plot yet; run `glandseg predict` first");
  log_of(opts) << written << " figures written to " << paths.figures.string() << '\n';
}

}  // namespace glandseg
