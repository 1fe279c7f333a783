#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "glandseg/pipeline.hpp"

using namespace glandseg;

int main(int argc, char** argv) {
  CLI::App app{"Grade-prompted gland segmentation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string split_name, stage_name = "gland";
  bool force = false, strict = false, quiet = false;

  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the run seed");
  app.add_flag("--force", force, "Overwrite existing artifacts");
  app.add_flag("--strict-weights", strict, "Fail on any pretrained weight mismatch");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset into the data root");
  auto* prepare = app.add_subcommand("prepare", "Crop, rotate and annotate training patches");
  auto* train_cls = app.add_subcommand("train-cls", "Train the grade classifier");
  auto* heatmaps = app.add_subcommand("heatmaps", "Cache Grad-CAM++ heat maps for every training patch");
  auto* train_seg = app.add_subcommand("train-seg", "Run one segmentation training stage");
  train_seg->add_option("--stage", stage_name, "gland or contour")->check(CLI::IsMember({"gland", "contour"}));
  auto* predict = app.add_subcommand("predict", "Segment test images");
  auto* evaluate = app.add_subcommand("evaluate", "Object-level F1, Dice and Hausdorff");
  auto* plot = app.add_subcommand("plot", "Write heat-map, post-processing and segmentation figures");
  auto* all = app.add_subcommand("all", "prepare through plot in order");
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration");
  for (auto* sc : {predict, evaluate, plot, all})
    sc->add_option("--split", split_name, "train, testA or testB (default: both test splits)")
        ->check(CLI::IsMember({"train", "testA", "testB"}));

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_run_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path));
    if (seed) cfg.seed = *seed;
    cfg.finalize();

    CommandOptions opts;
    opts.force = force;
    opts.strict_weights = strict;
    opts.log = quiet ? nullptr : &std::cout;
    if (!split_name.empty()) opts.split = split_from_string(split_name);

    if (show->parsed()) std::cout << to_json(cfg).dump(2) << '\n';
    if (synth->parsed()) cmd_synth(cfg, opts);
    if (prepare->parsed()) cmd_prepare(cfg, opts);
    if (train_cls->parsed()) cmd_train_classifier(cfg, opts);
    if (heatmaps->parsed()) cmd_heatmaps(cfg, opts);
    if (train_seg->parsed()) cmd_train_seg(cfg, stage_from_string(stage_name), opts);
    if (predict->parsed()) cmd_predict(cfg, opts);
    if (evaluate->parsed()) cmd_evaluate(cfg, opts);
    if (plot->parsed()) cmd_plot(cfg, opts);
    if (all->parsed()) {
      cmd_prepare(cfg, opts);
      cmd_train_classifier(cfg, opts);
      cmd_heatmaps(cfg, opts);
      cmd_train_seg(cfg, Stage::Gland, opts);
      cmd_train_seg(cfg, Stage::Contour, opts);
      cmd_predict(cfg, opts);
      cmd_evaluate(cfg, opts);
      cmd_plot(cfg, opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
