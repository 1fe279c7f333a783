#include <torch/torch.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "../support/temp_dir.hpp"
#include "../support/tiny_models.hpp"
#include "glandseg/morphology.hpp"
#include "glandseg/pipeline.hpp"

using namespace glandseg;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

InstanceMask paint(int rows, int cols, std::initializer_list<std::tuple<int, int, int, int, int>> boxes) {
  InstanceMask m(rows, cols);
  for (const auto& [label, r0, c0, h, w] : boxes)
    for (int r = r0; r < r0 + h; ++r)
      for (int c = c0; c < c0 + w; ++c) m.labels(r, c) = label;
  return m;
}

BinaryMask rect(BinaryMask base, int r0, int c0, int h, int w) {
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) base(r, c) = 1;
  return base;
}

void metric_oracle(Outcome& o) {
  std::mt19937 rng(20240601);
  int pairs = 0, count_mismatch = 0, dice_mismatch = 0, haus_mismatch = 0;
  const auto t0 = Clock::now();
  for (; pairs < 100; ++pairs) {
    const int rows = 4 + static_cast<int>(rng() % 29), cols = 4 + static_cast<int>(rng() % 29);
    const auto gt = oracle::random_instances(rng, rows, cols, 5);
    const auto pred = oracle::random_instances(rng, rows, cols, 5);
    const auto c = object_f1(pred, gt).counts;
    const auto e = oracle::f1_counts(pred, gt);
    count_mismatch += c.tp != e.tp || c.fp != e.fp || c.fn != e.fn;
    dice_mismatch += std::abs(object_dice(pred, gt) - oracle::object_dice(pred, gt)) > 1e-9;
    const double penalty = std::hypot(double(rows), double(cols));
    haus_mismatch += object_hausdorff(pred, gt) != oracle::object_hausdorff(pred, gt, penalty);
  }
  const double secs = seconds_since(t0);
  o.expect(count_mismatch == 0, std::to_string(count_mismatch) + " F1 count mismatches");
  o.expect(dice_mismatch == 0, std::to_string(dice_mismatch) + " Dice mismatches");
  o.expect(haus_mismatch == 0, std::to_string(haus_mismatch) + " Hausdorff mismatches");
  o.expect(secs < 10.0, "runtime");
  o.detail << pairs << " random pairs in " << std::fixed << std::setprecision(2) << secs << " s";
}

void metric_fixtures(Outcome& o) {
  const auto gt = paint(12, 12, {{1, 0, 0, 3, 4}, {2, 5, 5, 4, 4}, {3, 10, 0, 2, 12}});
  o.expect(object_f1(gt, gt).f1 == 1.0 && object_dice(gt, gt) == 1.0 && object_hausdorff(gt, gt) == 0.0,
           "pred == gt");

  const auto gt2 = paint(10, 10, {{1, 1, 1, 3, 3}, {2, 6, 6, 3, 3}});
  const auto pred2 = paint(10, 10, {{1, 1, 1, 3, 3}, {2, 6, 0, 2, 2}});
  const auto f = object_f1(pred2, gt2);
  o.expect(f.counts == ObjectCounts{1, 1, 1} && f.f1 == 0.5, "10x10 F1 = 0.5");

  const auto sq = paint(8, 8, {{1, 2, 1, 4, 4}});
  const auto shifted = paint(8, 8, {{1, 2, 3, 4, 4}});
  o.expect(object_dice(shifted, sq) == 0.5, "shifted square Dice = 0.5");
  o.detail << "identity (1, 1, 0), F1 " << f.f1 << ", shifted Dice " << object_dice(shifted, sq);
}

void weighted_mse_checks(Outcome& o) {
  torch::manual_seed(3);
  auto pred = torch::rand({4, 1, 16, 16});
  auto target = (torch::rand({4, 1, 16, 16}) > 0.5).to(torch::kFloat32);
  const bool exact = weighted_mse(pred, target, torch::ones_like(pred)).item<float>() ==
                     (pred - target).pow(2).flatten(1).sum(1).mean().item<float>();
  o.expect(exact, "all-ones weights equal plain sum of squares");

  auto p = torch::rand({1, 1, 4, 4}, torch::kFloat64).requires_grad_(true);
  auto t = (torch::rand({1, 1, 4, 4}) > 0.5).to(torch::kFloat64);
  auto w = torch::rand({1, 1, 4, 4}, torch::kFloat64) * 5.0 + 0.1;
  weighted_mse(p, t, w).backward();
  const auto analytic = p.grad().clone();
  const auto base = p.detach().clone();
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 16; ++i) {
    auto up = base.clone(), down = base.clone();
    up.view(-1)[i] += h;
    down.view(-1)[i] -= h;
    const double fd = (weighted_mse(up, t, w).item<double>() - weighted_mse(down, t, w).item<double>()) / (2 * h);
    const double an = analytic.view(-1)[i].item<double>();
    worst = std::max(worst, std::abs(fd - an) / std::max(1e-12, std::max(std::abs(fd), std::abs(an))));
  }
  o.expect(worst <= 1e-4, "finite-difference gradient");
  o.detail << "unit weights exact, worst FD relative error " << std::scientific << std::setprecision(2) << worst;
}

std::vector<SegSample> random_seg_samples(int count, int size) {
  torch::manual_seed(17);
  std::vector<SegSample> out;
  for (int i = 0; i < count; ++i) {
    SegSample s;
    s.image = torch::randint(0, 256, {3, size, size}).to(torch::kUInt8);
    s.gland = (torch::rand({1, size, size}) > 0.5).to(torch::kUInt8);
    s.contour = (torch::rand({1, size, size}) > 0.8).to(torch::kUInt8);
    s.weight = torch::rand({1, size, size}) + 0.5;
    s.heatmap = torch::rand({1, size, size});
    s.rotation = i % 4;
    out.push_back(s);
  }
  return out;
}

void freezing_contract(Outcome& o) {
  test::TempDir tmp;
  torch::manual_seed(19);
  PromptedSegmenter model(test::tiny_segmenter());
  const auto samples = random_seg_samples(4, 64);
  auto gland_cfg = StageConfig::for_stage(Stage::Gland);
  gland_cfg.epochs = 1;
  gland_cfg.batch_size = 2;
  gland_cfg.lr = 1e-3;
  auto contour_cfg = StageConfig::for_stage(Stage::Contour);
  contour_cfg.epochs = 2;
  contour_cfg.batch_size = 2;
  contour_cfg.lr = 1e-3;
  const auto g = train_stage(model, samples, gland_cfg, std::nullopt, tmp.path() / "g");
  const auto c = train_stage(model, samples, contour_cfg, g.checkpoint, tmp.path() / "c");
  const auto gw = weights::load(g.checkpoint).tensors, cw = weights::load(c.checkpoint).tensors;
  std::size_t frozen = 0, frozen_same = 0, trained_changed = 0;
  for (const auto& [name, t] : gw) {
    if (name.rfind("contour_", 0) == 0) {
      trained_changed += !weights::bitwise_equal(t, cw.at(name));
    } else {
      ++frozen;
      frozen_same += weights::bitwise_equal(t, cw.at(name));
    }
  }
  o.expect(frozen == frozen_same, "frozen entries changed");
  o.expect(trained_changed > 0, "contour branch did not train");
  o.detail << frozen_same << "/" << frozen << " encoder, adapter and gland-branch entries bitwise identical; "
           << trained_changed << " contour entries updated";
}

void architecture_contracts(Outcome& o) {
  torch::manual_seed(23);
  PromptedSegmenter model(test::tiny_segmenter());
  model->eval();
  torch::NoGradGuard ng;
  auto img = torch::randn({2, 3, 64, 64});
  const auto a = model->forward(img, torch::rand({2, 1, 64, 64}));
  const auto b = model->forward(img, torch::rand({2, 1, 64, 64}));
  o.expect(torch::equal(a.contour_logits, b.contour_logits), "contour output depends on the heat map");

  const auto calls = model->encoder_calls();
  model->forward(img, torch::rand({2, 1, 64, 64}));
  o.expect(model->encoder_calls() == calls + 1, "encoder evaluations per forward");

  PromptAdapter adapter(AdapterConfig{});
  adapter->eval();
  adapter->conv2->weight.zero_();
  adapter->conv2->bias.zero_();
  auto h = torch::rand({2, 1, 32, 32});
  o.expect(torch::equal(adapter->forward(h, torch::randn({2, 3, 32, 32})), h), "zero adapter is not the identity");
  o.detail << "contour bitwise independent of heat map, zero adapter identity, one encoder pass per forward";
}

void postprocess_properties(Outcome& o) {
  std::mt19937 rng(29);
  std::bernoulli_distribution b(0.5);
  bool subset = true;
  for (int trial = 0; trial < 50; ++trial) {
    BinaryMask g(24, 24), c(24, 24);
    for (auto& v : g) v = b(rng);
    for (auto& v : c) v = b(rng);
    const auto out = remove_contour_overlap(g, c);
    for (std::size_t i = 0; i < out.size(); ++i) subset &= out.values()[i] <= g.values()[i];
  }
  o.expect(subset, "overlap removal leaves the gland");

  bool idempotent = true;
  std::bernoulli_distribution dense(0.45);
  for (int trial = 0; trial < 30; ++trial) {
    BinaryMask m(40, 40);
    for (auto& v : m) v = dense(rng);
    const CleanOptions opts{.median_radius = 0, .min_object_px = 8, .max_hole_px = 6};
    const auto once = clean(m, opts);
    idempotent &= clean(once.foreground(), opts).foreground() == once.foreground();
  }
  o.expect(idempotent, "clean idempotence");

  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<PatchPrediction> patches;
  for (const auto off : corner_offsets(500, 500, 400)) {
    FloatRaster v(400, 400);
    for (auto& x : v) x = u(rng);
    patches.push_back({off, v});
  }
  const auto stitched = stitch_patches(patches, 500, 500);
  double worst = 0.0;
  for (int r = 0; r < 500; ++r)
    for (int c = 0; c < 500; ++c) {
      double sum = 0.0;
      int n = 0;
      for (const auto& p : patches) {
        const int rr = r - p.offset.row, cc = c - p.offset.col;
        if (rr >= 0 && cc >= 0 && rr < 400 && cc < 400) {
          sum += p.values(rr, cc);
          ++n;
        }
      }
      worst = std::max(worst, std::abs(stitched(r, c) - sum / n));
    }
  o.expect(worst <= 1e-6, "stitching differs from the per-pixel mean");

  BinaryMask gland(12, 20, 0);
  gland = rect(gland, 3, 1, 6, 6);
  gland = rect(gland, 3, 13, 6, 6);
  gland = rect(gland, 5, 7, 2, 6);
  const auto contour = rect(BinaryMask(12, 20, 0), 4, 7, 4, 6);
  const int before = oracle::count_components(gland, true);
  const int after = oracle::count_components(remove_contour_overlap(gland, contour), true);
  o.expect(before == 1 && after == 2, "bridged glands");
  o.detail << "subset and idempotence on random masks, stitch max error " << std::scientific << std::setprecision(1)
           << worst << ", bridged glands " << before << " -> " << after << " components";
}

void data_counts(Outcome& o) {
  test::TempDir tmp;
  const synthetic::SynthSpec spec;
  synthetic::generate(spec, tmp.path());
  const auto recs = load_glas_dataset(tmp.path());
  const auto grades = read_grade_table(tmp.path() / "Grade.csv");
  const auto n_train = filter_split(recs, Split::Train).size(), n_a = filter_split(recs, Split::TestA).size(),
             n_b = filter_split(recs, Split::TestB).size();
  bool grades_ok = grades.size() == recs.size();
  for (const auto& r : recs) grades_ok &= grades.count(r.id) && grades.at(r.id) == r.grade;
  o.expect(n_train == std::size_t(spec.train_count) && n_a == std::size_t(spec.test_a_count) &&
               n_b == std::size_t(spec.test_b_count),
           "synthetic counts");
  o.expect(grades_ok, "synthetic grades");
  o.detail << "synthetic " << n_train << "/" << n_a << "/" << n_b << " with grades exact";

  const char* glas = std::getenv("GLANDSEG_GLAS_ROOT");
  if (!glas || !*glas) {
    o.detail << "; real GlaS counts not checked (set GLANDSEG_GLAS_ROOT to a GlaS directory)";
    return;
  }
  const auto real = load_glas_dataset(glas);
  const auto train = filter_split(real, Split::Train);
  const auto ra = filter_split(real, Split::TestA).size(), rb = filter_split(real, Split::TestB).size();
  const std::size_t patches = train.size() * 4 * 4;
  o.expect(train.size() == 85 && ra == 60 && rb == 20, "GlaS record counts");
  o.expect(patches == 1360, "GlaS training patches");
  o.detail << "; GlaS " << train.size() << "/" << ra << "/" << rb << ", " << patches << " training patches";
}

void smoke(Outcome& o, const fs::path& config, const std::optional<fs::path>& keep) {
  std::optional<test::TempDir> tmp;
  fs::path root;
  if (keep) {
    root = *keep;
  } else {
    tmp.emplace();
    root = tmp->path();
  }
  auto cfg = load_run_config(config);
  cfg.data_root = root / "data";
  cfg.work_dir = root / "work";
  cfg.finalize();

  std::ostringstream sink;
  CommandOptions opts;
  opts.force = true;
  opts.log = &sink;
  const auto t0 = Clock::now();
  auto step = [&](const char* name, const std::function<void()>& f) {
    const auto t = Clock::now();
    f();
    std::cerr << "  " << name << " " << std::fixed << std::setprecision(1) << seconds_since(t) << " s\n";
  };

  ClassifierRunReport cls;
  HeatmapRunReport heat;
  std::vector<MetricsReport> reports;
  step("synth", [&] { cmd_synth(cfg, opts); });
  step("prepare", [&] { cmd_prepare(cfg, opts); });
  step("train-cls", [&] { cls = cmd_train_classifier(cfg, opts); });
  step("heatmaps", [&] { heat = cmd_heatmaps(cfg, opts); });
  step("train-seg gland", [&] { cmd_train_seg(cfg, Stage::Gland, opts); });
  step("train-seg contour", [&] { cmd_train_seg(cfg, Stage::Contour, opts); });
  step("predict", [&] { cmd_predict(cfg, opts); });
  step("evaluate", [&] { reports = cmd_evaluate(cfg, opts); });
  const double secs = seconds_since(t0);

  // Localization per validation image: its patches' inside and outside means.
  std::map<std::string, std::pair<double, double>> per_image;
  for (const auto& r : heat.localization) {
    per_image[r.source_id].first += r.mean_inside;
    per_image[r.source_id].second += r.mean_outside;
  }
  std::size_t inside_higher = 0;
  for (const auto& [id, io] : per_image) inside_higher += io.first > io.second;
  const double loc = per_image.empty() ? 0.0 : double(inside_higher) / double(per_image.size());

  o.expect(secs <= 20 * 60, "runtime over 20 minutes");
  o.expect(cls.val_accuracy >= 0.9, "classifier validation accuracy");
  o.expect(loc >= 0.8, "heat-map localization");
  o.expect(reports.size() == 2, "evaluated splits");
  for (const auto& r : reports) o.expect(r.object_dice >= 0.7, r.split + " object Dice");

  o.detail << std::fixed << std::setprecision(3) << "val acc " << cls.val_accuracy << ", localization "
           << inside_higher << "/" << per_image.size() << " images";
  for (const auto& r : reports) o.detail << ", " << r.split << " Dice " << r.object_dice << " F1 " << r.f1;
  o.detail << std::setprecision(0) << ", " << secs << " s";
}

void reproducibility_statement(Outcome& o, const fs::path& readme) {
  std::ifstream in(readme);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  const auto at = text.find("## Full-scale results");
  o.expect(at != std::string::npos, "README section");
  if (at == std::string::npos) return;
  const auto section = text.substr(at, text.find("\n## ", at + 1) - at);
  for (const char* needle : {"0.929", "97.1", "98.7", "weight manifest", "GLANDSEG_DATA_ROOT", "not reproduced"})
    o.expect(section.find(needle) != std::string::npos, std::string("statement lacks '") + needle + "'");
  o.detail << "README states which full-scale numbers are out of reach and how to supply weights and data";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::set<int> only;
  std::optional<fs::path> keep;
  fs::path config = GLANDSEG_SOURCE_DIR "/configs/smoke.json";
  fs::path readme = GLANDSEG_SOURCE_DIR "/README.md";
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--keep", keep, "Run the smoke pipeline in this directory and keep it");
  app.add_option("--config", config, "Smoke-run configuration")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);
  torch::set_num_threads(1);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"metric oracle equivalence", metric_oracle},
      {"known-value metric fixtures", metric_fixtures},
      {"weighted MSE correctness", weighted_mse_checks},
      {"freezing contract", freezing_contract},
      {"architecture contracts", architecture_contracts},
      {"post-processing properties", postprocess_properties},
      {"data-pipeline counts", data_counts},
      {"end-to-end synthetic smoke run", [&](Outcome& o) { smoke(o, config, keep); }},
      {"full-scale reproducibility statement", [&](Outcome& o) { reproducibility_statement(o, readme); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << "): " << o.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
