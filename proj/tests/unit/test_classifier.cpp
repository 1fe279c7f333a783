#include "../support/torch_doctest.hpp"

#include "../support/temp_dir.hpp"
#include "../support/tiny_models.hpp"
#include "glandseg/cam.hpp"
#include "glandseg/tensor_convert.hpp"

using namespace glandseg;

namespace {

// Scalar-loop Grad-CAM++ for a single [C, G, G] pair.
std::vector<double> loop_gradcam_pp(const torch::Tensor& act, const torch::Tensor& grad) {
  auto a = act.to(torch::kFloat64).contiguous(), g = grad.to(torch::kFloat64).contiguous();
  const auto c = a.size(0), h = a.size(1), w = a.size(2);
  const double* ap = a.data_ptr<double>();
  const double* gp = g.data_ptr<double>();
  std::vector<double> cam(static_cast<std::size_t>(h * w), 0.0);
  for (std::int64_t k = 0; k < c; ++k) {
    double asum = 0.0;
    for (std::int64_t i = 0; i < h * w; ++i) asum += ap[k * h * w + i];
    double wk = 0.0;
    for (std::int64_t i = 0; i < h * w; ++i) {
      const double gv = gp[k * h * w + i];
      const double den = 2 * gv * gv + asum * gv * gv * gv;
      const double alpha = den != 0.0 ? gv * gv / den : 0.0;
      wk += alpha * std::max(gv, 0.0);
    }
    for (std::int64_t i = 0; i < h * w; ++i) cam[static_cast<std::size_t>(i)] += wk * ap[k * h * w + i];
  }
  for (auto& v : cam) v = std::max(v, 0.0);
  return cam;
}

std::vector<ClassifierSample> random_patches(int n, int size, std::uint64_t seed) {
  torch::manual_seed(seed);
  std::vector<ClassifierSample> out;
  for (int i = 0; i < n; ++i) {
    ClassifierSample s;
    s.image = torch::randint(0, 256, {3, size, size}).to(torch::kUInt8);
    s.grade = i % 2 ? Grade::Malignant : Grade::Benign;
    s.source_id = "src" + std::to_string(i / 2);
    s.rotation = i % 4;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("classifier output shapes and input checks") {
  torch::manual_seed(1);
  VisionClassifier model(test::tiny_classifier());
  model->eval();
  auto out = model->forward(torch::randn({3, 3, 32, 32}));
  CHECK((out.logits.sizes() == torch::IntArrayRef{3, 2}));
  CHECK((out.feature_grid.sizes() == torch::IntArrayRef{3, 16, 4, 4}));
  CHECK_THROWS(model->forward(torch::randn({1, 3, 40, 40})));

  auto bad = test::tiny_classifier();
  bad.token_patch_size = 7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("a zeroed head returns its bias for every image") {
  torch::manual_seed(2);
  VisionClassifier model(test::tiny_classifier());
  model->eval();
  torch::NoGradGuard g;
  model->head->weight.zero_();
  model->head->bias.copy_(torch::tensor({0.25f, -1.5f}));
  auto logits = model->forward(torch::randn({4, 3, 32, 32})).logits;
  CHECK(torch::equal(logits, torch::tensor({0.25f, -1.5f}).expand({4, 2})));
}

TEST_CASE("evaluation-mode classifier is deterministic") {
  torch::manual_seed(3);
  VisionClassifier model(test::tiny_classifier());
  model->eval();
  torch::NoGradGuard g;
  auto x = torch::randn({2, 3, 32, 32});
  CHECK(torch::equal(model->forward(x).logits, model->forward(x).logits));
}

TEST_CASE("without position embeddings the classifier is patch-permutation equivariant") {
  torch::manual_seed(4);
  VisionClassifier model(test::tiny_classifier());
  model->eval();
  torch::NoGradGuard g;
  model->pos_embed.zero_();
  auto x = torch::randn({1, 3, 32, 32});
  auto y = x.clone();
  // Swap the patch at grid (0, 0) with the one at (2, 3).
  auto p = x.narrow(2, 0, 8).narrow(3, 0, 8).clone();
  auto q = x.narrow(2, 16, 8).narrow(3, 24, 8).clone();
  y.narrow(2, 0, 8).narrow(3, 0, 8).copy_(q);
  y.narrow(2, 16, 8).narrow(3, 24, 8).copy_(p);

  auto a = model->forward(x), b = model->forward(y);
  auto ga = a.feature_grid.clone();
  auto t = ga.select(2, 0).select(2, 0).clone();
  ga.select(2, 0).select(2, 0).copy_(ga.select(2, 2).select(2, 3));
  ga.select(2, 2).select(2, 3).copy_(t);
  CHECK(torch::allclose(ga, b.feature_grid, 1e-5, 1e-5));
  CHECK(torch::allclose(a.logits, b.logits, 1e-5, 1e-5));
}

TEST_CASE("batch rotation agrees with raster rotation") {
  RgbImage img(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<std::uint8_t>(r * 29 + c * 7 + ch * 61);
  std::vector<ClassifierSample> s(1);
  s[0].image = image_to_u8_tensor(img);
  for (int k = 0; k < 4; ++k) {
    s[0].rotation = k;
    CHECK(torch::equal(make_image_batch(s, {0})[0], image_to_tensor(rotate_quarter_turns(img, k))));
  }
}

TEST_CASE("source split keeps sources together and holds out both grades") {
  const auto samples = random_patches(40, 8, 5);
  const auto split = split_by_source(samples, 0.2, 9);
  std::set<std::string> train_src, val_src;
  std::set<Grade> val_grades;
  for (auto i : split.train) train_src.insert(samples[i].source_id);
  for (auto i : split.val) {
    val_src.insert(samples[i].source_id);
    val_grades.insert(samples[i].grade);
  }
  CHECK(split.train.size() + split.val.size() == samples.size());
  for (const auto& s : val_src) CHECK(train_src.count(s) == 0);
  CHECK(val_grades.size() == 2);
  const auto again = split_by_source(samples, 0.2, 9);
  CHECK(again.val == split.val);
}

TEST_CASE("classifier training memorises a tiny set and refuses empty splits") {
  torch::manual_seed(6);
  VisionClassifier model(test::tiny_classifier());
  auto samples = random_patches(4, 32, 7);
  for (auto& s : samples) s.rotation = 0;
  SourceSplit split{{0, 1, 2, 3}, {0, 1, 2, 3}};
  ClassifierTrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  cfg.weight_decay = 0.0;
  const auto rep = train_classifier(model, samples, split, cfg);
  CHECK(rep.best_val_accuracy == 1.0);
  CHECK(classifier_accuracy(model, samples, split.val) == 1.0);
  CHECK_THROWS(train_classifier(model, samples, SourceSplit{{0}, {}}, cfg));
}

TEST_CASE("Grad-CAM++ matches a scalar loop") {
  torch::manual_seed(8);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = torch::randn({6, 5, 5}, torch::kFloat64);
    auto g = torch::randn({6, 5, 5}, torch::kFloat64) * 0.3;
    const auto cam = gradcam_pp_map(a, g).contiguous();
    const auto expected = loop_gradcam_pp(a, g);
    for (std::size_t i = 0; i < expected.size(); ++i)
      CHECK(cam.view(-1)[static_cast<std::int64_t>(i)].item<double>() == doctest::Approx(expected[i]).epsilon(1e-10));
  }
  // Batched and per-item evaluation agree.
  auto a = torch::rand({3, 4, 5, 5}), g = torch::randn({3, 4, 5, 5});
  auto batched = gradcam_pp_map(a, g);
  for (int i = 0; i < 3; ++i) CHECK(torch::allclose(batched[i], gradcam_pp_map(a[i], g[i])));
}

TEST_CASE("Grad-CAM++ single-channel hand example") {
  // A sums to 2, uniform g = 0.5: alpha = 0.25 / (0.5 + 0.25) = 1/3 and
  // w = 4 * (1/3) * 0.5 = 2/3, so L = relu(2/3 A).
  auto a = torch::tensor({1.0, -2.0, 3.0, 0.0}, torch::kFloat64).view({1, 2, 2});
  auto g = torch::full({1, 2, 2}, 0.5, torch::kFloat64);
  auto cam = gradcam_pp_map(a, g);
  auto expected = torch::tensor({2.0 / 3.0, 0.0, 2.0, 0.0}, torch::kFloat64).view({2, 2});
  CHECK(torch::allclose(cam, expected, 1e-12, 1e-12));
}

TEST_CASE("Grad-CAM++ with vanishing gradients is all zero") {
  auto a = torch::rand({4, 3, 3});
  CHECK(gradcam_pp_map(a, torch::zeros_like(a)).abs().max().item<float>() == 0.0f);
  CHECK_THROWS_AS(gradcam_pp_map(a, torch::zeros({4, 3, 2})), std::invalid_argument);
}

TEST_CASE("single-channel Grad-CAM++ keeps its argmax under score scaling") {
  torch::manual_seed(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = torch::rand({1, 6, 6}, torch::kFloat64);
    auto g = torch::randn({1, 6, 6}, torch::kFloat64);
    const auto ref = gradcam_pp_map(a, g).argmax().item<std::int64_t>();
    const bool flat = gradcam_pp_map(a, g).max().item<double>() == 0.0;
    for (double c : {0.1, 0.5, 2.0, 10.0}) {
      auto cam = gradcam_pp_map(a, g * c);
      if (flat) {
        CHECK(cam.max().item<double>() == 0.0);
      } else {
        CHECK(cam.argmax().item<std::int64_t>() == ref);
      }
    }
  }
}

TEST_CASE("finalised maps lie in [0, 1] and a constant map becomes zero") {
  auto m = torch::rand({5, 5}) * 3.0;
  const auto up = finalize_cam(m, 40);
  CHECK(up.rows() == 40);
  float lo = 1.0f, hi = 0.0f;
  for (float v : up) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == doctest::Approx(0.0f));
  CHECK(hi == doctest::Approx(1.0f));
  for (float v : finalize_cam(torch::full({5, 5}, 2.0f), 20)) CHECK(v == 0.0f);
}

TEST_CASE("classifier heat maps: size, range, determinism, constant score") {
  torch::manual_seed(11);
  VisionClassifier model(test::tiny_classifier());
  auto x = torch::randn({2, 3, 32, 32});
  const auto a = gradcam_pp(model, x), b = gradcam_pp(model, x);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i].values.rows() == 32);
    CHECK(a[i].values == b[i].values);
    for (float v : a[i].values) CHECK((v >= 0.0f && v <= 1.0f));
  }
  const auto forced = gradcam_pp(model, x, CamOptions{Grade::Malignant});
  CHECK(forced[0].target_class == Grade::Malignant);

  {
    torch::NoGradGuard g;
    model->head->weight.zero_();
  }
  for (const auto& h : gradcam_pp(model, x))
    for (float v : h.values) CHECK(v == 0.0f);
}

TEST_CASE("heat-map store round trip") {
  test::TempDir tmp;
  HeatMapStore store(tmp.path());
  FloatRaster v(4, 4, 0.25f);
  v(1, 2) = 0.75f;
  store.put({"train_3", {0, 100}, 2, Grade::Malignant, ""}, v);
  store.put({"train_1", {100, 0}, 0, Grade::Benign, ""}, v);
  store.write_manifest();
  CHECK(heatmap_key("train_3", {0, 100}, 2) == "train_3_r0_c100_rot2");

  HeatMapStore back(tmp.path());
  back.read_manifest();
  REQUIRE(back.entries().size() == 2);
  CHECK(back.entries()[0].source_id == "train_1");
  CHECK(back.entries()[1].target_class == Grade::Malignant);
  CHECK(back.get("train_3", {0, 100}, 2) == v);
  CHECK_THROWS(back.get("train_3", {0, 100}, 1));
}
