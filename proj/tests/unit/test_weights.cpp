#include "../support/torch_doctest.hpp"

#include "../support/temp_dir.hpp"
#include "../support/tiny_models.hpp"
#include "glandseg/weights.hpp"

using namespace glandseg;

TEST_CASE("weights round trip through the manifest") {
  test::TempDir tmp;
  torch::manual_seed(1);
  VisionClassifier a(test::tiny_classifier());
  weights::save(tmp.path() / "ck", *a, {{"model", "vision_classifier"}});
  CHECK(weights::exists(tmp.path() / "ck"));
  CHECK(weights::load_metadata(tmp.path() / "ck")["model"] == "vision_classifier");

  const auto m = weights::load(tmp.path() / "ck");
  const auto src = weights::state_of(*a);
  CHECK(m.tensors.size() == src.size());
  CHECK(weights::checksum(m.tensors) == weights::checksum(src));

  torch::manual_seed(2);
  VisionClassifier b(test::tiny_classifier());
  CHECK(weights::checksum(weights::state_of(*b)) != weights::checksum(src));
  const auto rep = weights::apply(*b, m.tensors, weights::Mode::Strict);
  CHECK(rep.complete());
  CHECK(rep.loaded.size() == src.size());
  for (const auto& [n, t] : weights::state_of(*b)) CHECK(weights::bitwise_equal(t, src.at(n)));
}

TEST_CASE("mixed dtypes survive the manifest") {
  test::TempDir tmp;
  weights::NamedTensors t{{"a", torch::arange(6, torch::kInt64).view({2, 3})},
                          {"b", torch::rand({4}, torch::kFloat64)},
                          {"c", torch::tensor({1, 0, 1}, torch::kUInt8)}};
  weights::save(tmp.path(), t);
  const auto back = weights::load(tmp.path()).tensors;
  for (const auto& [n, v] : t) CHECK(weights::bitwise_equal(v, back.at(n)));
}

TEST_CASE("strict loading lists offenders; permissive loading reports them") {
  torch::manual_seed(3);
  VisionClassifier model(test::tiny_classifier());
  auto src = weights::state_of(*model);
  const auto head_before = model->head->weight.detach().clone();
  src.erase("norm.weight");
  src["head.weight"] = torch::zeros({3, 16});
  src["extra.thing"] = torch::zeros({1});

  CHECK_THROWS_WITH_AS(weights::apply(*model, src, weights::Mode::Strict), doctest::Contains("norm.weight"),
                       std::runtime_error);
  const auto rep = weights::apply(*model, src, weights::Mode::Permissive);
  CHECK(rep.missing == std::vector<std::string>{"norm.weight"});
  CHECK(rep.unexpected == std::vector<std::string>{"extra.thing"});
  REQUIRE(rep.mismatched.size() == 1);
  CHECK(rep.mismatched[0].name == "head.weight");
  CHECK_FALSE(rep.complete());
  CHECK(weights::bitwise_equal(model->head->weight, head_before));
  CHECK(rep.summary().find("norm.weight") != std::string::npos);
}

TEST_CASE("position tables are resampled to the target grid") {
  torch::manual_seed(4);
  VisionClassifier small(test::tiny_classifier(32, 8));
  VisionClassifier large(test::tiny_classifier(48, 8));
  const auto rep = weights::apply(*large, weights::state_of(*small), weights::Mode::Strict);
  CHECK(rep.resized == std::vector<std::string>{"pos_embed"});
  CHECK(large->pos_embed.size(1) == 1 + 36);
  // The class-token entry is carried over unchanged.
  CHECK(torch::equal(large->pos_embed[0][0], small->pos_embed[0][0]));
}

TEST_CASE("prefix rules can read one source twice") {
  torch::manual_seed(5);
  PromptedSegmenter model(test::tiny_segmenter());
  weights::NamedTensors src;
  for (const auto& [n, t] : weights::state_of(*model))
    if (n.rfind("contour_", 0) != 0) src.emplace(n, torch::randn_like(t.to(torch::kFloat32)).to(t.dtype()));
  const auto rep = weights::apply(*model, src, weights::Mode::Strict,
                                  {{"gland_prompt_encoder.", "contour_prompt_encoder."},
                                   {"gland_decoder.", "contour_decoder."}});
  CHECK(rep.complete());
  const auto st = weights::state_of(*model);
  std::map<std::string, torch::Tensor> gland, contour;
  for (const auto& [n, t] : st) {
    if (n.rfind("gland_decoder.", 0) == 0) gland[n.substr(14)] = t;
    if (n.rfind("contour_decoder.", 0) == 0) contour[n.substr(16)] = t;
  }
  REQUIRE(gland.size() == contour.size());
  weights::NamedTensors g(gland.begin(), gland.end()), c(contour.begin(), contour.end());
  CHECK(weights::checksum(g) == weights::checksum(c));
}

TEST_CASE("checksum reacts to a single changed value") {
  auto t = torch::rand({10});
  const auto before = weights::checksum(t);
  t[3] += 1.0f;
  CHECK(weights::checksum(t) != before);
  CHECK(weights::bitwise_equal(t, t.clone()));
  CHECK_FALSE(weights::bitwise_equal(t, t.to(torch::kFloat64)));
}
