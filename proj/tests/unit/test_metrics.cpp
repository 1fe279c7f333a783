#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "glandseg/metrics.hpp"

using namespace glandseg;

namespace {

InstanceMask paint(int rows, int cols, std::initializer_list<std::tuple<int, int, int, int, int>> boxes) {
  InstanceMask m(rows, cols);
  for (const auto& [label, r0, c0, h, w] : boxes)
    for (int r = r0; r < r0 + h; ++r)
      for (int c = c0; c < c0 + w; ++c) m.labels(r, c) = label;
  return m;
}

InstanceMask permute_labels(const InstanceMask& m, std::mt19937& rng) {
  std::vector<std::int32_t> map(m.max_label() + 1);
  std::iota(map.begin(), map.end(), 0);
  std::shuffle(map.begin() + 1, map.end(), rng);
  InstanceMask out = m;
  for (auto& v : out.labels) v = map[v] * 3;  // also makes labels sparse
  return out;
}

}  // namespace

TEST_CASE("identical maps score perfectly") {
  const auto gt = paint(12, 12, {{1, 0, 0, 3, 4}, {2, 5, 5, 4, 4}, {7, 10, 0, 2, 12}});
  CHECK(object_f1(gt, gt).f1 == 1.0);
  CHECK(object_dice(gt, gt) == 1.0);
  CHECK(object_hausdorff(gt, gt) == 0.0);
}

TEST_CASE("one matched object plus one spurious blob gives F1 0.5") {
  const auto gt = paint(10, 10, {{1, 1, 1, 3, 3}, {2, 6, 6, 3, 3}});
  const auto pred = paint(10, 10, {{1, 1, 1, 3, 3}, {2, 6, 0, 2, 2}});
  const auto r = object_f1(pred, gt);
  CHECK(r.counts == ObjectCounts{1, 1, 1});
  CHECK(r.f1 == 0.5);
}

TEST_CASE("empty prediction against objects gives F1 0 and Dice 0") {
  const auto gt = paint(10, 10, {{1, 1, 1, 3, 3}});
  const InstanceMask pred(10, 10);
  CHECK(object_f1(pred, gt).f1 == 0.0);
  CHECK(object_dice(pred, gt) == 0.0);
}

TEST_CASE("both maps empty follow the recorded conventions") {
  const InstanceMask a(8, 8);
  CHECK(object_f1(a, a).f1 == 1.0);
  CHECK(object_dice(a, a) == 1.0);
  CHECK(object_hausdorff(a, a) == 0.0);
}

TEST_CASE("square shifted to half overlap has object Dice 0.5") {
  const auto gt = paint(8, 8, {{1, 2, 1, 4, 4}});
  const auto pred = paint(8, 8, {{1, 2, 3, 4, 4}});
  CHECK(object_dice(pred, gt) == 0.5);
}

TEST_CASE("single pixels at a 3-4-5 distance") {
  const auto gt = paint(6, 6, {{1, 0, 0, 1, 1}});
  const auto pred = paint(6, 6, {{1, 3, 4, 1, 1}});
  CHECK(object_hausdorff(pred, gt) == 5.0);
}

TEST_CASE("Hausdorff penalty applies when the opposing map is empty") {
  const auto gt = paint(6, 8, {{1, 0, 0, 2, 2}});
  const InstanceMask pred(6, 8);
  CHECK(object_hausdorff(pred, gt, {.empty_penalty = 40.0}) == doctest::Approx(20.0));
  CHECK(object_hausdorff(pred, gt) == doctest::Approx(0.5 * 10.0));  // diagonal of 6x8
}

TEST_CASE("a prediction covering two objects is matched once") {
  const auto gt = paint(10, 10, {{1, 0, 0, 4, 4}, {2, 0, 5, 4, 4}});
  const auto pred = paint(10, 10, {{1, 0, 0, 4, 10}});
  const auto r = object_f1(pred, gt);
  CHECK(r.counts == ObjectCounts{1, 0, 1});
}

TEST_CASE("metrics agree with brute-force oracles on random maps") {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    const int rows = 6 + rng() % 20, cols = 6 + rng() % 20;
    const auto gt = oracle::random_instances(rng, rows, cols, 5);
    const auto pred = oracle::random_instances(rng, rows, cols, 5);
    const auto counts = object_f1(pred, gt).counts;
    const auto expected = oracle::f1_counts(pred, gt);
    CHECK(counts.tp == expected.tp);
    CHECK(counts.fp == expected.fp);
    CHECK(counts.fn == expected.fn);
    CHECK(object_dice(pred, gt) == doctest::Approx(oracle::object_dice(pred, gt)).epsilon(1e-12));
    const double penalty = std::hypot(double(rows), double(cols));
    CHECK(object_hausdorff(pred, gt) == doctest::Approx(oracle::object_hausdorff(pred, gt, penalty)).epsilon(1e-12));
  }
}

TEST_CASE("metrics are invariant to label permutation and Dice/Hausdorff are symmetric") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const auto gt = oracle::random_instances(rng, 20, 20, 5);
    const auto pred = oracle::random_instances(rng, 20, 20, 5);
    const auto gt2 = permute_labels(gt, rng), pred2 = permute_labels(pred, rng);
    CHECK(object_f1(pred, gt).f1 == object_f1(pred2, gt2).f1);
    CHECK(object_dice(pred, gt) == doctest::Approx(object_dice(pred2, gt2)).epsilon(1e-12));
    CHECK(object_hausdorff(pred, gt) == doctest::Approx(object_hausdorff(pred2, gt2)).epsilon(1e-12));
    CHECK(object_dice(pred, gt) == doctest::Approx(object_dice(gt, pred)).epsilon(1e-12));
    CHECK(object_hausdorff(pred, gt) == doctest::Approx(object_hausdorff(gt, pred)).epsilon(1e-12));
    const auto c = object_f1(pred, gt).counts;
    CHECK(c.tp <= std::min(c.tp + c.fp, c.tp + c.fn));
  }
}

TEST_CASE("aggregation") {
  const auto gt = paint(10, 10, {{1, 1, 1, 3, 3}, {2, 6, 6, 3, 3}});
  const auto pred = paint(10, 10, {{1, 1, 1, 3, 3}, {2, 6, 0, 2, 2}});
  const auto one = evaluate_image("a", pred, gt);

  SUBCASE("one image equals its per-image values") {
    for (auto mode : {AggregationMode::Pooled, AggregationMode::PerImage}) {
      const auto r = aggregate({one}, "testA", mode);
      CHECK(r.f1 == doctest::Approx(one.f1));
      CHECK(r.object_dice == doctest::Approx(one.object_dice));
      CHECK(r.object_hausdorff == doctest::Approx(one.object_hausdorff));
    }
  }
  SUBCASE("duplicating an image does not change the aggregate") {
    for (auto mode : {AggregationMode::Pooled, AggregationMode::PerImage}) {
      const auto a = aggregate({one}, "testA", mode);
      const auto b = aggregate({one, one}, "testA", mode);
      CHECK(a.f1 == doctest::Approx(b.f1));
      CHECK(a.object_dice == doctest::Approx(b.object_dice));
      CHECK(a.object_hausdorff == doctest::Approx(b.object_hausdorff));
    }
  }
  SUBCASE("empty split is an error") { CHECK_THROWS_AS(aggregate({}, "testB"), std::invalid_argument); }
  SUBCASE("pooled mode weights objects across images") {
    const auto big = paint(10, 10, {{1, 0, 0, 8, 8}});
    const auto shifted = paint(10, 10, {{1, 0, 4, 8, 4}});
    const auto m1 = evaluate_image("big", big, big);        // Dice 1, area 64
    const auto m2 = evaluate_image("small", shifted, gt);   // small objects
    const auto pooled = aggregate({m1, m2}, "x", AggregationMode::Pooled);
    const double expect = 0.5 * ((m1.dice_gt_weighted + m2.dice_gt_weighted) / double(m1.gt_area + m2.gt_area) +
                                 (m1.dice_pred_weighted + m2.dice_pred_weighted) / double(m1.pred_area + m2.pred_area));
    CHECK(pooled.object_dice == doctest::Approx(expect));
    const auto mean = aggregate({m1, m2}, "x", AggregationMode::PerImage);
    CHECK(mean.object_dice == doctest::Approx(0.5 * (m1.object_dice + m2.object_dice)));
  }
}
