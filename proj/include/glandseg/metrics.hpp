#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "glandseg/raster.hpp"

namespace glandseg {

struct ObjectCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  ObjectCounts& operator+=(const ObjectCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ObjectCounts&, const ObjectCounts&) = default;
};

/// F1 = 2PR/(P+R), 0 when P+R = 0. No objects on either side counts as a
/// perfect score.
double f1_from_counts(const ObjectCounts& counts);

struct F1Result {
  ObjectCounts counts;
  double f1 = 0.0;
};

/// A predicted object is a true positive when it covers more than half of a
/// ground-truth object; each ground-truth object is matched at most once.
F1Result object_f1(const InstanceMask& pred, const InstanceMask& gt);

/// Object-level Dice, weighted by object area in both directions. Two empty
/// maps score 1.
double object_dice(const InstanceMask& pred, const InstanceMask& gt);

struct HausdorffOptions {
  /// Distance used when the opposing map has no objects. Defaults to the
  /// image diagonal.
  std::optional<double> empty_penalty;
};

/// Object-level Hausdorff on 4-connected inner boundaries.
double object_hausdorff(const InstanceMask& pred, const InstanceMask& gt, const HausdorffOptions& opts = {});

/// Everything needed to combine one image into a split-level score, either
/// pooled over objects or averaged over images.
struct ImageMetrics {
  std::string id;
  std::int64_t pixels = 0;
  ObjectCounts counts;
  double f1 = 0.0;
  double object_dice = 0.0;
  double object_hausdorff = 0.0;

  // Area-weighted partial sums: sum_i |G_i| * m_i and sum_i |G_i| (and the
  // same over predicted objects).
  double dice_gt_weighted = 0.0;
  double dice_pred_weighted = 0.0;
  double haus_gt_weighted = 0.0;
  double haus_pred_weighted = 0.0;
  std::int64_t gt_area = 0;
  std::int64_t pred_area = 0;
};

ImageMetrics evaluate_image(const std::string& id, const InstanceMask& pred, const InstanceMask& gt,
                            const HausdorffOptions& opts = {});

enum class AggregationMode { Pooled, PerImage };

const char* to_string(AggregationMode mode);
AggregationMode aggregation_mode_from_string(const std::string& s);

struct MetricsReport {
  std::string split;
  AggregationMode mode = AggregationMode::Pooled;
  double f1 = 0.0;
  double object_dice = 0.0;
  double object_hausdorff = 0.0;
  ObjectCounts counts;
  std::vector<ImageMetrics> per_image;
};

/// F1 always comes from pooled counts. Dice and Hausdorff pool objects across
/// the split (contest convention) or take a pixel-count-weighted mean of the
/// per-image values.
MetricsReport aggregate(const std::vector<ImageMetrics>& per_image, const std::string& split,
                        AggregationMode mode = AggregationMode::Pooled);

void write_report_csv(std::ostream& os, const MetricsReport& report);
void write_summary_table(std::ostream& os, const std::vector<MetricsReport>& reports);

}  // namespace glandseg
