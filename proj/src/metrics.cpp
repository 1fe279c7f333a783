#include "glandseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "glandseg/morphology.hpp"

namespace glandseg {

namespace {

struct Box {
  int r0 = 0, c0 = 0, r1 = -1, c1 = -1;  // inclusive
  void add(int r, int c) {
    if (r1 < r0) {
      r0 = r1 = r;
      c0 = c1 = c;
      return;
    }
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
  }
  void merge(const Box& o) {
    if (o.r1 < o.r0) return;
    add(o.r0, o.c0);
    add(o.r1, o.c1);
  }
};

// One side (prediction or ground truth) with labels compacted to 0..n-1.
struct Side {
  std::vector<std::int32_t> labels;  // sorted positive labels
  Raster<std::int32_t> index;        // -1 for background
  std::vector<std::int64_t> area;
  std::vector<Box> box;
  std::vector<std::vector<Offset>> boundary;
  std::vector<Offset> union_boundary;
  Box union_box;

  explicit Side(const InstanceMask& m) : index(m.rows(), m.cols(), -1) {
    for (auto v : m.labels) {
      if (v < 0) throw std::invalid_argument("instance mask contains a negative label");
      if (v > 0) labels.push_back(v);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    area.assign(labels.size(), 0);
    box.assign(labels.size(), Box{});
    boundary.assign(labels.size(), {});
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        const auto v = m.labels(r, c);
        if (v == 0) continue;
        const int k = static_cast<int>(std::lower_bound(labels.begin(), labels.end(), v) - labels.begin());
        index(r, c) = k;
        ++area[k];
        box[k].add(r, c);
        union_box.add(r, c);
      }
    }
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        const int k = index(r, c);
        if (k < 0) continue;
        bool own_edge = false, fg_edge = false;
        static constexpr int dr[] = {-1, 1, 0, 0};
        static constexpr int dc[] = {0, 0, -1, 1};
        for (int i = 0; i < 4; ++i) {
          const int rr = r + dr[i], cc = c + dc[i];
          if (!index.contains(rr, cc)) {
            own_edge = fg_edge = true;
            break;
          }
          const int n = index(rr, cc);
          if (n != k) own_edge = true;
          if (n < 0) fg_edge = true;
        }
        if (own_edge) boundary[k].push_back({r, c});
        if (fg_edge) union_boundary.push_back({r, c});
      }
    }
  }

  std::size_t count() const { return labels.size(); }
  std::int64_t total_area() const {
    std::int64_t s = 0;
    for (auto a : area) s += a;
    return s;
  }
};

struct Pairing {
  Side pred;
  Side gt;
  std::vector<std::int64_t> overlap;  // gt-major: overlap[i * np + j]

  Pairing(const InstanceMask& p, const InstanceMask& g) : pred(p), gt(g) {
    if (!p.labels.same_shape(g.labels)) throw std::invalid_argument("prediction and ground truth differ in shape");
    overlap.assign(gt.count() * pred.count(), 0);
    for (std::size_t i = 0; i < pred.index.size(); ++i) {
      const int gi = gt.index.values()[i], pj = pred.index.values()[i];
      if (gi >= 0 && pj >= 0) ++overlap[gi * pred.count() + pj];
    }
  }

  std::int64_t at(std::size_t gi, std::size_t pj) const { return overlap[gi * pred.count() + pj]; }

  // Opposing object with maximal overlap; lower label wins ties; -1 if none.
  int best_pred_for_gt(std::size_t gi) const {
    int best = -1;
    std::int64_t best_ov = 0;
    for (std::size_t j = 0; j < pred.count(); ++j)
      if (at(gi, j) > best_ov) best_ov = at(gi, j), best = static_cast<int>(j);
    return best;
  }
  int best_gt_for_pred(std::size_t pj) const {
    int best = -1;
    std::int64_t best_ov = 0;
    for (std::size_t i = 0; i < gt.count(); ++i)
      if (at(i, pj) > best_ov) best_ov = at(i, pj), best = static_cast<int>(i);
    return best;
  }
};

double dice(std::int64_t inter, std::int64_t a, std::int64_t b) {
  return a + b == 0 ? 0.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

// Largest distance from any point of `from` to its nearest point of `to`,
// measured with an exact distance transform over `window`.
double directed_hausdorff(const std::vector<Offset>& from, const std::vector<Offset>& to, const Box& window) {
  if (from.empty()) return 0.0;
  if (to.empty()) return std::numeric_limits<double>::infinity();
  BinaryMask target(window.r1 - window.r0 + 1, window.c1 - window.c0 + 1, 0);
  for (const auto& p : to) target(p.row - window.r0, p.col - window.c0) = 1;
  const auto dt = squared_distance_transform(target);
  double worst = 0.0;
  for (const auto& p : from) worst = std::max(worst, dt(p.row - window.r0, p.col - window.c0));
  return std::sqrt(worst);
}

double hausdorff(const std::vector<Offset>& a, const Box& box_a, const std::vector<Offset>& b, const Box& box_b) {
  Box window = box_a;
  window.merge(box_b);
  return std::max(directed_hausdorff(a, b, window), directed_hausdorff(b, a, window));
}

struct SideSums {
  double weighted = 0.0;
  std::int64_t area = 0;
};

double combine(const SideSums& g, const SideSums& s, double both_empty) {
  if (g.area == 0 && s.area == 0) return both_empty;
  const double gt_term = g.area > 0 ? g.weighted / static_cast<double>(g.area) : 0.0;
  const double pred_term = s.area > 0 ? s.weighted / static_cast<double>(s.area) : 0.0;
  return 0.5 * (gt_term + pred_term);
}

struct WeightedSums {
  SideSums gt, pred;
};

WeightedSums dice_sums(const Pairing& p) {
  WeightedSums out;
  for (std::size_t i = 0; i < p.gt.count(); ++i) {
    const int j = p.best_pred_for_gt(i);
    const double d = j < 0 ? 0.0 : dice(p.at(i, j), p.gt.area[i], p.pred.area[j]);
    out.gt.weighted += static_cast<double>(p.gt.area[i]) * d;
    out.gt.area += p.gt.area[i];
  }
  for (std::size_t j = 0; j < p.pred.count(); ++j) {
    const int i = p.best_gt_for_pred(j);
    const double d = i < 0 ? 0.0 : dice(p.at(i, j), p.gt.area[i], p.pred.area[j]);
    out.pred.weighted += static_cast<double>(p.pred.area[j]) * d;
    out.pred.area += p.pred.area[j];
  }
  return out;
}

WeightedSums hausdorff_sums(const Pairing& p, double penalty) {
  WeightedSums out;
  auto side_distance = [&](const Side& self, std::size_t k, const Side& other, int match) {
    if (other.count() == 0) return penalty;
    if (match >= 0) return hausdorff(self.boundary[k], self.box[k], other.boundary[match], other.box[match]);
    return hausdorff(self.boundary[k], self.box[k], other.union_boundary, other.union_box);
  };
  for (std::size_t i = 0; i < p.gt.count(); ++i) {
    const double h = side_distance(p.gt, i, p.pred, p.best_pred_for_gt(i));
    out.gt.weighted += static_cast<double>(p.gt.area[i]) * h;
    out.gt.area += p.gt.area[i];
  }
  for (std::size_t j = 0; j < p.pred.count(); ++j) {
    const double h = side_distance(p.pred, j, p.gt, p.best_gt_for_pred(j));
    out.pred.weighted += static_cast<double>(p.pred.area[j]) * h;
    out.pred.area += p.pred.area[j];
  }
  return out;
}

ObjectCounts f1_counts(const Pairing& p) {
  ObjectCounts counts;
  std::vector<bool> matched(p.gt.count(), false);
  for (std::size_t j = 0; j < p.pred.count(); ++j) {
    int best = -1;
    std::int64_t best_ov = 0;
    for (std::size_t i = 0; i < p.gt.count(); ++i) {
      const auto ov = p.at(i, j);
      if (matched[i] || 2 * ov <= p.gt.area[i]) continue;
      if (ov > best_ov) best_ov = ov, best = static_cast<int>(i);
    }
    if (best >= 0) {
      matched[best] = true;
      ++counts.tp;
    }
  }
  counts.fp = static_cast<std::int64_t>(p.pred.count()) - counts.tp;
  counts.fn = static_cast<std::int64_t>(p.gt.count()) - counts.tp;
  return counts;
}

double default_penalty(const InstanceMask& m, const HausdorffOptions& opts) {
  if (opts.empty_penalty) return *opts.empty_penalty;
  return std::hypot(static_cast<double>(m.rows()), static_cast<double>(m.cols()));
}

}  // namespace

double f1_from_counts(const ObjectCounts& c) {
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom == 0.0 ? 0.0 : 2.0 * c.tp / denom;
}

F1Result object_f1(const InstanceMask& pred, const InstanceMask& gt) {
  const Pairing p(pred, gt);
  F1Result out;
  out.counts = f1_counts(p);
  out.f1 = f1_from_counts(out.counts);
  return out;
}

double object_dice(const InstanceMask& pred, const InstanceMask& gt) {
  const auto s = dice_sums(Pairing(pred, gt));
  return combine(s.gt, s.pred, 1.0);
}

double object_hausdorff(const InstanceMask& pred, const InstanceMask& gt, const HausdorffOptions& opts) {
  const auto s = hausdorff_sums(Pairing(pred, gt), default_penalty(gt, opts));
  return combine(s.gt, s.pred, 0.0);
}

ImageMetrics evaluate_image(const std::string& id, const InstanceMask& pred, const InstanceMask& gt,
                            const HausdorffOptions& opts) {
  const Pairing p(pred, gt);
  ImageMetrics m;
  m.id = id;
  m.pixels = static_cast<std::int64_t>(gt.rows()) * gt.cols();
  m.counts = f1_counts(p);
  m.f1 = f1_from_counts(m.counts);
  const auto d = dice_sums(p);
  const auto h = hausdorff_sums(p, default_penalty(gt, opts));
  m.object_dice = combine(d.gt, d.pred, 1.0);
  m.object_hausdorff = combine(h.gt, h.pred, 0.0);
  m.dice_gt_weighted = d.gt.weighted;
  m.dice_pred_weighted = d.pred.weighted;
  m.haus_gt_weighted = h.gt.weighted;
  m.haus_pred_weighted = h.pred.weighted;
  m.gt_area = d.gt.area;
  m.pred_area = d.pred.area;
  return m;
}

const char* to_string(AggregationMode mode) { return mode == AggregationMode::Pooled ? "pooled" : "per-image"; }

AggregationMode aggregation_mode_from_string(const std::string& s) {
  if (s == "pooled") return AggregationMode::Pooled;
  if (s == "per-image" || s == "per_image") return AggregationMode::PerImage;
  throw std::invalid_argument("unknown aggregation mode '" + s + "' (expected pooled or per-image)");
}

MetricsReport aggregate(const std::vector<ImageMetrics>& per_image, const std::string& split, AggregationMode mode) {
  if (per_image.empty()) throw std::invalid_argument("aggregate: split '" + split + "' has no images");
  MetricsReport r;
  r.split = split;
  r.mode = mode;
  r.per_image = per_image;
  for (const auto& m : per_image) r.counts += m.counts;
  r.f1 = f1_from_counts(r.counts);

  if (mode == AggregationMode::Pooled) {
    SideSums dg, dp, hg, hp;
    for (const auto& m : per_image) {
      dg.weighted += m.dice_gt_weighted;
      dp.weighted += m.dice_pred_weighted;
      hg.weighted += m.haus_gt_weighted;
      hp.weighted += m.haus_pred_weighted;
      dg.area += m.gt_area;
      hg.area += m.gt_area;
      dp.area += m.pred_area;
      hp.area += m.pred_area;
    }
    r.object_dice = combine(dg, dp, 1.0);
    r.object_hausdorff = combine(hg, hp, 0.0);
  } else {
    double total = 0.0, dice_acc = 0.0, haus_acc = 0.0;
    for (const auto& m : per_image) {
      const double w = static_cast<double>(m.pixels);
      total += w;
      dice_acc += w * m.object_dice;
      haus_acc += w * m.object_hausdorff;
    }
    r.object_dice = dice_acc / total;
    r.object_hausdorff = haus_acc / total;
  }
  return r;
}

void write_report_csv(std::ostream& os, const MetricsReport& report) {
  os << "split,mode,image,tp,fp,fn,f1,object_dice,object_hausdorff\n";
  os << std::setprecision(10);
  for (const auto& m : report.per_image) {
    os << report.split << ',' << to_string(report.mode) << ',' << m.id << ',' << m.counts.tp << ',' << m.counts.fp
       << ',' << m.counts.fn << ',' << m.f1 << ',' << m.object_dice << ',' << m.object_hausdorff << '\n';
  }
  os << report.split << ',' << to_string(report.mode) << ",ALL," << report.counts.tp << ',' << report.counts.fp << ','
     << report.counts.fn << ',' << report.f1 << ',' << report.object_dice << ',' << report.object_hausdorff << '\n';
}

void write_summary_table(std::ostream& os, const std::vector<MetricsReport>& reports) {
  os << std::left << std::setw(10) << "split" << std::setw(11) << "mode" << std::right << std::setw(10) << "F1"
     << std::setw(10) << "ObjDice" << std::setw(12) << "ObjHaus" << std::setw(8) << "images" << '\n';
  os << std::string(61, '-') << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(10) << r.split << std::setw(11) << to_string(r.mode) << std::right << std::fixed
       << std::setprecision(3) << std::setw(10) << r.f1 << std::setw(10) << r.object_dice << std::setw(12)
       << r.object_hausdorff << std::setw(8) << r.per_image.size() << '\n';
  }
  os.unsetf(std::ios::fixed);
}

}  // namespace glandseg
