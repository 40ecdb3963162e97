#include "msm/metrics.hpp"

#include "msm/losses.hpp"

#include <json.hpp>

#include <stdexcept>

namespace msm {

namespace {

void require_same_size(const LabelMap& a, const LabelMap& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("label maps differ in size");
}

struct ObjectSet {
  std::vector<std::int32_t> ids;
  std::vector<MaskArray> masks;
  std::vector<double> areas;
};

ObjectSet objects_of(const LabelMap& labels) {
  ObjectSet set;
  set.ids = object_ids(labels);
  for (std::int32_t id : set.ids) {
    MaskArray m = labels == id;
    set.areas.push_back(static_cast<double>(m.count()));
    set.masks.push_back(std::move(m));
  }
  return set;
}

Matrix pairwise_f(const ObjectSet& pred, const ObjectSet& gt) {
  Matrix f = Matrix::Zero(static_cast<Index>(pred.ids.size()), static_cast<Index>(gt.ids.size()));
  for (std::size_t i = 0; i < pred.ids.size(); ++i) {
    for (std::size_t j = 0; j < gt.ids.size(); ++j) {
      const double inter = static_cast<double>((pred.masks[i] && gt.masks[j]).count());
      f(static_cast<Index>(i), static_cast<Index>(j)) = 2.0 * inter / (pred.areas[i] + gt.areas[j]);
    }
  }
  return f;
}

}  // namespace

PRF prf_from_counts(double tp_p, double predicted, double tp_r, double expected) {
  PRF out;
  if (predicted > 0) {
    out.p = tp_p / predicted;
  } else {
    out.p = expected > 0 ? 0.0 : 1.0;
  }
  if (expected > 0) {
    out.r = tp_r / expected;
  } else {
    out.r = predicted > 0 ? 0.0 : 1.0;
  }
  out.f = (out.p + out.r) > 0 ? 2.0 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

ImageCounts& ImageCounts::operator+=(const ImageCounts& o) {
  overlap_tp += o.overlap_tp;
  pred_area += o.pred_area;
  gt_area += o.gt_area;
  boundary_tp_p += o.boundary_tp_p;
  pred_boundary += o.pred_boundary;
  boundary_tp_r += o.boundary_tp_r;
  gt_boundary += o.gt_boundary;
  pred_objects += o.pred_objects;
  gt_objects += o.gt_objects;
  gt_objects_f75 += o.gt_objects_f75;
  return *this;
}

PRF ImageCounts::overlap() const { return prf_from_counts(overlap_tp, pred_area, overlap_tp, gt_area); }

PRF ImageCounts::boundary() const {
  return prf_from_counts(boundary_tp_p, pred_boundary, boundary_tp_r, gt_boundary);
}

double ImageCounts::f75() const {
  if (gt_objects == 0) return pred_objects == 0 ? 100.0 : 0.0;
  return 100.0 * static_cast<double>(gt_objects_f75) / static_cast<double>(gt_objects);
}

Matrix pairwise_f(const LabelMap& pred, const LabelMap& gt) {
  require_same_size(pred, gt);
  return pairwise_f(objects_of(pred), objects_of(gt));
}

MaskArray mask_boundary(const MaskArray& mask) {
  const Index h = mask.rows(), w = mask.cols();
  MaskArray out = MaskArray::Constant(h, w, false);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const bool inside = y > 0 && y + 1 < h && x > 0 && x + 1 < w && mask(y - 1, x) && mask(y + 1, x) &&
                          mask(y, x - 1) && mask(y, x + 1);
      out(y, x) = !inside;
    }
  }
  return out;
}

MaskArray dilate(const MaskArray& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: radius must be >= 0");
  if (radius == 0) return mask;
  const Index h = mask.rows(), w = mask.cols();
  MaskArray rows = MaskArray::Constant(h, w, false);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      for (Index dx = std::max<Index>(0, x - radius); dx <= std::min<Index>(w - 1, x + radius); ++dx) rows(y, dx) = true;
    }
  }
  MaskArray out = MaskArray::Constant(h, w, false);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (!rows(y, x)) continue;
      for (Index dy = std::max<Index>(0, y - radius); dy <= std::min<Index>(h - 1, y + radius); ++dy) out(dy, x) = true;
    }
  }
  return out;
}

ImageCounts evaluate_image(const LabelMap& pred, const LabelMap& gt, int boundary_dilation) {
  require_same_size(pred, gt);
  if (boundary_dilation < 0) throw std::invalid_argument("boundary dilation must be >= 0");
  const ObjectSet p = objects_of(pred);
  const ObjectSet g = objects_of(gt);
  ImageCounts counts;
  counts.pred_objects = static_cast<Index>(p.ids.size());
  counts.gt_objects = static_cast<Index>(g.ids.size());
  for (double a : p.areas) counts.pred_area += a;
  for (double a : g.areas) counts.gt_area += a;

  std::vector<MaskArray> pb, gb;
  for (const auto& m : p.masks) {
    pb.push_back(mask_boundary(m));
    counts.pred_boundary += static_cast<double>(pb.back().count());
  }
  for (const auto& m : g.masks) {
    gb.push_back(mask_boundary(m));
    counts.gt_boundary += static_cast<double>(gb.back().count());
  }
  if (p.ids.empty() || g.ids.empty()) return counts;

  const Matrix f = pairwise_f(p, g);
  const Matching matching = hungarian(-f);
  for (const auto& [i, j] : matching.pairs) {
    const auto si = static_cast<std::size_t>(i), sj = static_cast<std::size_t>(j);
    counts.overlap_tp += static_cast<double>((p.masks[si] && g.masks[sj]).count());
    counts.boundary_tp_p += static_cast<double>((pb[si] && dilate(gb[sj], boundary_dilation)).count());
    counts.boundary_tp_r += static_cast<double>((gb[sj] && dilate(pb[si], boundary_dilation)).count());
    if (f(i, j) >= 0.75) ++counts.gt_objects_f75;
  }
  return counts;
}

PRF overlap_prf(const LabelMap& pred, const LabelMap& gt) { return evaluate_image(pred, gt).overlap(); }

PRF boundary_prf(const LabelMap& pred, const LabelMap& gt, int dilation) {
  return evaluate_image(pred, gt, dilation).boundary();
}

double f75(const LabelMap& pred, const LabelMap& gt) { return evaluate_image(pred, gt).f75(); }

MetricsReport MetricsReport::aggregate(std::vector<std::string> names, std::vector<ImageCounts> per_image,
                                       int boundary_dilation) {
  if (names.size() != per_image.size()) throw std::invalid_argument("aggregate: names and counts differ in length");
  ImageCounts total;
  for (const auto& c : per_image) total += c;
  MetricsReport report;
  report.overlap = total.overlap();
  report.boundary = total.boundary();
  report.f75 = total.f75();
  report.boundary_dilation = boundary_dilation;
  report.image_names = std::move(names);
  report.per_image = std::move(per_image);
  return report;
}

std::string MetricsReport::to_json() const {
  using nlohmann::ordered_json;
  auto prf = [](const PRF& m) { return ordered_json{{"p", m.p}, {"r", m.r}, {"f", m.f}}; };
  ordered_json doc;
  doc["overlap"] = prf(overlap);
  doc["boundary"] = prf(boundary);
  doc["f75"] = f75;
  doc["f75_aggregation"] = "all ground-truth objects in the split";
  doc["boundary_dilation"] = boundary_dilation;
  ordered_json images = ordered_json::array();
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const ImageCounts& c = per_image[i];
    images.push_back(ordered_json{{"image", image_names[i]},
                                  {"overlap", prf(c.overlap())},
                                  {"boundary", prf(c.boundary())},
                                  {"f75", c.f75()},
                                  {"pred_objects", c.pred_objects},
                                  {"gt_objects", c.gt_objects}});
  }
  doc["per_image"] = std::move(images);
  return doc.dump(2) + "\n";
}

}  // namespace msm
