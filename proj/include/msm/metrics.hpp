#pragma once

#include "msm/label_map.hpp"
#include "msm/tensor.hpp"

#include <string>
#include <vector>

namespace msm {

using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PRF {
  double p = 0.0;
  double r = 0.0;
  double f = 0.0;
};

/// Precision/recall from raw counts. Empty-denominator conventions: nothing
/// predicted and nothing expected -> 1, otherwise an empty side scores 0.
/// F = 2PR/(P+R) with 0/0 -> 0.
PRF prf_from_counts(double true_positive_p, double predicted, double true_positive_r, double expected);

/// Additive per-image counts; sums over images give the dataset metrics.
struct ImageCounts {
  double overlap_tp = 0;       // sum over matched pairs |c ∩ g|
  double pred_area = 0;        // sum over predicted objects |c|
  double gt_area = 0;          // sum over GT objects |g|
  double boundary_tp_p = 0;    // predicted boundary pixels near the matched GT boundary
  double pred_boundary = 0;
  double boundary_tp_r = 0;    // GT boundary pixels near the matched predicted boundary
  double gt_boundary = 0;
  Index pred_objects = 0;
  Index gt_objects = 0;
  Index gt_objects_f75 = 0;    // matched GT objects with pair F >= 0.75

  ImageCounts& operator+=(const ImageCounts& other);
  PRF overlap() const;
  PRF boundary() const;
  /// Percentage in [0, 100].
  double f75() const;
};

/// F-measure of pixel overlap for every (predicted object, GT object) pair;
/// rows/columns follow object_ids() order of each map.
Matrix pairwise_f(const LabelMap& pred, const LabelMap& gt);

/// Pixels of the mask with at least one 4-neighbour outside it (the image
/// border counts as outside).
MaskArray mask_boundary(const MaskArray& mask);

/// Chebyshev (square) dilation.
MaskArray dilate(const MaskArray& mask, int radius);

/// Hungarian matching on pairwise F followed by count accumulation.
ImageCounts evaluate_image(const LabelMap& pred, const LabelMap& gt, int boundary_dilation = 2);

PRF overlap_prf(const LabelMap& pred, const LabelMap& gt);
PRF boundary_prf(const LabelMap& pred, const LabelMap& gt, int dilation = 2);
double f75(const LabelMap& pred, const LabelMap& gt);

struct MetricsReport {
  PRF overlap;
  PRF boundary;
  double f75 = 0.0;
  int boundary_dilation = 2;
  std::vector<std::string> image_names;
  std::vector<ImageCounts> per_image;

  /// Dataset metrics from summed counts.
  static MetricsReport aggregate(std::vector<std::string> names, std::vector<ImageCounts> per_image,
                                 int boundary_dilation);

  /// JSON document with keys overlap.{p,r,f}, boundary.{p,r,f}, f75 and per_image.
  std::string to_json() const;
};

}  // namespace msm
