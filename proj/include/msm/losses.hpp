#pragma once

#include "msm/decoder.hpp"
#include "msm/label_map.hpp"
#include "msm/tensor.hpp"

#include <utility>
#include <vector>

namespace msm {

struct LossWeights {
  double ce = 5.0;
  double dice = 5.0;
  double cls_matched = 2.0;
  double cls_unmatched = 0.1;
  double dice_smooth = 1.0;

  void validate() const;
};

struct Matching {
  std::vector<std::pair<Index, Index>> pairs;  // (prediction, ground truth), sorted by prediction
  std::vector<Index> unmatched_predictions;    // ascending
};

/// 1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s).
Tensor dice_loss(const Tensor& prob, const Eigen::Ref<const Vector>& gt, double smooth = 1.0);

/// Mean binary cross-entropy with logits, evaluated in the overflow-free form
/// max(z,0) - z g + log(1 + exp(-|z|)).
Tensor bce_loss(const Tensor& logits, const Eigen::Ref<const Vector>& gt);

/// Minimum-cost assignment of size min(n, m) for a finite n x m cost matrix.
/// Ties are resolved by scan order (lowest index first).
Matching hungarian(const Eigen::Ref<const Matrix>& cost);

double matching_cost(const Eigen::Ref<const Matrix>& cost, const Matching& matching);

/// One row per ground-truth object: 1.0 where the label equals the object's
/// ID. Rows follow object_ids() order.
Matrix masks_from_labels(const LabelMap& labels);

/// cost(i, j) = ce * BCE(pred_i, gt_j) + dice * Dice(sigmoid(pred_i), gt_j)
///              - cls_matched * log p_obj(i).
Matrix match_cost(const MaskPrediction& pred, const Eigen::Ref<const Matrix>& gt_masks, const LossWeights& weights);

/// Loss of one prediction set under a fixed matching, normalized by
/// max(#GT, 1). Matched queries pay mask loss plus weighted object-class
/// cross-entropy; unmatched queries pay weighted no-object cross-entropy.
Tensor set_loss(const MaskPrediction& pred, const Eigen::Ref<const Matrix>& gt_masks, const Matching& matching,
                const LossWeights& weights);

/// Hungarian-matched set loss on the final prediction; with `aux`, the same
/// loss (matching recomputed) is added for every earlier prediction.
Tensor total_loss(const std::vector<MaskPrediction>& preds, const Eigen::Ref<const Matrix>& gt_masks,
                  const LossWeights& weights, bool aux = false);

}  // namespace msm
