#include "msm/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace msm {

void LossWeights::validate() const {
  if (!(ce > 0 && dice > 0 && cls_matched > 0 && cls_unmatched > 0 && dice_smooth > 0)) {
    throw std::invalid_argument("loss weights must be positive");
  }
}

Tensor dice_loss(const Tensor& prob, const Eigen::Ref<const Vector>& gt, double smooth) {
  if (prob.size() != gt.size()) throw ShapeError("dice_loss: prediction and ground truth sizes differ");
  const Vector& p = prob.data();
  const double numer = 2.0 * p.dot(gt) + smooth;
  const double denom = p.sum() + gt.sum() + smooth;
  Vector g = gt;
  Tape* tape = common_tape({&prob});
  Vector value = Vector::Constant(1, 1.0 - numer / denom);
  if (tape == nullptr) return Tensor(Shape{}, std::move(value));
  return tape->record(Shape{}, std::move(value), [prob, g, numer, denom](const Vector& up, Tape& t) {
    // d/dp_k [1 - N/D] = -(2 g_k D - N) / D^2
    Vector d = -(2.0 * g.array() * denom - numer).matrix() / (denom * denom);
    t.accumulate(prob, Vector(d * up[0]));
  });
}

Tensor bce_loss(const Tensor& logits, const Eigen::Ref<const Vector>& gt) {
  if (logits.size() != gt.size()) throw ShapeError("bce_loss: prediction and ground truth sizes differ");
  const Vector& z = logits.data();
  const double n = static_cast<double>(z.size());
  const auto softplus = z.cwiseMax(0.0).array() + (-z.array().abs()).exp().log1p();
  const double value = (softplus - z.array() * gt.array()).sum() / n;
  Vector g = gt;
  Tape* tape = common_tape({&logits});
  if (tape == nullptr) return Tensor::scalar(value);
  return tape->record(Shape{}, Vector::Constant(1, value), [logits, g, n](const Vector& up, Tape& t) {
    const Vector& z = logits.data();
    Vector d = z.unaryExpr([](double v) {
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    d = (d - g) * (up[0] / n);
    t.accumulate(logits, std::move(d));
  });
}

Matching hungarian(const Eigen::Ref<const Matrix>& cost) {
  Matching result;
  const Index rows = cost.rows(), cols = cost.cols();
  if (rows == 0 || cols == 0) {
    for (Index i = 0; i < rows; ++i) result.unmatched_predictions.push_back(i);
    return result;
  }
  if (!cost.allFinite()) throw std::invalid_argument("hungarian: costs must be finite");
  const bool transposed = rows > cols;
  const Matrix c = transposed ? Matrix(cost.transpose()) : Matrix(cost);
  const Index n = c.rows(), m = c.cols();  // n <= m

  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Index> match_col(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match_col[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(m + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = match_col[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) continue;
        const double cur = c(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[js];
        if (cur < minv[js]) {
          minv[js] = cur;
          way[js] = j0;
        }
        if (minv[js] < delta) {
          delta = minv[js];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) {
          u[static_cast<std::size_t>(match_col[js])] += delta;
          v[js] -= delta;
        } else {
          minv[js] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match_col[static_cast<std::size_t>(j0)] = match_col[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Index> row_to_col(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j) {
    const Index i = match_col[static_cast<std::size_t>(j)];
    if (i != 0) row_to_col[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  std::vector<Index> pred_to_gt(static_cast<std::size_t>(rows), -1);
  for (Index i = 0; i < n; ++i) {
    const Index j = row_to_col[static_cast<std::size_t>(i)];
    if (transposed) {
      pred_to_gt[static_cast<std::size_t>(j)] = i;
    } else {
      pred_to_gt[static_cast<std::size_t>(i)] = j;
    }
  }
  for (Index p = 0; p < rows; ++p) {
    const Index g = pred_to_gt[static_cast<std::size_t>(p)];
    if (g >= 0) {
      result.pairs.emplace_back(p, g);
    } else {
      result.unmatched_predictions.push_back(p);
    }
  }
  return result;
}

double matching_cost(const Eigen::Ref<const Matrix>& cost, const Matching& matching) {
  double total = 0.0;
  for (const auto& [p, g] : matching.pairs) total += cost(p, g);
  return total;
}

Matrix masks_from_labels(const LabelMap& labels) {
  const auto ids = object_ids(labels);
  Matrix masks = Matrix::Zero(static_cast<Index>(ids.size()), labels.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    for (Index p = 0; p < labels.size(); ++p) {
      if (labels.data()[p] == ids[k]) masks(static_cast<Index>(k), p) = 1.0;
    }
  }
  return masks;
}

Matrix match_cost(const MaskPrediction& pred, const Eigen::Ref<const Matrix>& gt_masks, const LossWeights& weights) {
  const Index n = pred.num_queries();
  const Index pixels = pred.height * pred.width;
  if (gt_masks.cols() != pixels) throw ShapeError("match_cost: ground-truth masks do not match prediction size");
  const ConstMatrixMap z(pred.logits.data().data(), n, pixels);
  const double hw = static_cast<double>(pixels);

  const Matrix softplus = (z.array().max(0.0) + (-z.array().abs()).exp().log1p()).matrix();
  Matrix bce = (-(z * gt_masks.transpose())).colwise() + softplus.rowwise().sum();
  bce /= hw;

  const Matrix prob = z.unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  const Matrix numer = (2.0 * (prob * gt_masks.transpose())).array() + weights.dice_smooth;
  const Vector prob_sum = prob.rowwise().sum();
  const Vector gt_sum = gt_masks.rowwise().sum();
  Matrix denom = Matrix::Constant(n, gt_masks.rows(), weights.dice_smooth);
  denom.colwise() += prob_sum;
  denom.rowwise() += gt_sum.transpose();
  const Matrix dice = 1.0 - (numer.array() / denom.array());

  const Tensor log_p = log_softmax_rows(pred.class_logits.detach());
  Matrix cost = weights.ce * bce + weights.dice * dice;
  for (Index i = 0; i < n; ++i) cost.row(i).array() -= weights.cls_matched * log_p.matrix()(i, 0);
  return cost;
}

Tensor set_loss(const MaskPrediction& pred, const Eigen::Ref<const Matrix>& gt_masks, const Matching& matching,
                const LossWeights& weights) {
  const Index n = pred.num_queries();
  const double norm = static_cast<double>(std::max<Index>(gt_masks.rows(), 1));
  const Tensor flat = pred.flat_logits();
  const Tensor log_p = log_softmax_rows(pred.class_logits);

  // Per-query class target weights: column 0 for matched, column 1 otherwise.
  Matrix class_weights = Matrix::Zero(n, 2);
  std::vector<Tensor> terms;
  for (const auto& [p, g] : matching.pairs) {
    const Tensor row = slice(flat, p, p + 1);
    const Vector target = gt_masks.row(g).transpose();
    terms.push_back(scale(bce_loss(row, target), weights.ce));
    terms.push_back(scale(dice_loss(sigmoid(row), target, weights.dice_smooth), weights.dice));
    class_weights(p, 0) = weights.cls_matched;
  }
  for (Index p : matching.unmatched_predictions) class_weights(p, 1) = weights.cls_unmatched;
  terms.push_back(scale(sum(mul(log_p, Tensor::from_matrix(class_weights))), -1.0));

  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / norm);
}

Tensor total_loss(const std::vector<MaskPrediction>& preds, const Eigen::Ref<const Matrix>& gt_masks,
                  const LossWeights& weights, bool aux) {
  if (preds.empty()) throw std::invalid_argument("total_loss: no predictions");
  weights.validate();
  const std::size_t first = aux ? 0 : preds.size() - 1;
  Tensor total;
  for (std::size_t l = first; l < preds.size(); ++l) {
    const Matching matching = hungarian(match_cost(preds[l], gt_masks, weights));
    Tensor term = set_loss(preds[l], gt_masks, matching, weights);
    total = total.empty() ? term : add(total, term);
  }
  return total;
}

}  // namespace msm
