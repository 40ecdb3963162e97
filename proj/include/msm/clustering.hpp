#pragma once

#include "msm/label_map.hpp"
#include "msm/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace msm {

/// The weighted resultant of a mean shift step has (numerically) zero length,
/// e.g. for antipodally symmetric data.
class VanishingShiftError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using ColumnVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct ClusterState {
  RowMatrix<Scalar> centers;       // K x d, unit rows
  std::vector<Index> assignments;  // per point, index into centers
  Index iterations_run = 0;        // max over seeds
};

struct MeanShiftOptions {
  double kappa = 20.0;
  double tol = 1e-6;
  int max_iter = 100;
  double merge_cos_threshold = 0.99;
  Index seed_stride = 4;
};

/// One vMF mean shift update of a single center:
///   g( sum_i x_i exp(kappa mu^T x_i) ).
/// The weights are shifted by their maximum before exponentiation, which
/// leaves the normalized result unchanged.
template <typename DerivedMu, typename DerivedX>
ColumnVector<typename DerivedX::Scalar> vmf_step(const Eigen::MatrixBase<DerivedMu>& mu,
                                                 const Eigen::MatrixBase<DerivedX>& points,
                                                 typename DerivedX::Scalar kappa) {
  using Scalar = typename DerivedX::Scalar;
  if (!(kappa > Scalar(0))) throw std::invalid_argument("vmf_step: kappa must be positive");
  if (mu.size() != points.cols()) throw ShapeError("vmf_step: center and point dimensions differ");
  if (points.rows() == 0) throw ShapeError("vmf_step: empty point set");
  const ColumnVector<Scalar> center = mu.reshaped();
  ColumnVector<Scalar> logits = kappa * (points * center);
  const Scalar top = logits.maxCoeff();
  const ColumnVector<Scalar> weights = (logits.array() - top).exp().matrix();
  const ColumnVector<Scalar> resultant = points.transpose() * weights;
  const Scalar norm = resultant.norm();
  // weights.sum() >= 1 after the shift; compare the mean resultant length.
  if (norm < Scalar(1e-12) * weights.sum()) throw VanishingShiftError("vmf_step: vanishing shift");
  return resultant / norm;
}

/// Greedy agglomeration: while some pair has cosine > threshold, the first
/// such pair (row-major order) is replaced by the normalized sum of all the
/// original centers it represents.
template <typename Derived>
RowMatrix<typename Derived::Scalar> merge_centers(const Eigen::MatrixBase<Derived>& centers,
                                                  double cos_threshold) {
  using Scalar = typename Derived::Scalar;
  if (!(cos_threshold > 0.0 && cos_threshold < 1.0)) {
    throw std::invalid_argument("merge_centers: threshold must lie in (0,1)");
  }
  std::vector<ColumnVector<Scalar>> sums;
  std::vector<ColumnVector<Scalar>> units;
  for (Index i = 0; i < centers.rows(); ++i) {
    sums.emplace_back(centers.row(i).transpose());
    units.emplace_back(centers.row(i).transpose().normalized());
  }
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < units.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < units.size(); ++j) {
        if (units[i].dot(units[j]) > Scalar(cos_threshold)) {
          sums[i] += sums[j];
          units[i] = sums[i].normalized();
          sums.erase(sums.begin() + static_cast<std::ptrdiff_t>(j));
          units.erase(units.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
          break;
        }
      }
    }
  }
  RowMatrix<Scalar> out(static_cast<Index>(units.size()), centers.cols());
  for (std::size_t i = 0; i < units.size(); ++i) out.row(static_cast<Index>(i)) = units[i].transpose();
  return out;
}

/// Index of the max-cosine center for every point (ties to the lower index).
template <typename DerivedX, typename DerivedC>
std::vector<Index> assign_to_centers(const Eigen::MatrixBase<DerivedX>& points,
                                     const Eigen::MatrixBase<DerivedC>& centers) {
  const auto similarity = (points * centers.transpose()).eval();
  std::vector<Index> out(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i) {
    Index best = 0;
    similarity.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

/// Iterates every seed with vmf_step until the update moves it by less than
/// `tol` (the pre-update value is kept) or `max_iter` updates were applied;
/// then merges converged seeds and assigns points.
template <typename DerivedX, typename DerivedS>
ClusterState<typename DerivedX::Scalar> run_meanshift(const Eigen::MatrixBase<DerivedX>& points,
                                                      typename DerivedX::Scalar kappa,
                                                      const Eigen::MatrixBase<DerivedS>& seeds, double tol,
                                                      int max_iter, double merge_cos_threshold = 0.99) {
  using Scalar = typename DerivedX::Scalar;
  if (!(tol > 0.0)) throw std::invalid_argument("run_meanshift: tol must be positive");
  if (max_iter < 0) throw std::invalid_argument("run_meanshift: max_iter must be >= 0");
  if (seeds.rows() == 0) throw std::invalid_argument("run_meanshift: no seeds");
  if (seeds.cols() != points.cols()) throw ShapeError("run_meanshift: seed and point dimensions differ");
  RowMatrix<Scalar> converged(seeds.rows(), seeds.cols());
  Index iterations = 0;
  for (Index s = 0; s < seeds.rows(); ++s) {
    ColumnVector<Scalar> mu = seeds.row(s).transpose();
    int it = 0;
    while (it < max_iter) {
      ColumnVector<Scalar> next = vmf_step(mu, points, kappa);
      if (!((next - mu).norm() >= Scalar(tol))) break;
      mu = std::move(next);
      ++it;
    }
    converged.row(s) = mu.transpose();
    iterations = std::max<Index>(iterations, it);
  }
  ClusterState<Scalar> state;
  state.centers = merge_centers(converged, merge_cos_threshold);
  state.assignments = assign_to_centers(points, state.centers);
  state.iterations_run = iterations;
  return state;
}

/// Classical mean shift segmentation of unit pixel embeddings (H*W x D, row
/// y*W + x). Seeds are every `seed_stride`-th pixel. Labels are cluster
/// index + 1.
LabelMap segment_by_clustering(const Eigen::Ref<const Matrix>& embeddings, Index height, Index width,
                               const MeanShiftOptions& options);

}  // namespace msm
