#include "msm/clustering.hpp"

namespace msm {

LabelMap segment_by_clustering(const Eigen::Ref<const Matrix>& embeddings, Index height, Index width,
                               const MeanShiftOptions& options) {
  if (embeddings.rows() != height * width) throw ShapeError("segment_by_clustering: embeddings are not H*W rows");
  if (options.seed_stride < 1 || options.seed_stride > embeddings.rows()) {
    throw UsageError("segment_by_clustering: seed_stride must be in [1, pixel count]");
  }
  const Index seed_count = (embeddings.rows() + options.seed_stride - 1) / options.seed_stride;
  Matrix seeds(seed_count, embeddings.cols());
  for (Index s = 0; s < seed_count; ++s) seeds.row(s) = embeddings.row(s * options.seed_stride);

  const auto state = run_meanshift(embeddings, options.kappa, seeds, options.tol, options.max_iter,
                                   options.merge_cos_threshold);
  LabelMap labels(height, width);
  for (Index p = 0; p < embeddings.rows(); ++p) {
    labels.data()[p] = static_cast<std::int32_t>(state.assignments[static_cast<std::size_t>(p)] + 1);
  }
  return labels;
}

}  // namespace msm
