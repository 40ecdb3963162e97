#include "msm/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace msm {

void AttentionConfig::validate() const {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("attention kappa must be positive");
  if (key_dim < 1) throw std::invalid_argument("attention key_dim must be >= 1");
}

AdditiveMask::AdditiveMask(Matrix values) : values_(std::move(values)) {
  if (!values_.unaryExpr([](double v) { return v == 0.0 || v == -kMaskSentinel; }).all()) {
    throw std::invalid_argument("additive mask entries must be 0 or -sentinel");
  }
  fully_masked_.resize(static_cast<std::size_t>(values_.rows()));
  for (Index i = 0; i < values_.rows(); ++i) {
    fully_masked_[static_cast<std::size_t>(i)] = values_.cols() > 0 && (values_.row(i).array() != 0.0).all();
  }
}

AdditiveMask AdditiveMask::zeros(Index queries, Index keys) { return AdditiveMask(Matrix::Zero(queries, keys)); }

AdditiveMask AdditiveMask::from_allowed(
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& allowed) {
  Matrix values = allowed.select(Matrix::Zero(allowed.rows(), allowed.cols()),
                                 Matrix::Constant(allowed.rows(), allowed.cols(), -kMaskSentinel));
  return AdditiveMask(std::move(values));
}

Tensor scaled_dot_product(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw ShapeError("scaled_dot_product: incompatible Q/K/V shapes");
  }
  const double factor = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor logits = scale(matmul(q, transpose(k)), factor);
  return matmul(softmax_rows(logits), v);
}

Tensor hypersphere(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionConfig& cfg,
                   const AdditiveMask* mask) {
  cfg.validate();
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw ShapeError("hypersphere: incompatible Q/K/V shapes");
  }
  if (mask != nullptr && (mask->rows() != q.dim(0) || mask->cols() != k.dim(0))) {
    throw ShapeError("hypersphere: mask shape does not match N x M");
  }
  Tensor cosine = matmul(l2_normalize_rows(q), transpose(l2_normalize_rows(k)));
  Tensor weights = softmax_rows(scale(cosine, cfg.kappa), mask ? &mask->values() : nullptr);
  return l2_normalize_rows(matmul(weights, v));
}

Tensor ms_cross_attention(const Tensor& x, const Tensor& feat, const Tensor& wq, const Tensor& wk,
                          const Tensor& wv, const AttentionConfig& cfg) {
  return add(x, hypersphere(matmul(x, wq), matmul(feat, wk), matmul(feat, wv), cfg));
}

Tensor masked_ms_cross_attention(const Tensor& x, const Tensor& feat, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv, const AdditiveMask& mask, const AttentionConfig& cfg) {
  return add(x, hypersphere(matmul(x, wq), matmul(feat, wk), matmul(feat, wv), cfg, &mask));
}

}  // namespace msm
