#pragma once

#include "msm/tensor.hpp"

#include <vector>

namespace msm {

struct AttentionConfig {
  /// Concentration applied to cosine logits.
  double kappa = 20.0;
  /// Key dimension; scales the dot-product attention logits by 1/sqrt(key_dim).
  Index key_dim = 16;
  bool use_mask = true;

  /// Throws std::invalid_argument unless kappa > 0 and key_dim >= 1.
  void validate() const;
};

/// Additive attention mask with entries in {0, -kMaskSentinel}, one row per
/// query. Rows that block every key are flagged; softmax treats them as
/// unmasked.
class AdditiveMask {
 public:
  AdditiveMask() = default;
  /// Validates that only the two permitted values appear.
  explicit AdditiveMask(Matrix values);

  static AdditiveMask zeros(Index queries, Index keys);
  /// `allowed(i, j)` true -> 0, false -> -sentinel.
  static AdditiveMask from_allowed(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& allowed);

  const Matrix& values() const { return values_; }
  const std::vector<bool>& fully_masked() const { return fully_masked_; }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

 private:
  Matrix values_;
  std::vector<bool> fully_masked_;
};

/// softmax(Q K^T / sqrt(d_k)) V.
Tensor scaled_dot_product(const Tensor& q, const Tensor& k, const Tensor& v);

/// g(softmax(M + kappa g(Q) g(K)^T) V); mask optional.
Tensor hypersphere(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionConfig& cfg,
                   const AdditiveMask* mask = nullptr);

/// X + hypersphere(X Wq, F Wk, F Wv).
Tensor ms_cross_attention(const Tensor& x, const Tensor& feat, const Tensor& wq, const Tensor& wk,
                          const Tensor& wv, const AttentionConfig& cfg);

/// Masked variant: each query only attends to the pixels its mask row allows.
Tensor masked_ms_cross_attention(const Tensor& x, const Tensor& feat, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv, const AdditiveMask& mask, const AttentionConfig& cfg);

}  // namespace msm
