#pragma once

#include "msm/attention.hpp"
#include "msm/backbone.hpp"
#include "msm/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace msm {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DecoderConfig {
  AttentionConfig attention;
  /// Multiplies the query/pixel cosine to form mask logits.
  double mask_scale = 10.0;
};

/// One mean shift decoder layer. Projections act on row vectors (X W).
struct DecoderLayerParams {
  Tensor cross_q, cross_k, cross_v;  // [D x D]
  Tensor self_q, self_k, self_v;     // [D x D]
  Tensor ffn_w1;                     // [D x 4D]
  Tensor ffn_b1;                     // [4D]
  Tensor ffn_w2;                     // [4D x D]
  Tensor ffn_b2;                     // [D]

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".cross.q", cross_q);
    f(prefix + ".cross.k", cross_k);
    f(prefix + ".cross.v", cross_v);
    f(prefix + ".self.q", self_q);
    f(prefix + ".self.k", self_k);
    f(prefix + ".self.v", self_v);
    f(prefix + ".ffn.w1", ffn_w1);
    f(prefix + ".ffn.b1", ffn_b1);
    f(prefix + ".ffn.w2", ffn_w2);
    f(prefix + ".ffn.b2", ffn_b2);
  }

  /// Identity projections, so an untrained layer starts out as a plain
  /// mean shift step; He-normal first FFN layer, small second layer.
  static DecoderLayerParams init(Index dim, std::mt19937_64& rng);
  /// Identity projections and an all-zero FFN.
  static DecoderLayerParams identity(Index dim);
};

struct DecoderParams {
  Tensor queries;  // [N x D] initial object queries
  std::vector<DecoderLayerParams> layers;
  Tensor class_w;  // [D x 2]; column 0 = object, 1 = no-object
  Tensor class_b;  // [2]

  template <typename F>
  void visit(F&& f) {
    f("decoder.queries", queries);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].visit("decoder.layer" + std::to_string(l), f);
    f("decoder.class.weight", class_w);
    f("decoder.class.bias", class_b);
  }

  Index num_queries() const { return queries.dim(0); }
  Index dim() const { return queries.dim(1); }

  static DecoderParams init(Index num_queries, Index dim, Index num_layers, std::mt19937_64& rng);
};

struct MaskPrediction {
  Tensor logits;        // [N x H x W]
  Tensor class_logits;  // [N x 2]
  BoolArray masks;      // N x HW, sigmoid(logits) > 0.5
  Vector scores;        // object-class probability per query
  Index height = 0;
  Index width = 0;

  Index num_queries() const { return logits.dim(0); }
  /// Logits as an [N x HW] tensor (differentiable view).
  Tensor flat_logits() const;
};

/// X + g(softmax(kappa g(X Wq') g(X Wk')^T) X Wv'): queries attending to queries.
Tensor ms_self_attention(const Tensor& x, const DecoderLayerParams& params, const AttentionConfig& cfg);

/// g(X + relu(X W1 + b1) W2 + b2).
Tensor ffn_l2(const Tensor& x, const DecoderLayerParams& params);

/// Nearest-neighbour resize of sigmoid(prev_logits) [N x H' x W'] to H x W;
/// probability >= 0.5 -> 0 (attend), otherwise -sentinel. Values only: no
/// gradient flows through mask generation.
AdditiveMask attention_mask_from_prediction(const Tensor& prev_logits, Index height, Index width);

/// Masked mean shift cross-attention -> mean shift self-attention -> FFN + L2.
Tensor decoder_layer(const Tensor& x, const FeatureMap& feat, const AdditiveMask& mask,
                     const DecoderLayerParams& params, const AttentionConfig& cfg);

/// Mask logits scale * g(X) g(F)^T and class logits X Wc + bc.
MaskPrediction predict_masks(const Tensor& x, const FeatureMap& feat, const Tensor& class_w, const Tensor& class_b,
                             double scale);

/// Runs every layer of `params`. Element 0 is the prediction from the raw
/// queries; element l is the prediction after layer l.
std::vector<MaskPrediction> forward_stack(const Tensor& queries, const FeatureMap& feat, const DecoderParams& params,
                                          const DecoderConfig& cfg);

}  // namespace msm
