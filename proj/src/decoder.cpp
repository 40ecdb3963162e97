#include "msm/decoder.hpp"

#include <cmath>

namespace msm {

namespace {

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Vector v(shape_size(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor eye(Index n) { return Tensor::from_matrix(Matrix::Identity(n, n)); }

}  // namespace

DecoderLayerParams DecoderLayerParams::identity(Index dim) {
  DecoderLayerParams p;
  p.cross_q = p.cross_k = p.cross_v = eye(dim);
  p.self_q = p.self_k = p.self_v = eye(dim);
  p.ffn_w1 = Tensor::zeros({dim, 4 * dim});
  p.ffn_b1 = Tensor::zeros({4 * dim});
  p.ffn_w2 = Tensor::zeros({4 * dim, dim});
  p.ffn_b2 = Tensor::zeros({dim});
  return p;
}

DecoderLayerParams DecoderLayerParams::init(Index dim, std::mt19937_64& rng) {
  DecoderLayerParams p = identity(dim);
  p.ffn_w1 = normal_tensor({dim, 4 * dim}, std::sqrt(2.0 / static_cast<double>(dim)), rng);
  p.ffn_w2 = normal_tensor({4 * dim, dim}, 0.02, rng);
  return p;
}

DecoderParams DecoderParams::init(Index num_queries, Index dim, Index num_layers, std::mt19937_64& rng) {
  DecoderParams p;
  p.queries = l2_normalize_rows(normal_tensor({num_queries, dim}, 1.0, rng));
  for (Index l = 0; l < num_layers; ++l) p.layers.push_back(DecoderLayerParams::init(dim, rng));
  p.class_w = Tensor::zeros({dim, 2});
  p.class_b = Tensor::zeros({2});
  return p;
}

Tensor MaskPrediction::flat_logits() const { return reshape(logits, {logits.dim(0), height * width}); }

Tensor ms_self_attention(const Tensor& x, const DecoderLayerParams& params, const AttentionConfig& cfg) {
  return add(x, hypersphere(matmul(x, params.self_q), matmul(x, params.self_k), matmul(x, params.self_v), cfg));
}

Tensor ffn_l2(const Tensor& x, const DecoderLayerParams& params) {
  Tensor hidden = relu(add_row_vector(matmul(x, params.ffn_w1), params.ffn_b1));
  Tensor out = add_row_vector(matmul(hidden, params.ffn_w2), params.ffn_b2);
  return l2_normalize_rows(add(x, out));
}

AdditiveMask attention_mask_from_prediction(const Tensor& prev_logits, Index height, Index width) {
  if (prev_logits.rank() != 3) throw ShapeError("attention_mask_from_prediction: expects [N,H,W] logits");
  const Index n = prev_logits.dim(0), src_h = prev_logits.dim(1), src_w = prev_logits.dim(2);
  BoolArray allowed(n, height * width);
  for (Index q = 0; q < n; ++q) {
    for (Index y = 0; y < height; ++y) {
      const Index sy = y * src_h / height;
      for (Index x = 0; x < width; ++x) {
        const Index sx = x * src_w / width;
        // sigmoid(z) >= 0.5  <=>  z >= 0
        allowed(q, y * width + x) = prev_logits[(q * src_h + sy) * src_w + sx] >= 0.0;
      }
    }
  }
  return AdditiveMask::from_allowed(allowed);
}

Tensor decoder_layer(const Tensor& x, const FeatureMap& feat, const AdditiveMask& mask,
                     const DecoderLayerParams& params, const AttentionConfig& cfg) {
  Tensor h = cfg.use_mask
                 ? masked_ms_cross_attention(x, feat.embeddings, params.cross_q, params.cross_k, params.cross_v, mask, cfg)
                 : ms_cross_attention(x, feat.embeddings, params.cross_q, params.cross_k, params.cross_v, cfg);
  h = ms_self_attention(h, params, cfg);
  return ffn_l2(h, params);
}

MaskPrediction predict_masks(const Tensor& x, const FeatureMap& feat, const Tensor& class_w, const Tensor& class_b,
                             double scale) {
  MaskPrediction pred;
  pred.height = feat.height;
  pred.width = feat.width;
  const Index n = x.dim(0);
  Tensor cosine = matmul(l2_normalize_rows(x), transpose(feat.embeddings));
  Tensor flat = msm::scale(cosine, scale);
  pred.logits = reshape(flat, {n, feat.height, feat.width});
  pred.class_logits = add_row_vector(matmul(x, class_w), class_b);
  // sigmoid(z) > 0.5  <=>  z > 0
  pred.masks = flat.matrix().array() > 0.0;
  const ConstMatrixMap cls = pred.class_logits.matrix();
  pred.scores.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double m = cls.row(i).maxCoeff();
    const double e0 = std::exp(cls(i, 0) - m), e1 = std::exp(cls(i, 1) - m);
    pred.scores[i] = e0 / (e0 + e1);
  }
  return pred;
}

std::vector<MaskPrediction> forward_stack(const Tensor& queries, const FeatureMap& feat, const DecoderParams& params,
                                          const DecoderConfig& cfg) {
  if (params.layers.empty()) throw std::invalid_argument("forward_stack: at least one decoder layer required");
  std::vector<MaskPrediction> preds;
  preds.reserve(params.layers.size() + 1);
  preds.push_back(predict_masks(queries, feat, params.class_w, params.class_b, cfg.mask_scale));
  Tensor x = queries;
  for (const DecoderLayerParams& layer : params.layers) {
    const AdditiveMask mask = attention_mask_from_prediction(preds.back().logits, feat.height, feat.width);
    x = decoder_layer(x, feat, mask, layer, cfg.attention);
    preds.push_back(predict_masks(x, feat, params.class_w, params.class_b, cfg.mask_scale));
  }
  return preds;
}

}  // namespace msm
