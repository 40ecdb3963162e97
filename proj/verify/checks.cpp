#include "checks.hpp"

#include "gradcheck.hpp"
#include "oracles.hpp"

#include "msm/attention.hpp"
#include "msm/backbone.hpp"
#include "msm/clustering.hpp"
#include "msm/decoder.hpp"
#include "msm/losses.hpp"
#include "msm/metrics.hpp"
#include "msm/synthdata.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace msm::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

Tensor T(const Matrix& m) { return Tensor::from_matrix(m); }

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Vector v(shape_size(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return Tensor(std::move(shape), std::move(v));
}

Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

BoolMatrix random_allowed(Index rows, Index cols, std::mt19937_64& rng, bool force_full_row) {
  std::bernoulli_distribution coin(0.5);
  BoolMatrix allowed(rows, cols);
  for (Index i = 0; i < allowed.size(); ++i) allowed.data()[i] = coin(rng);
  if (force_full_row) allowed.row(uniform_index(rng, 0, rows - 1)).setConstant(false);
  return allowed;
}

/// Near-identity projections plus a random FFN.
DecoderLayerParams random_layer(Index dim, std::mt19937_64& rng) {
  auto proj = [&] { return T(Matrix::Identity(dim, dim) + 0.3 * random_matrix(dim, dim, rng)); };
  DecoderLayerParams p;
  p.cross_q = proj();
  p.cross_k = proj();
  p.cross_v = proj();
  p.self_q = proj();
  p.self_k = proj();
  p.self_v = proj();
  p.ffn_w1 = random_tensor({dim, 4 * dim}, rng, 0.5);
  p.ffn_b1 = random_tensor({4 * dim}, rng, 0.5);
  p.ffn_w2 = random_tensor({4 * dim, dim}, rng, 0.3);
  p.ffn_b2 = random_tensor({dim}, rng, 0.3);
  return p;
}

std::vector<Tensor> layer_tensors(DecoderLayerParams p) {
  std::vector<Tensor> out;
  p.visit("", [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

DecoderLayerParams layer_from(const std::vector<Tensor>& in, std::size_t offset) {
  DecoderLayerParams p;
  std::size_t i = offset;
  p.visit("", [&](const std::string&, Tensor& t) { t = in.at(i++); });
  return p;
}

double min_abs(const Tensor& t) { return t.data().cwiseAbs().minCoeff(); }

double ffn_margin(const Tensor& x, const DecoderLayerParams& p) {
  return min_abs(add_row_vector(matmul(x, p.ffn_w1), p.ffn_b1));
}

constexpr double kReluMargin = 1e-3;
constexpr double kLogitMargin = 0.05;
constexpr double kNormMargin = 0.3;

double min_row_norm(const Tensor& t) { return t.matrix().rowwise().norm().minCoeff(); }

/// Smallest distance of a relu input or mask-routing logit from its switch
/// point, or of a normalized projection from the origin, along a
/// forward_stack pass, in units of the respective margin.
double stack_margin(const Tensor& queries, const FeatureMap& feat, const DecoderParams& params,
                    const DecoderConfig& cfg) {
  double margin = std::numeric_limits<double>::infinity();
  MaskPrediction pred = predict_masks(queries, feat, params.class_w, params.class_b, cfg.mask_scale);
  Tensor x = queries;
  for (const DecoderLayerParams& layer : params.layers) {
    margin = std::min(margin, min_abs(pred.logits) / kLogitMargin);
    margin = std::min(margin, min_row_norm(matmul(x, layer.cross_q)) / kNormMargin);
    margin = std::min(margin, min_row_norm(matmul(feat.embeddings, layer.cross_k)) / kNormMargin);
    const AdditiveMask mask = attention_mask_from_prediction(pred.logits, feat.height, feat.width);
    Tensor h = masked_ms_cross_attention(x, feat.embeddings, layer.cross_q, layer.cross_k, layer.cross_v, mask,
                                         cfg.attention);
    margin = std::min(margin, min_row_norm(matmul(h, layer.self_q)) / kNormMargin);
    margin = std::min(margin, min_row_norm(matmul(h, layer.self_k)) / kNormMargin);
    h = ms_self_attention(h, layer, cfg.attention);
    margin = std::min(margin, ffn_margin(h, layer) / kReluMargin);
    x = ffn_l2(h, layer);
    pred = predict_masks(x, feat, params.class_w, params.class_b, cfg.mask_scale);
  }
  return margin;
}

double embed_margin(const Tensor& image, const BackboneParams& p) {
  const Tensor a = conv2d(image, p.conv1_w, p.conv1_b);
  const Tensor b = conv2d(relu(a), p.conv2_w, p.conv2_b);
  return std::min(min_abs(a), min_abs(b));
}

Vector random_binary(Index n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = coin(rng) ? 1.0 : 0.0;
  return v;
}

struct GradCase {
  std::string module;
  std::string op;
  std::function<GradCheckResult(std::mt19937_64&)> run;
};

GradCheckResult check_unary(const std::function<Tensor(const Tensor&)>& op, const Tensor& input, std::mt19937_64& rng,
                            double h) {
  const Tensor probe = op(input);
  const Tensor r = random_tensor(probe.shape(), rng);
  return gradcheck([&](const std::vector<Tensor>& in) { return project(op(in[0]), r); }, {input},
                   h);
}

GradCheckResult check_binary(const std::function<Tensor(const Tensor&, const Tensor&)>& op, const Tensor& a,
                             const Tensor& b, std::mt19937_64& rng, double h) {
  const Tensor r = random_tensor(op(a, b).shape(), rng);
  return gradcheck([&](const std::vector<Tensor>& in) { return project(op(in[0], in[1]), r); }, {a, b},
                   h);
}

std::vector<GradCase> gradient_cases(double h) {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string module, std::string op, std::function<GradCheckResult(std::mt19937_64&)> run) {
    cases.push_back(GradCase{std::move(module), std::move(op), std::move(run)});
  };

  // ---- tensor ----
  add_case("tensor", "matmul", [h](std::mt19937_64& rng) {
    return check_binary([](const Tensor& a, const Tensor& b) { return matmul(a, b); }, random_tensor({3, 4}, rng),
                        random_tensor({4, 2}, rng), rng, h);
  });
  add_case("tensor", "transpose", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return transpose(a); }, random_tensor({3, 5}, rng), rng, h);
  });
  add_case("tensor", "add", [h](std::mt19937_64& rng) {
    return check_binary([](const Tensor& a, const Tensor& b) { return add(a, b); }, random_tensor({3, 4}, rng),
                        random_tensor({3, 4}, rng), rng, h);
  });
  add_case("tensor", "sub", [h](std::mt19937_64& rng) {
    return check_binary([](const Tensor& a, const Tensor& b) { return sub(a, b); }, random_tensor({2, 3, 2}, rng),
                        random_tensor({2, 3, 2}, rng), rng, h);
  });
  add_case("tensor", "mul", [h](std::mt19937_64& rng) {
    return check_binary([](const Tensor& a, const Tensor& b) { return mul(a, b); }, random_tensor({3, 4}, rng),
                        random_tensor({3, 4}, rng), rng, h);
  });
  add_case("tensor", "add_row_vector", [h](std::mt19937_64& rng) {
    return check_binary([](const Tensor& a, const Tensor& b) { return add_row_vector(a, b); },
                        random_tensor({4, 3}, rng), random_tensor({3}, rng), rng, h);
  });
  add_case("tensor", "scale", [h](std::mt19937_64& rng) {
    const double f = uniform_real(rng, -3.0, 3.0);
    return check_unary([f](const Tensor& a) { return scale(a, f); }, random_tensor({3, 3}, rng), rng, h);
  });
  add_case("tensor", "add_scalar", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return mul(add_scalar(a, 0.7), a); }, random_tensor({3, 3}, rng), rng, h);
  });
  add_case("tensor", "relu", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return relu(a); }, T(random_away_from_zero(4, 4, 0.01, rng)), rng, h);
  });
  add_case("tensor", "sigmoid", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return sigmoid(a); }, random_tensor({4, 4}, rng, 3.0), rng, h);
  });
  add_case("tensor", "exp", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return exp(a); }, random_tensor({4, 4}, rng), rng, h);
  });
  add_case("tensor", "log", [h](std::mt19937_64& rng) {
    const Matrix positive = random_matrix(4, 4, rng).cwiseAbs().array() + 0.5;
    return check_unary([](const Tensor& a) { return log(a); }, T(positive), rng, h);
  });
  add_case("tensor", "sum", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return mul(sum(a), sum(a)); }, random_tensor({3, 4}, rng), rng, h);
  });
  add_case("tensor", "mean", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return mul(mean(a), sum(a)); }, random_tensor({3, 4}, rng), rng, h);
  });
  add_case("tensor", "row_sums", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return mul(row_sums(a), row_sums(a)); }, random_tensor({4, 3}, rng), rng, h);
  });
  add_case("tensor", "reshape", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return reshape(a, {2, 6}); }, random_tensor({3, 4}, rng), rng, h);
  });
  add_case("tensor", "slice", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return slice(a, 1, 3); }, random_tensor({4, 2, 2}, rng), rng, h);
  });
  add_case("tensor", "concat", [h](std::mt19937_64& rng) {
    return check_binary(
        [](const Tensor& a, const Tensor& b) {
          const std::vector<Tensor> parts{a, b, a};
          return concat(parts);
        },
        random_tensor({2, 3}, rng), random_tensor({3, 3}, rng), rng, h);
  });
  add_case("tensor", "gather_rows", [h](std::mt19937_64& rng) {
    const std::vector<Index> rows{2, 0, 2, 3};
    return check_unary([rows](const Tensor& a) { return gather_rows(a, rows); }, random_tensor({4, 3}, rng), rng, h);
  });
  add_case("tensor", "softmax_rows", [h](std::mt19937_64& rng) {
    const Matrix mask = AdditiveMask::from_allowed(random_allowed(4, 5, rng, true)).values();
    return check_unary([mask](const Tensor& a) { return softmax_rows(a, &mask); }, random_tensor({4, 5}, rng, 2.0),
                       rng, h);
  });
  add_case("tensor", "log_softmax_rows", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return log_softmax_rows(a); }, random_tensor({4, 5}, rng, 2.0), rng, h);
  });
  add_case("tensor", "l2_normalize_rows", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return l2_normalize_rows(a); }, random_tensor({4, 5}, rng), rng, h);
  });

  // ---- attention ----
  add_case("attention", "scaled_dot_product", [h](std::mt19937_64& rng) {
    const Tensor r = random_tensor({3, 4}, rng);
    return gradcheck([&](const std::vector<Tensor>& in) { return project(scaled_dot_product(in[0], in[1], in[2]), r); },
                     {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5, 4}, rng)},
                     h);
  });
  add_case("attention", "hypersphere", [h](std::mt19937_64& rng) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 1.0, 5.0);
    const Tensor r = random_tensor({3, 4}, rng);
    return gradcheck(
        [&](const std::vector<Tensor>& in) { return project(hypersphere(in[0], in[1], in[2], cfg), r); },
        {random_tensor({3, 4}, rng), random_tensor({6, 4}, rng), random_tensor({6, 4}, rng)}, h);
  });
  add_case("attention", "hypersphere_masked", [h](std::mt19937_64& rng) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 1.0, 5.0);
    const AdditiveMask mask = AdditiveMask::from_allowed(random_allowed(3, 6, rng, true));
    const Tensor r = random_tensor({3, 4}, rng);
    return gradcheck(
        [&](const std::vector<Tensor>& in) { return project(hypersphere(in[0], in[1], in[2], cfg, &mask), r); },
        {random_tensor({3, 4}, rng), random_tensor({6, 4}, rng), random_tensor({6, 4}, rng)}, h);
  });
  add_case("attention", "ms_cross_attention", [h](std::mt19937_64& rng) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 1.0, 5.0);
    const Tensor r = random_tensor({3, 4}, rng);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          return project(ms_cross_attention(in[0], in[1], in[2], in[3], in[4], cfg), r);
        },
        {T(random_unit_rows(3, 4, rng)), T(random_unit_rows(7, 4, rng)), random_tensor({4, 4}, rng),
         random_tensor({4, 4}, rng), random_tensor({4, 4}, rng)},
        h);
  });
  add_case("attention", "masked_ms_cross_attention", [h](std::mt19937_64& rng) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 1.0, 5.0);
    const AdditiveMask mask = AdditiveMask::from_allowed(random_allowed(3, 7, rng, true));
    const Tensor r = random_tensor({3, 4}, rng);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          return project(masked_ms_cross_attention(in[0], in[1], in[2], in[3], in[4], mask, cfg), r);
        },
        {T(random_unit_rows(3, 4, rng)), T(random_unit_rows(7, 4, rng)), random_tensor({4, 4}, rng),
         random_tensor({4, 4}, rng), random_tensor({4, 4}, rng)},
        h);
  });

  // ---- decoder ----
  add_case("decoder", "ms_self_attention", [h](std::mt19937_64& rng) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 1.0, 5.0);
    const Tensor r = random_tensor({3, 4}, rng);
    std::vector<Tensor> inputs{T(random_unit_rows(3, 4, rng))};
    for (const Tensor& t : layer_tensors(random_layer(4, rng))) inputs.push_back(t);
    return gradcheck(
        [&](const std::vector<Tensor>& in) { return project(ms_self_attention(in[0], layer_from(in, 1), cfg), r); },
        inputs, h);
  });
  add_case("decoder", "ffn_l2", [h](std::mt19937_64& rng) {
    Tensor x;
    DecoderLayerParams layer;
    do {
      x = T(random_unit_rows(3, 4, rng));
      layer = random_layer(4, rng);
    } while (ffn_margin(x, layer) < kReluMargin);
    const Tensor r = random_tensor({3, 4}, rng);
    std::vector<Tensor> inputs{x};
    for (const Tensor& t : layer_tensors(layer)) inputs.push_back(t);
    return gradcheck([&](const std::vector<Tensor>& in) { return project(ffn_l2(in[0], layer_from(in, 1)), r); },
                     inputs, h);
  });
  add_case("decoder", "decoder_layer", [h](std::mt19937_64& rng) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 1.0, 5.0);
    Tensor x, feat;
    DecoderLayerParams layer;
    AdditiveMask mask;
    do {
      x = T(random_unit_rows(3, 4, rng));
      feat = T(random_unit_rows(6, 4, rng));
      layer = random_layer(4, rng);
      mask = AdditiveMask::from_allowed(random_allowed(3, 6, rng, false));
      const Tensor h = ms_self_attention(
          masked_ms_cross_attention(x, feat, layer.cross_q, layer.cross_k, layer.cross_v, mask, cfg), layer, cfg);
      if (ffn_margin(h, layer) >= kReluMargin) break;
    } while (true);
    const Tensor r = random_tensor({3, 4}, rng);
    std::vector<Tensor> inputs{x, feat};
    for (const Tensor& t : layer_tensors(layer)) inputs.push_back(t);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          return project(decoder_layer(in[0], FeatureMap{in[1], 2, 3}, mask, layer_from(in, 2), cfg), r);
        },
        inputs, h);
  });
  add_case("decoder", "predict_masks", [h](std::mt19937_64& rng) {
    const Tensor r1 = random_tensor({3, 2, 3}, rng);
    const Tensor r2 = random_tensor({3, 2}, rng);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          const MaskPrediction p = predict_masks(in[0], FeatureMap{in[1], 2, 3}, in[2], in[3], 10.0);
          return add(project(p.logits, r1), project(p.class_logits, r2));
        },
        {random_tensor({3, 4}, rng), T(random_unit_rows(6, 4, rng)), random_tensor({4, 2}, rng),
         random_tensor({2}, rng)},
        h);
  });
  add_case("decoder", "forward_stack", [h](std::mt19937_64& rng) {
    DecoderConfig cfg;
    cfg.attention.kappa = uniform_real(rng, 1.0, 5.0);
    DecoderParams params;
    Tensor feat;
    do {
      params.queries = T(random_unit_rows(3, 4, rng));
      params.layers = {random_layer(4, rng), random_layer(4, rng)};
      params.class_w = random_tensor({4, 2}, rng);
      params.class_b = random_tensor({2}, rng);
      feat = T(random_unit_rows(8, 4, rng));
    } while (stack_margin(params.queries, FeatureMap{feat, 2, 4}, params, cfg) < 1.0);
    std::vector<Tensor> inputs;
    params.visit([&](const std::string&, Tensor& t) { inputs.push_back(t); });
    inputs.push_back(feat);
    Matrix gt(2, 8);
    gt.row(0) = random_binary(8, rng).transpose();
    gt.row(1) = random_binary(8, rng).transpose();
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          DecoderParams p = params;
          std::size_t i = 0;
          p.visit([&](const std::string&, Tensor& t) { t = in[i++]; });
          const auto preds = forward_stack(p.queries, FeatureMap{in[i], 2, 4}, p, cfg);
          return total_loss(preds, gt, LossWeights{}, true);
        },
        inputs, h);
  });

  // ---- backbone ----
  add_case("backbone", "conv2d", [h](std::mt19937_64& rng) {
    const Index k = uniform_index(rng, 0, 1) == 0 ? 1 : 3;
    const Tensor r = random_tensor({5, 4, 3}, rng);
    return gradcheck([&](const std::vector<Tensor>& in) { return project(conv2d(in[0], in[1], in[2]), r); },
                     {random_tensor({5, 4, 2}, rng), random_tensor({k, k, 2, 3}, rng), random_tensor({3}, rng)},
                     h);
  });
  add_case("backbone", "append_coordinate_channels", [h](std::mt19937_64& rng) {
    return check_unary([](const Tensor& a) { return mul(append_coordinate_channels(a), append_coordinate_channels(a)); },
                       random_tensor({3, 4, 2}, rng), rng, h);
  });
  add_case("backbone", "embed", [h](std::mt19937_64& rng) {
    Tensor image;
    BackboneParams params;
    do {
      image = random_tensor({4, 4, 5}, rng);
      params = BackboneParams::init(5, 3, 4, rng);
      params.conv1_b = random_tensor({3}, rng, 0.2);
      params.conv2_b = random_tensor({3}, rng, 0.2);
      params.proj_b = random_tensor({4}, rng, 0.2);
    } while (embed_margin(image, params) < kReluMargin);
    std::vector<Tensor> inputs{image};
    params.visit([&](const std::string&, Tensor& t) { inputs.push_back(t); });
    const Tensor r = random_tensor({16, 4}, rng);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          BackboneParams p;
          std::size_t i = 1;
          p.visit([&](const std::string&, Tensor& t) { t = in[i++]; });
          return project(embed(in[0], p).embeddings, r);
        },
        inputs, h);
  });

  // ---- losses ----
  add_case("losses", "dice_loss", [h](std::mt19937_64& rng) {
    const Vector gt = random_binary(12, rng);
    return gradcheck([&](const std::vector<Tensor>& in) { return dice_loss(sigmoid(in[0]), gt, 1.0); },
                     {random_tensor({12}, rng, 2.0)}, h);
  });
  add_case("losses", "bce_loss", [h](std::mt19937_64& rng) {
    const Vector gt = random_binary(12, rng);
    return gradcheck([&](const std::vector<Tensor>& in) { return bce_loss(in[0], gt); }, {random_tensor({12}, rng, 3.0)},
                     h);
  });
  add_case("losses", "set_loss", [h](std::mt19937_64& rng) {
    const Tensor x = random_tensor({4, 3}, rng);
    const Tensor feat = T(random_unit_rows(6, 3, rng));
    const Tensor cw = random_tensor({3, 2}, rng);
    const Tensor cb = random_tensor({2}, rng);
    const Index g = uniform_index(rng, 0, 3);
    Matrix gt(g, 6);
    for (Index i = 0; i < g; ++i) gt.row(i) = random_binary(6, rng).transpose();
    const LossWeights weights;
    const Matching matching = hungarian(match_cost(predict_masks(x, FeatureMap{feat, 2, 3}, cw, cb, 10.0), gt, weights));
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          return set_loss(predict_masks(in[0], FeatureMap{in[1], 2, 3}, in[2], in[3], 10.0), gt, matching, weights);
        },
        {x, feat, cw, cb}, h);
  });
  add_case("losses", "total_loss", [h](std::mt19937_64& rng) {
    const Index g = uniform_index(rng, 1, 3);
    Matrix gt(g, 6);
    for (Index i = 0; i < g; ++i) gt.row(i) = random_binary(6, rng).transpose();
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          const FeatureMap f{in[2], 2, 3};
          std::vector<MaskPrediction> preds{predict_masks(in[0], f, in[3], in[4], 10.0),
                                            predict_masks(in[1], f, in[3], in[4], 10.0)};
          return total_loss(preds, gt, LossWeights{}, true);
        },
        {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), T(random_unit_rows(6, 3, rng)),
         random_tensor({3, 2}, rng), random_tensor({2}, rng)},
        h);
  });
  return cases;
}

}  // namespace

std::vector<GradCaseResult> gradient_suite(Index instances, std::uint64_t seed, double h) {
  std::vector<GradCaseResult> out;
  std::uint64_t case_seed = seed;
  for (const GradCase& c : gradient_cases(h)) {
    std::mt19937_64 rng(case_seed++);
    GradCaseResult r{c.module, c.op, 0.0, 0};
    for (Index i = 0; i < instances; ++i) {
      try {
        r.max_relative_error = std::max(r.max_relative_error, c.run(rng).relative_error);
      } catch (const std::exception& e) {
        throw std::runtime_error("gradient check " + c.module + "." + c.op + ": " + e.what());
      }
      ++r.instances;
    }
    out.push_back(r);
  }
  return out;
}

CheckResult check_attention_clustering_equivalence(std::uint64_t seed) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  const Index dims[] = {3, 8, 16};
  const Index counts[] = {4, 64};
  const double kappas[] = {1.0, 5.0, 20.0};
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index d = dims[t % 3];
    const Index n = counts[(t / 3) % 2];
    AttentionConfig cfg;
    cfg.kappa = kappas[(t / 6) % 3];
    const Matrix x = random_unit_rows(n, d, rng);
    const Matrix mu = random_unit_rows(1, d, rng);
    const Tensor xt = T(x);
    const Tensor shifted = hypersphere(T(mu), xt, xt, cfg);
    const std::vector<double> expected = vmf_update_loop(x, std::vector<double>(mu.data(), mu.data() + d), cfg.kappa);
    for (Index j = 0; j < d; ++j) worst = std::max(worst, std::abs(shifted[j] - expected[static_cast<std::size_t>(j)]));
  }
  CheckResult r;
  r.criterion = 1;
  r.name = "attention/clustering equivalence";
  r.seconds = seconds_since(start);
  r.passed = worst <= tolerance::kEquivalence && r.seconds < tolerance::kEquivalenceSeconds;
  r.detail = "200 fixtures, max |delta| = " + sci(worst);
  return r;
}

CheckResult check_gradients(std::uint64_t seed) {
  const auto start = Clock::now();
  const auto results = gradient_suite(tolerance::kGradInstances, seed, tolerance::kGradStep);
  double worst = 0.0;
  std::string worst_op;
  std::vector<std::string> failures;
  for (const GradCaseResult& g : results) {
    if (g.max_relative_error > worst) {
      worst = g.max_relative_error;
      worst_op = g.module + "." + g.op;
    }
    if (g.max_relative_error > tolerance::kGradRelative) failures.push_back(g.module + "." + g.op);
  }
  CheckResult r;
  r.criterion = 2;
  r.name = "finite-difference gradients";
  r.seconds = seconds_since(start);
  r.passed = failures.empty() && r.seconds < tolerance::kGradSeconds;
  r.detail = std::to_string(results.size()) + " ops x " + std::to_string(tolerance::kGradInstances) +
             " instances, worst rel err " + sci(worst) + " (" + worst_op + ")";
  for (const auto& f : failures) r.detail += ", FAILED " + f;
  return r;
}

CheckResult check_masked_attention(std::uint64_t seed) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  const double kappas[] = {1.0, 5.0, 20.0};
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index n = uniform_index(rng, 1, 6);
    const Index p = uniform_index(rng, 1, 30);
    const Index d = t % 2 == 0 ? 3 : 8;
    AttentionConfig cfg;
    cfg.kappa = kappas[t % 3];
    const Matrix x = random_unit_rows(n, d, rng);
    const Matrix f = random_unit_rows(p, d, rng);
    const Matrix wq = random_matrix(d, d, rng), wk = random_matrix(d, d, rng), wv = random_matrix(d, d, rng);
    const BoolMatrix allowed = random_allowed(n, p, rng, t % 5 == 0);
    const Tensor y = masked_ms_cross_attention(T(x), T(f), T(wq), T(wk), T(wv), AdditiveMask::from_allowed(allowed), cfg);
    const Matrix expected = x + subset_attention(x * wq, f * wk, f * wv, allowed, cfg.kappa);
    worst = std::max(worst, (y.matrix() - expected).cwiseAbs().maxCoeff());
  }
  CheckResult r;
  r.criterion = 3;
  r.name = "masked attention vs subset attention";
  r.seconds = seconds_since(start);
  r.passed = worst <= tolerance::kMaskedAttention;
  r.detail = "100 random masks, max |delta| = " + sci(worst);
  return r;
}

CheckResult check_unit_norm(std::uint64_t seed) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  auto deviation = [](const Tensor& t) {
    const ConstMatrixMap m = t.matrix();
    return (m.rowwise().norm().array() - 1.0).abs().maxCoeff();
  };
  double hs = 0.0, ffn = 0.0, layer = 0.0, emb = 0.0;
  for (int t = 0; t < 100; ++t) {
    AttentionConfig cfg;
    cfg.kappa = uniform_real(rng, 0.5, 30.0);
    const Index n = uniform_index(rng, 1, 8), p = uniform_index(rng, 1, 40), d = uniform_index(rng, 2, 16);
    hs = std::max(hs, deviation(hypersphere(random_tensor({n, d}, rng), random_tensor({p, d}, rng),
                                            random_tensor({p, d}, rng), cfg)));
    const DecoderLayerParams params = random_layer(d, rng);
    ffn = std::max(ffn, deviation(ffn_l2(random_tensor({n, d}, rng), params)));
    const AdditiveMask mask = AdditiveMask::from_allowed(random_allowed(n, p, rng, t % 4 == 0));
    layer = std::max(layer, deviation(decoder_layer(T(random_unit_rows(n, d, rng)),
                                                    FeatureMap{T(random_unit_rows(p, d, rng)), 1, p}, mask, params, cfg)));
    const Index h = uniform_index(rng, 2, 8), w = uniform_index(rng, 2, 8);
    BackboneParams bb = BackboneParams::init(5, 8, d, rng);
    bb.conv1_b = random_tensor({8}, rng, 0.1);
    bb.conv2_b = random_tensor({8}, rng, 0.1);
    bb.proj_b = random_tensor({d}, rng, 0.1);
    emb = std::max(emb, deviation(embed(append_coordinate_channels(random_tensor({h, w, 3}, rng)), bb).embeddings));
  }
  CheckResult r;
  r.criterion = 4;
  r.name = "unit-norm invariants";
  r.seconds = seconds_since(start);
  r.passed = hs <= tolerance::kUnitNormHypersphere && ffn <= tolerance::kUnitNormLayer &&
             layer <= tolerance::kUnitNormLayer && emb <= tolerance::kUnitNormLayer;
  r.detail = "max |norm-1|: hypersphere " + sci(hs) + ", ffn_l2 " + sci(ffn) + ", decoder_layer " + sci(layer) +
             ", embed " + sci(emb);
  return r;
}

CheckResult check_clustering_recovery(std::uint64_t seed) {
  const auto start = Clock::now();
  int perfect = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    SphereClusterSpec spec;
    spec.dim = 8;
    spec.clusters = 2 + t % 3;
    spec.points_per_cluster = 32;
    spec.spread = 0.05;
    spec.seed = seed + static_cast<std::uint64_t>(t);
    const SphereClusters data = gen_sphere_clusters(spec);
    const auto state = run_meanshift(data.points, 20.0, data.points, 1e-9, 200);
    if (adjusted_rand_index(state.assignments, data.labels) == 1.0) ++perfect;
  }
  CheckResult r;
  r.criterion = 5;
  r.name = "mean shift cluster recovery";
  r.seconds = seconds_since(start);
  const double rate = static_cast<double>(perfect) / trials;
  r.passed = rate >= tolerance::kClusteringSuccessRate && r.seconds < tolerance::kClusteringSeconds;
  r.detail = std::to_string(perfect) + "/" + std::to_string(trials) + " trials with ARI = 1";
  return r;
}

CheckResult check_hungarian(std::uint64_t seed) {
  const auto start = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int agree = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Index n = uniform_index(rng, 1, 6), m = uniform_index(rng, 1, 6);
    Matrix cost(n, m);
    for (Index i = 0; i < cost.size(); ++i) cost.data()[i] = unit(rng);
    const Matching fast = hungarian(cost);
    const Matching exhaustive = brute_force_assignment(cost);
    if (fast.pairs == exhaustive.pairs && fast.unmatched_predictions == exhaustive.unmatched_predictions) ++agree;
  }
  CheckResult r;
  r.criterion = 6;
  r.name = "Hungarian vs exhaustive search";
  r.seconds = seconds_since(start);
  r.passed = agree == trials;
  r.detail = std::to_string(agree) + "/" + std::to_string(trials) + " identical assignments";
  return r;
}

CheckResult check_metric_fixtures() {
  const auto start = Clock::now();
  std::vector<std::string> failures;

  // 4-pixel objects sharing 3 pixels.
  LabelMap gt = LabelMap::Zero(5, 5), pred = LabelMap::Zero(5, 5);
  gt.block(1, 1, 2, 2).setConstant(1);
  pred(1, 1) = pred(1, 2) = pred(2, 1) = pred(3, 3) = 1;
  const PRF o = overlap_prf(pred, gt);
  if (!(o.p == 0.75 && o.r == 0.75 && o.f == 0.75)) failures.push_back("overlap fixture");

  // Self-evaluation on generated scenes and the empty map.
  for (std::uint64_t s = 0; s < 20; ++s) {
    SceneSpec spec;
    spec.seed = s;
    spec.min_objects = 0;
    const LabelMap labels = gen_scene(spec).labels;
    const ImageCounts c = evaluate_image(labels, labels, 2);
    const PRF ov = c.overlap(), bd = c.boundary();
    if (!(ov.p == 1 && ov.r == 1 && ov.f == 1 && bd.p == 1 && bd.r == 1 && bd.f == 1 && c.f75() == 100.0)) {
      failures.push_back("self evaluation seed " + std::to_string(s));
    }
  }

  // 6x6 square shifted right by 1 and 3 pixels, dilation 1.
  LabelMap square = LabelMap::Zero(12, 14);
  square.block(3, 3, 6, 6).setConstant(1);
  LabelMap shift1 = LabelMap::Zero(12, 14), shift3 = LabelMap::Zero(12, 14);
  shift1.block(3, 4, 6, 6).setConstant(1);
  shift3.block(3, 6, 6, 6).setConstant(1);
  const double f1 = boundary_prf(shift1, square, 1).f;
  const double f3 = boundary_prf(shift3, square, 1).f;
  if (f1 != 1.0) failures.push_back("1-px boundary shift");
  if (!(f3 < 1.0)) failures.push_back("3-px boundary shift");

  CheckResult r;
  r.criterion = 7;
  r.name = "metric hand cases";
  r.seconds = seconds_since(start);
  r.passed = failures.empty();
  std::ostringstream os;
  os << "overlap fixture P/R/F " << o.p << "/" << o.r << "/" << o.f << ", boundary F shift1 " << f1 << " shift3 " << f3;
  for (const auto& f : failures) os << ", FAILED " << f;
  r.detail = os.str();
  return r;
}

std::vector<CheckResult> run_core_checks() {
  return {check_attention_clustering_equivalence(), check_gradients(),          check_masked_attention(),
          check_unit_norm(),                        check_clustering_recovery(), check_hungarian(),
          check_metric_fixtures()};
}

std::string format_result(const CheckResult& result) {
  std::ostringstream os;
  os.precision(3);
  os << (result.passed ? "[PASS] " : "[FAIL] ") << "criterion " << result.criterion << ": " << result.name << " -- "
     << result.detail << " (" << std::fixed << result.seconds << " s)";
  return os.str();
}

}  // namespace msm::verify
