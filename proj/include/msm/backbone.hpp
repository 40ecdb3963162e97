#pragma once

#include "msm/tensor.hpp"

#include <random>
#include <string_view>

namespace msm {

/// Per-pixel unit embeddings, row y*W + x.
struct FeatureMap {
  Tensor embeddings;  // [H*W x D]
  Index height = 0;
  Index width = 0;

  Index pixels() const { return height * width; }
  Index dim() const { return embeddings.empty() ? 0 : embeddings.dim(1); }
};

struct BackboneParams {
  Tensor conv1_w;  // [3 x 3 x C_in x hidden]
  Tensor conv1_b;  // [hidden]
  Tensor conv2_w;  // [3 x 3 x hidden x hidden]
  Tensor conv2_b;  // [hidden]
  Tensor proj_w;   // [1 x 1 x hidden x D]
  Tensor proj_b;   // [D]

  template <typename F>
  void visit(F&& f) {
    f("backbone.conv1.weight", conv1_w);
    f("backbone.conv1.bias", conv1_b);
    f("backbone.conv2.weight", conv2_w);
    f("backbone.conv2.bias", conv2_b);
    f("backbone.proj.weight", proj_w);
    f("backbone.proj.bias", proj_b);
  }

  Index input_channels() const { return conv1_w.dim(2); }

  /// He-normal weights, zero biases.
  static BackboneParams init(Index input_channels, Index hidden, Index dim, std::mt19937_64& rng);
};

/// Same-padded (zero) stride-1 cross-correlation.
/// x: [H x W x C_in], kernel: [kh x kw x C_in x C_out] (odd kh, kw), bias: [C_out].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// Appends normalized coordinate channels x/W and y/H to an [H x W x C] image.
Tensor append_coordinate_channels(const Tensor& image);

/// conv -> relu -> conv -> relu -> 1x1 projection -> per-pixel g().
/// `image` must already carry the coordinate channels.
FeatureMap embed(const Tensor& image, const BackboneParams& params);

}  // namespace msm
