#pragma once

#include "msm/backbone.hpp"
#include "msm/config.hpp"
#include "msm/decoder.hpp"
#include "msm/optim.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace msm {

struct ModelParams {
  BackboneParams backbone;
  DecoderParams decoder;

  template <typename F>
  void visit(F&& f) {
    backbone.visit(f);
    decoder.visit(f);
  }

  /// Flat (name, tensor) list in visiting order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Replaces the tensors in visiting order.
  void assign(const std::vector<Tensor>& values);
};

/// Backbone + mean shift decoder with its configuration.
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, ModelParams params);
  static Model init(const ModelConfig& config, Index raw_channels = 3);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  DecoderConfig decoder_config() const;

  FeatureMap embed_image(const Tensor& image) const { return embed_image(image, params_); }
  FeatureMap embed_image(const Tensor& image, const ModelParams& params) const;

  /// Prediction list from forward_stack for an [H x W x 3] image.
  std::vector<MaskPrediction> forward(const Tensor& image) const { return forward(image, params_); }
  /// Same with an alternative (e.g. tape-tracked) parameter set.
  std::vector<MaskPrediction> forward(const Tensor& image, const ModelParams& params) const;

 private:
  ModelConfig config_;
  ModelParams params_;
};

/// Directory checkpoint: one MSMT file per tensor plus manifest.txt
/// ("name file shape" per line) and model.cfg. Optimizer moments are stored
/// as optim.m.<name> / optim.v.<name> with the step count in optim.step.
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const AdamW* optimizer = nullptr);
Model load_checkpoint(const std::filesystem::path& dir);
/// Restores optimizer state if present; returns false otherwise.
bool load_optimizer_state(const std::filesystem::path& dir, const Model& model, AdamW& optimizer);

}  // namespace msm
