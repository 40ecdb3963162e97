#pragma once

#include "msm/synthdata.hpp"
#include "msm/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace msm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  Index embed_dim = 16;
  Index hidden_channels = 16;
  Index num_queries = 8;
  Index num_layers = 6;
  double kappa = 20.0;
  double mask_scale = 10.0;
  bool use_mask = true;
  bool aux_loss = false;
  std::uint64_t init_seed = 1;
};

struct TrainConfig {
  std::string data_dir = "data/train";
  std::string output_dir = "runs/stage1";
  Index iterations = 3000;
  Index batch_size = 4;
  double lr = 1e-4;
  double weight_decay = 0.05;
  double grad_clip = 1.0;
  Index warmup_steps = 0;
  std::uint64_t seed = 7;
};

struct EvalConfig {
  std::string data_dir = "data/val";
  std::string output_dir = "runs/eval";
  double score_threshold = 0.7;
  /// Kept masks overlapping a higher-scoring kept mask by more than this IoU
  /// are suppressed before pixel assignment.
  double nms_iou = 0.5;
  int boundary_dilation = 2;
  bool refine = false;
  std::string stage2_checkpoint;
  Index roi_size = 32;
  double pad_ratio = 0.25;
};

/// Full run configuration. Text form: `[model]`, `[train]`, `[data]`,
/// `[eval]` sections of `key = value` lines; `#` starts a comment.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SceneSpec data;
  Index train_count = 400;
  Index val_count = 100;
  std::uint64_t val_seed = 1000000;
  EvalConfig eval;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Every key with its resolved value, in a fixed order.
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;
};

/// Raw section -> key -> value view of a config document.
using ConfigDocument = std::map<std::string, std::map<std::string, std::string>>;
ConfigDocument parse_config_document(const std::string& text);

}  // namespace msm
