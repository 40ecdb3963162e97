#pragma once

#include "msm/config.hpp"
#include "msm/label_map.hpp"
#include "msm/metrics.hpp"
#include "msm/model.hpp"
#include "msm/synthdata.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace msm {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Model model;
  std::vector<double> losses;  // one per iteration
  std::filesystem::path checkpoint_dir;
};

/// Called after each iteration with (iteration, loss).
using ProgressFn = std::function<void(Index, double)>;

/// Seeded AdamW training on config.train.data_dir. Writes the checkpoint to
/// <output_dir>/checkpoint, the loss log to <output_dir>/loss.csv and the
/// resolved configuration to <output_dir>/config.txt.
TrainResult train(const RunConfig& config, const ProgressFn& progress = {});

/// Training on in-memory samples; nothing is written.
TrainResult train_on(const RunConfig& config, const std::vector<Sample>& samples, const ProgressFn& progress = {});

struct InferOptions {
  double score_threshold = 0.7;
  double nms_iou = 0.5;
};

struct InferenceResult {
  LabelMap labels;
  std::vector<Index> kept;  // query indices owning labels 1..K, in that order
  Vector kept_scores;
  Matrix heatmap;              // H x W in [0, 1]
  MaskPrediction prediction;   // final-layer prediction of the (first) stage
  LabelMap stage1_labels;      // labels before refinement (equal to labels without it)
  double seconds = 0.0;
};

/// Per-pixel max over the given queries of relu(cosine similarity), divided
/// by the global maximum (all zeros when that maximum is 0). `similarities`
/// is [K x H*W].
Matrix confidence_map(const Eigen::Ref<const Matrix>& similarities, Index height, Index width);

/// Keeps queries with score >= threshold, suppresses duplicates by mask IoU
/// (higher score wins, ties to the lower index), then labels each pixel with
/// the surviving query maximizing score * probability among those whose
/// probability exceeds 0.5 (ties to the lower index).
InferenceResult postprocess(const MaskPrediction& prediction, const InferOptions& options, double mask_scale);

InferenceResult infer(const Model& model, const Tensor& image, const InferOptions& options = {});

struct RefineOptions {
  Index roi_size = 32;
  double pad_ratio = 0.25;
  InferOptions infer;
  /// Stage-2 objects smaller than this many original-resolution pixels are
  /// ignored.
  Index min_area = 2;
};

/// Re-segments every first-stage mask inside its padded bounding box with the
/// stage-2 model. Stage-2 objects replace the parent mask's pixels (so one
/// mask may split into several); pixels outside first-stage masks are never
/// changed. Masks whose ROI is degenerate or where stage 2 finds nothing
/// are kept as they are.
InferenceResult refine_two_stage(const Tensor& image, const InferenceResult& first, const Model& stage2,
                                 const RefineOptions& options = {});

struct EvaluateFlags {
  /// Score the ground truth against itself instead of running a model.
  bool oracle = false;
  bool refine = false;
  /// Optional directory for predicted label maps and heatmaps.
  std::filesystem::path predictions_dir;
};

MetricsReport evaluate(const std::vector<Sample>& samples, const Model* model, const EvalConfig& eval,
                       const EvaluateFlags& flags, const Model* stage2 = nullptr);

/// Loads the split and checkpoints named by `eval`, evaluates, and writes
/// report.json plus the resolved config into eval.output_dir.
MetricsReport evaluate(const RunConfig& config, const std::filesystem::path& checkpoint, const EvaluateFlags& flags);

struct AblationRow {
  Index layers = 0;
  PRF overlap;
  PRF boundary;
  double f75 = 0.0;
  double final_loss = 0.0;
};

/// Trains and evaluates one model per layer count with identical seeds and
/// data. Training reads config.train.data_dir, evaluation config.eval.data_dir.
std::vector<AblationRow> ablate_layers(const RunConfig& config, const std::vector<Index>& layer_counts,
                                       const ProgressFn& progress = {});
std::string format_ablation_table(const std::vector<AblationRow>& rows);

/// Writes the train/val splits described by the [data] section.
void generate_dataset(const RunConfig& config);

}  // namespace msm
