#include "msm/pipeline.hpp"

#include "msm/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace msm {

namespace fs = std::filesystem;

namespace {

std::string format_loss(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct TrackedParams {
  ModelParams params;
  std::vector<Tensor> leaves;
};

TrackedParams track_all(const ModelParams& source, Tape& tape) {
  TrackedParams out{source, {}};
  out.params.visit([&](const std::string&, Tensor& t) {
    t = tape.track(t);
    out.leaves.push_back(t);
  });
  return out;
}

LabelMap heatmap_to_labels(const Matrix& heatmap) {
  return heatmap.unaryExpr([](double v) { return static_cast<std::int32_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); })
      .array();
}

}  // namespace

// ---- training -------------------------------------------------------------

TrainResult train_on(const RunConfig& config, const std::vector<Sample>& samples, const ProgressFn& progress) {
  if (samples.empty()) throw TrainingError("train: no training samples");
  if (config.train.batch_size < 1 || config.train.iterations < 0) throw TrainingError("train: bad batch/iteration settings");
  LossWeights weights;

  std::vector<Matrix> gt_masks;
  for (const Sample& s : samples) gt_masks.push_back(masks_from_labels(s.labels));

  Model model = Model::init(config.model);
  AdamW optimizer(AdamWOptions{config.train.lr, 0.9, 0.999, 1e-8, config.train.weight_decay, config.train.warmup_steps});
  std::mt19937_64 rng(config.train.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  for (Index it = 0; it < config.train.iterations; ++it) {
    Tape tape;
    TrackedParams tracked = track_all(model.params(), tape);
    Tensor batch_loss;
    for (Index b = 0; b < config.train.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const auto preds = model.forward(samples[idx].image, tracked.params);
      Tensor loss = total_loss(preds, gt_masks[idx], weights, config.model.aux_loss);
      batch_loss = batch_loss.empty() ? loss : add(batch_loss, loss);
    }
    batch_loss = scale(batch_loss, 1.0 / static_cast<double>(config.train.batch_size));
    const double value = batch_loss.item();
    if (!std::isfinite(value)) {
      throw TrainingError("train: non-finite loss at iteration " + std::to_string(it) + " (" + format_loss(value) + ")");
    }
    tape.backward(batch_loss);
    std::vector<Vector> grads;
    grads.reserve(tracked.leaves.size());
    for (const Tensor& leaf : tracked.leaves) grads.push_back(tape.grad(leaf));
    const double grad_norm = clip_grad_norm(grads, config.train.grad_clip);
    if (!std::isfinite(grad_norm)) {
      throw TrainingError("train: non-finite gradient norm at iteration " + std::to_string(it));
    }
    std::vector<Tensor> current;
    for (const auto& [name, t] : model.params().named()) current.push_back(t);
    model.params().assign(optimizer.step(current, grads));
    result.losses.push_back(value);
    if (progress) progress(it, value);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(const RunConfig& config, const ProgressFn& progress) {
  if (!fs::exists(fs::path(config.train.data_dir) / "manifest.txt")) {
    throw TrainingError("train: dataset directory " + config.train.data_dir + " has no manifest.txt");
  }
  const auto samples = load_split(config.train.data_dir);
  TrainResult result = train_on(config, samples, progress);

  const fs::path out = config.train.output_dir;
  fs::create_directories(out);
  config.save(out / "config.txt");
  {
    std::ofstream csv(out / "loss.csv");
    csv << "iter,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) csv << i << ',' << format_loss(result.losses[i]) << '\n';
  }
  result.checkpoint_dir = out / "checkpoint";
  save_checkpoint(result.checkpoint_dir, result.model);
  return result;
}

// ---- inference ------------------------------------------------------------

Matrix confidence_map(const Eigen::Ref<const Matrix>& similarities, Index height, Index width) {
  if (similarities.cols() != height * width) throw ShapeError("confidence_map: similarities are not K x H*W");
  Matrix heat = Matrix::Zero(height, width);
  if (similarities.rows() == 0) return heat;
  const Eigen::RowVectorXd best = similarities.cwiseMax(0.0).colwise().maxCoeff();
  const double top = best.maxCoeff();
  if (top <= 0.0) return heat;
  return Eigen::Map<const Matrix>(best.data(), height, width) / top;
}

InferenceResult postprocess(const MaskPrediction& prediction, const InferOptions& options, double mask_scale) {
  InferenceResult result;
  const Index n = prediction.num_queries(), h = prediction.height, w = prediction.width;
  const ConstMatrixMap logits(prediction.logits.data().data(), n, h * w);
  const Matrix prob = logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });

  std::vector<Index> candidates;
  for (Index q = 0; q < n; ++q) {
    if (prediction.scores[q] >= options.score_threshold && prediction.masks.row(q).any()) candidates.push_back(q);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](Index a, Index b) { return prediction.scores[a] > prediction.scores[b]; });
  std::vector<Index> accepted;
  for (Index q : candidates) {
    bool duplicate = false;
    for (Index a : accepted) {
      const double inter = static_cast<double>((prediction.masks.row(q) && prediction.masks.row(a)).count());
      const double uni = static_cast<double>((prediction.masks.row(q) || prediction.masks.row(a)).count());
      if (uni > 0 && inter / uni > options.nms_iou) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) accepted.push_back(q);
  }
  std::sort(accepted.begin(), accepted.end());

  result.labels = LabelMap::Zero(h, w);
  std::vector<Index> pixel_count(accepted.size(), 0);
  for (Index p = 0; p < h * w; ++p) {
    double best = -1.0;
    Index owner = -1;
    for (std::size_t k = 0; k < accepted.size(); ++k) {
      const Index q = accepted[k];
      if (!prediction.masks(q, p)) continue;
      const double v = prediction.scores[q] * prob(q, p);
      if (v > best) {
        best = v;
        owner = static_cast<Index>(k);
      }
    }
    if (owner >= 0) {
      result.labels.data()[p] = static_cast<std::int32_t>(owner + 1);
      ++pixel_count[static_cast<std::size_t>(owner)];
    }
  }
  // Queries that lost every pixel do not own a label.
  std::vector<std::int32_t> remap(accepted.size() + 1, 0);
  for (std::size_t k = 0; k < accepted.size(); ++k) {
    if (pixel_count[k] == 0) continue;
    result.kept.push_back(accepted[k]);
    remap[k + 1] = static_cast<std::int32_t>(result.kept.size());
  }
  result.labels = result.labels.unaryExpr([&](std::int32_t v) { return remap[static_cast<std::size_t>(v)]; }).eval();
  result.kept_scores.resize(static_cast<Index>(result.kept.size()));
  Matrix similarities(static_cast<Index>(result.kept.size()), h * w);
  for (std::size_t k = 0; k < result.kept.size(); ++k) {
    result.kept_scores[static_cast<Index>(k)] = prediction.scores[result.kept[k]];
    similarities.row(static_cast<Index>(k)) = logits.row(result.kept[k]) / mask_scale;
  }
  result.heatmap = confidence_map(similarities, h, w);
  result.prediction = prediction;
  result.stage1_labels = result.labels;
  return result;
}

InferenceResult infer(const Model& model, const Tensor& image, const InferOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto preds = model.forward(image);
  InferenceResult result = postprocess(preds.back(), options, model.config().mask_scale);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

InferenceResult refine_two_stage(const Tensor& image, const InferenceResult& first, const Model& stage2,
                                 const RefineOptions& options) {
  InferenceResult result = first;
  result.stage1_labels = first.labels;
  const Index h = first.labels.rows(), w = first.labels.cols();
  const auto parents = object_ids(first.labels);
  if (parents.empty()) return result;
  const auto start = std::chrono::steady_clock::now();

  LabelMap out = LabelMap::Zero(h, w);
  std::int32_t next_id = 1;
  for (std::int32_t parent : parents) {
    const MaskArray parent_mask = first.labels == parent;
    const Box tight = bounding_box(parent_mask);
    const Box roi = padded_box(tight, options.pad_ratio, h, w);
    bool replaced = false;
    if (roi.height > 1 && roi.width > 1) {
      const Tensor crop = crop_resize(image, roi, options.roi_size, options.roi_size);
      const InferenceResult local = infer(stage2, crop, options.infer);
      // Map every parent pixel to its ROI cell and collect stage-2 labels.
      LabelMap mapped = LabelMap::Zero(h, w);
      for (Index y = roi.top; y < roi.bottom(); ++y) {
        const Index cy = std::min(options.roi_size - 1, ((y - roi.top) * options.roi_size + options.roi_size / 2) / roi.height);
        for (Index x = roi.left; x < roi.right(); ++x) {
          if (!parent_mask(y, x)) continue;
          const Index cx = std::min(options.roi_size - 1, ((x - roi.left) * options.roi_size + options.roi_size / 2) / roi.width);
          mapped(y, x) = local.labels(cy, cx);
        }
      }
      std::vector<std::int32_t> pieces;
      for (std::int32_t id : object_ids(mapped)) {
        if ((mapped == id).count() >= options.min_area) pieces.push_back(id);
      }
      if (!pieces.empty()) {
        for (std::int32_t id : pieces) {
          out = (mapped == id).select(next_id, out);
          ++next_id;
        }
        replaced = true;
      }
    }
    if (!replaced) {
      out = parent_mask.select(next_id, out);
      ++next_id;
    }
  }
  result.labels = compact_labels(out);
  result.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---- evaluation -----------------------------------------------------------

MetricsReport evaluate(const std::vector<Sample>& samples, const Model* model, const EvalConfig& eval,
                       const EvaluateFlags& flags, const Model* stage2) {
  if (!flags.oracle && model == nullptr) throw std::invalid_argument("evaluate: model required unless oracle mode");
  if (flags.refine && stage2 == nullptr) throw std::invalid_argument("evaluate: refinement requires a stage-2 model");
  if (!flags.predictions_dir.empty()) fs::create_directories(flags.predictions_dir);
  InferOptions infer_options{eval.score_threshold, eval.nms_iou};
  RefineOptions refine_options{eval.roi_size, eval.pad_ratio, infer_options, 2};

  std::vector<std::string> names;
  std::vector<ImageCounts> counts;
  for (const Sample& s : samples) {
    LabelMap predicted;
    if (flags.oracle) {
      predicted = s.labels;
    } else {
      InferenceResult r = infer(*model, s.image, infer_options);
      if (flags.refine) r = refine_two_stage(s.image, r, *stage2, refine_options);
      predicted = r.labels;
      if (!flags.predictions_dir.empty()) {
        const std::string stem = fs::path(s.name).stem().string();
        write_pgm(flags.predictions_dir / (stem + "_pred.pgm"), predicted);
        write_pgm(flags.predictions_dir / (stem + "_heat.pgm"), heatmap_to_labels(r.heatmap));
      }
    }
    names.push_back(s.name);
    counts.push_back(evaluate_image(predicted, s.labels, eval.boundary_dilation));
  }
  return MetricsReport::aggregate(std::move(names), std::move(counts), eval.boundary_dilation);
}

MetricsReport evaluate(const RunConfig& config, const fs::path& checkpoint, const EvaluateFlags& flags) {
  const auto samples = load_split(config.eval.data_dir);
  Model model, stage2;
  if (!flags.oracle) model = load_checkpoint(checkpoint);
  if (flags.refine) {
    if (config.eval.stage2_checkpoint.empty()) throw std::invalid_argument("evaluate: eval.stage2_checkpoint is not set");
    stage2 = load_checkpoint(config.eval.stage2_checkpoint);
  }
  const MetricsReport report =
      evaluate(samples, flags.oracle ? nullptr : &model, config.eval, flags, flags.refine ? &stage2 : nullptr);
  const fs::path out = config.eval.output_dir;
  fs::create_directories(out);
  config.save(out / "config.txt");
  std::ofstream(out / "report.json") << report.to_json();
  return report;
}

std::vector<AblationRow> ablate_layers(const RunConfig& config, const std::vector<Index>& layer_counts,
                                       const ProgressFn& progress) {
  if (layer_counts.empty()) throw std::invalid_argument("ablate_layers: no layer counts");
  const auto train_samples = load_split(config.train.data_dir);
  const auto eval_samples = load_split(config.eval.data_dir);
  std::vector<AblationRow> rows;
  for (Index layers : layer_counts) {
    if (layers < 1) throw std::invalid_argument("ablate_layers: layer counts must be >= 1");
    RunConfig c = config;
    c.model.num_layers = layers;
    TrainResult trained = train_on(c, train_samples, progress);
    const MetricsReport report = evaluate(eval_samples, &trained.model, c.eval, EvaluateFlags{});
    rows.push_back(AblationRow{layers, report.overlap, report.boundary, report.f75,
                               trained.losses.empty() ? 0.0 : trained.losses.back()});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "layers,overlap_p,overlap_r,overlap_f,boundary_p,boundary_r,boundary_f,f75,final_loss\n";
  os << std::setprecision(6) << std::fixed;
  for (const AblationRow& r : rows) {
    os << r.layers << ',' << r.overlap.p << ',' << r.overlap.r << ',' << r.overlap.f << ',' << r.boundary.p << ','
       << r.boundary.r << ',' << r.boundary.f << ',' << r.f75 << ',' << r.final_loss << '\n';
  }
  return os.str();
}

void generate_dataset(const RunConfig& config) {
  SceneSpec train_spec = config.data;
  gen_split(train_spec, config.train_count, config.train.data_dir);
  SceneSpec val_spec = config.data;
  val_spec.seed = config.val_seed;
  gen_split(val_spec, config.val_count, config.eval.data_dir);
}

}  // namespace msm
