#include "CLI11.hpp"

#include "checks.hpp"
#include "msm/clustering.hpp"
#include "msm/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::vector<std::string> config_paths;  // later files override earlier ones
  std::vector<std::string> overrides;  // section.key=value
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_paths, "Configuration file ([model]/[train]/[data]/[eval] sections); repeatable")
      ->take_all();
  cmd->add_option("-s,--set", opts.overrides, "Override a setting, e.g. train.iterations=500")->take_all();
}

msm::RunConfig resolve_config(const CommonOptions& opts) {
  std::string text;
  for (const std::string& path : opts.config_paths) {
    std::ifstream is(path);
    if (!is) throw msm::ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    text += ss.str() + "\n";
  }
  for (const std::string& o : opts.overrides) {
    const auto dot = o.find('.');
    const auto eq = o.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
      throw msm::ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    text += "\n[" + o.substr(0, dot) + "]\n" + o.substr(dot + 1, eq - dot - 1) + " = " + o.substr(eq + 1) + "\n";
  }
  return msm::RunConfig::parse(text);
}

msm::LabelMap heatmap_pgm(const msm::Matrix& heat) {
  return heat.unaryExpr([](double v) { return static_cast<std::int32_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); })
      .array();
}

void print_metrics(const msm::MetricsReport& r) {
  std::printf("overlap  P %.4f  R %.4f  F %.4f\n", r.overlap.p, r.overlap.r, r.overlap.f);
  std::printf("boundary P %.4f  R %.4f  F %.4f\n", r.boundary.p, r.boundary.r, r.boundary.f);
  std::printf("%%75     %.2f\n", r.f75);
}

msm::ProgressFn progress_printer(msm::Index every) {
  return [every](msm::Index it, double loss) {
    if (every > 0 && (it + 1) % every == 0) std::printf("iter %6ld  loss %.6f\n", static_cast<long>(it + 1), loss);
    std::fflush(stdout);
  };
}

/// Unit per-pixel features from colour and position, centred per channel.
msm::Matrix colour_features(const msm::Tensor& image) {
  const msm::Tensor with_coords = msm::append_coordinate_channels(image);
  const msm::Index h = image.dim(0), w = image.dim(1), c = with_coords.dim(2);
  msm::Matrix f = msm::ConstMatrixMap(with_coords.data().data(), h * w, c);
  f.rowwise() -= f.colwise().mean();
  f.rowwise().normalize();
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean shift mask transformer: training, inference and evaluation on synthetic scenes"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, ablate_opts, infer_opts;

  auto* gen = app.add_subcommand("gen", "Generate train/val scene splits");
  add_common(gen, gen_opts);

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, train_opts);
  msm::Index log_every = 100;
  train->add_option("--log-every", log_every, "Print the loss every N iterations (0 = never)");

  auto* infer = app.add_subcommand("infer", "Segment one PPM image");
  add_common(infer, infer_opts);
  std::string infer_ckpt, infer_image, infer_out, infer_stage2;
  infer->add_option("--checkpoint", infer_ckpt, "Stage-1 checkpoint directory")->required();
  infer->add_option("--image", infer_image, "Input PPM (P6) image")->required()->check(CLI::ExistingFile);
  infer->add_option("-o,--out", infer_out, "Output directory")->required();
  infer->add_option("--stage2", infer_stage2, "Stage-2 checkpoint; enables zoom-in refinement");

  auto* eval = app.add_subcommand("eval", "Evaluate on a split and write report.json");
  add_common(eval, eval_opts);
  std::string eval_ckpt, eval_pred_dir;
  bool eval_oracle = false;
  eval->add_option("--checkpoint", eval_ckpt, "Stage-1 checkpoint directory");
  eval->add_flag("--oracle", eval_oracle, "Score the ground truth against itself");
  eval->add_option("--predictions", eval_pred_dir, "Also write predicted label maps and heatmaps here");

  auto* cluster = app.add_subcommand("cluster", "Classical mean shift segmentation of one image");
  std::string cl_image, cl_out, cl_ckpt;
  msm::MeanShiftOptions cl_options;
  cluster->add_option("--image", cl_image, "Input PPM (P6) image")->required()->check(CLI::ExistingFile);
  cluster->add_option("-o,--out", cl_out, "Output PGM label map")->required();
  cluster->add_option("--checkpoint", cl_ckpt, "Cluster backbone embeddings of this model instead of colour");
  cluster->add_option("--kappa", cl_options.kappa, "Kernel concentration");
  cluster->add_option("--stride", cl_options.seed_stride, "Seed every N-th pixel");
  cluster->add_option("--merge", cl_options.merge_cos_threshold, "Cosine above which centers merge");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one model per decoder depth");
  add_common(ablate, ablate_opts);
  std::vector<msm::Index> layer_counts{2, 4, 6};
  std::string ablate_out = "runs/ablation";
  ablate->add_option("--layers", layer_counts, "Decoder layer counts")->delimiter(',');
  ablate->add_option("-o,--out", ablate_out, "Output directory");

  auto* verify = app.add_subcommand("verify", "Run the oracle and invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const msm::RunConfig config = resolve_config(gen_opts);
      msm::generate_dataset(config);
      config.save(fs::path(config.train.data_dir) / "config.txt");
      config.save(fs::path(config.eval.data_dir) / "config.txt");
      std::printf("wrote %ld training scenes to %s and %ld validation scenes to %s\n",
                  static_cast<long>(config.train_count), config.train.data_dir.c_str(),
                  static_cast<long>(config.val_count), config.eval.data_dir.c_str());
    } else if (train->parsed()) {
      const msm::RunConfig config = resolve_config(train_opts);
      const auto start = std::chrono::steady_clock::now();
      const msm::TrainResult result = msm::train(config, progress_printer(log_every));
      std::printf("final loss %.6f after %zu iterations (%.1f s); checkpoint %s\n",
                  result.losses.empty() ? 0.0 : result.losses.back(), result.losses.size(),
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                  result.checkpoint_dir.c_str());
    } else if (infer->parsed()) {
      const msm::RunConfig config = resolve_config(infer_opts);
      const msm::Model model = msm::load_checkpoint(infer_ckpt);
      const msm::Tensor image = msm::read_ppm(infer_image);
      msm::InferOptions options{config.eval.score_threshold, config.eval.nms_iou};
      msm::InferenceResult r = msm::infer(model, image, options);
      std::printf("stage 1: %zu objects in %.4f s\n", r.kept.size(), r.seconds);
      if (!infer_stage2.empty()) {
        const msm::Model stage2 = msm::load_checkpoint(infer_stage2);
        const double before = r.seconds;
        r = msm::refine_two_stage(image, r, stage2,
                                  msm::RefineOptions{config.eval.roi_size, config.eval.pad_ratio, options, 2});
        std::printf("stage 2: %zu objects in %.4f s\n", msm::object_ids(r.labels).size(), r.seconds - before);
      }
      fs::create_directories(infer_out);
      msm::write_pgm(fs::path(infer_out) / "labels.pgm", r.labels);
      msm::write_pgm(fs::path(infer_out) / "heatmap.pgm", heatmap_pgm(r.heatmap));
      config.save(fs::path(infer_out) / "config.txt");
    } else if (eval->parsed()) {
      msm::RunConfig config = resolve_config(eval_opts);
      if (!eval_oracle && eval_ckpt.empty()) throw std::invalid_argument("eval: --checkpoint or --oracle required");
      msm::EvaluateFlags flags{eval_oracle, config.eval.refine, eval_pred_dir};
      const msm::MetricsReport report = msm::evaluate(config, eval_ckpt, flags);
      print_metrics(report);
      std::printf("report written to %s\n", (fs::path(config.eval.output_dir) / "report.json").c_str());
    } else if (cluster->parsed()) {
      const msm::Tensor image = msm::read_ppm(cl_image);
      msm::Matrix features;
      if (!cl_ckpt.empty()) {
        const msm::Model model = msm::load_checkpoint(cl_ckpt);
        features = model.embed_image(image).embeddings.matrix();
      } else {
        features = colour_features(image);
      }
      const msm::LabelMap labels = msm::segment_by_clustering(features, image.dim(0), image.dim(1), cl_options);
      msm::write_pgm(cl_out, labels);
      std::printf("%zu clusters\n", msm::object_ids(labels).size());
    } else if (ablate->parsed()) {
      const msm::RunConfig config = resolve_config(ablate_opts);
      const auto rows = msm::ablate_layers(config, layer_counts);
      const std::string table = msm::format_ablation_table(rows);
      fs::create_directories(ablate_out);
      std::ofstream(fs::path(ablate_out) / "ablation.csv") << table;
      config.save(fs::path(ablate_out) / "config.txt");
      std::cout << table;
    } else if (verify->parsed()) {
      bool ok = true;
      for (const auto& r : msm::verify::run_core_checks()) {
        std::cout << msm::verify::format_result(r) << '\n';
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
