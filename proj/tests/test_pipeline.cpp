#include "doctest.h"

#include "msm/losses.hpp"
#include "msm/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace msm;
namespace fs = std::filesystem;

namespace {

MaskPrediction prediction_from(const Matrix& logits, const Vector& scores, Index h, Index w) {
  MaskPrediction p;
  p.logits = Tensor({logits.rows(), h, w}, Eigen::Map<const Vector>(logits.data(), logits.size()));
  Matrix cls = Matrix::Zero(logits.rows(), 2);
  for (Index i = 0; i < logits.rows(); ++i) cls(i, 0) = std::log(scores[i] / (1.0 - scores[i]));
  p.class_logits = Tensor::from_matrix(cls);
  p.masks = logits.array() > 0.0;
  p.scores = scores;
  p.height = h;
  p.width = w;
  return p;
}

RunConfig tiny_config(const fs::path& root) {
  RunConfig c;
  c.model.embed_dim = 8;
  c.model.hidden_channels = 8;
  c.model.num_queries = 4;
  c.model.num_layers = 2;
  c.train.iterations = 4;
  c.train.batch_size = 2;
  c.train.lr = 1e-3;
  c.data.height = 12;
  c.data.width = 12;
  c.data.min_size = 3;
  c.data.max_size = 6;
  c.train_count = 6;
  c.val_count = 3;
  c.train.data_dir = (root / "train").string();
  c.eval.data_dir = (root / "val").string();
  c.train.output_dir = (root / "run").string();
  c.eval.output_dir = (root / "eval").string();
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("msm_test_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("confidence_map") {
  Matrix s(2, 3);
  s << 0.5, -1.0, 0.1, 0.25, 0.0, 0.2;
  const Matrix heat = confidence_map(s, 1, 3);
  CHECK(heat(0, 0) == 1.0);
  CHECK(heat(0, 1) == 0.0);
  CHECK(heat(0, 2) == doctest::Approx(0.4));
  CHECK(confidence_map(Matrix::Constant(2, 4, -0.3), 2, 2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(confidence_map(Matrix(0, 4), 2, 2).rows() == 2);
  CHECK_THROWS_AS(confidence_map(s, 2, 2), ShapeError);
}

TEST_CASE("postprocess") {
  // Query 0 covers the top row, query 1 duplicates it with a lower score,
  // query 2 covers the bottom row, query 3 is below the score threshold.
  Matrix logits(4, 4);
  logits << 5, 5, -5, -5,  //
      4, 4, -5, -5,        //
      -5, -5, 3, 3,        //
      5, 5, 5, 5;
  const Vector scores = (Vector(4) << 0.9, 0.8, 0.75, 0.3).finished();
  const MaskPrediction pred = prediction_from(logits, scores, 2, 2);

  SUBCASE("thresholding and suppression") {
    const InferenceResult r = postprocess(pred, InferOptions{}, 10.0);
    CHECK(r.kept == std::vector<Index>{0, 2});
    CHECK(r.labels(0, 0) == 1);
    CHECK(r.labels(0, 1) == 1);
    CHECK(r.labels(1, 0) == 2);
    CHECK(r.kept_scores[0] == 0.9);
    CHECK(r.heatmap.maxCoeff() == 1.0);
    CHECK((r.labels == r.stage1_labels).all());
  }
  SUBCASE("IoU of 1.0 disables suppression but duplicates lose their pixels") {
    const InferenceResult r = postprocess(pred, InferOptions{0.7, 1.0}, 10.0);
    CHECK(r.kept == std::vector<Index>{0, 2});
  }
  SUBCASE("a threshold above one keeps nothing") {
    const InferenceResult r = postprocess(pred, InferOptions{1.01, 0.5}, 10.0);
    CHECK(r.kept.empty());
    CHECK((r.labels == 0).all());
    CHECK(r.heatmap.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("labelled pixels belong to the owning mask") {
    const InferenceResult r = postprocess(pred, InferOptions{0.0, 0.5}, 10.0);
    for (Index p = 0; p < 4; ++p) {
      const std::int32_t l = r.labels.data()[p];
      if (l > 0) CHECK(pred.masks(r.kept[static_cast<std::size_t>(l - 1)], p));
    }
  }
}

TEST_CASE("inference on an untrained model") {
  RunConfig c = tiny_config(scratch_dir("infer"));
  const Model model = Model::init(c.model);
  SceneSpec spec = c.data;
  const Scene scene = gen_scene(spec);
  const InferenceResult a = infer(model, scene.image);
  const InferenceResult b = infer(model, scene.image);
  CHECK(a.labels.rows() == 12);
  CHECK((a.labels == b.labels).all());
  CHECK(a.heatmap.minCoeff() >= 0.0);
  CHECK(a.heatmap.maxCoeff() <= 1.0);
  CHECK(static_cast<Index>(object_ids(a.labels).size()) == static_cast<Index>(a.kept.size()));
}

TEST_CASE("two-stage refinement only relabels first-stage pixels") {
  RunConfig c = tiny_config(scratch_dir("refine"));
  const Model stage2 = Model::init(c.model);
  SceneSpec spec = c.data;
  spec.seed = 3;
  const Scene scene = gen_scene(spec);
  InferenceResult first;
  first.labels = scene.labels;
  const InferenceResult refined = refine_two_stage(scene.image, first, stage2, RefineOptions{16, 0.25, {0.0, 0.5}, 1});
  CHECK(((first.labels == 0) <= (refined.labels == 0)).all());
  CHECK((refined.stage1_labels == first.labels).all());

  InferenceResult none;
  none.labels = LabelMap::Zero(12, 12);
  CHECK((refine_two_stage(scene.image, none, stage2).labels == 0).all());

  // Nothing passes the threshold: every parent mask is kept unchanged.
  const InferenceResult kept = refine_two_stage(scene.image, first, stage2, RefineOptions{16, 0.25, {1.01, 0.5}, 1});
  CHECK((kept.labels == compact_labels(first.labels)).all());
}

TEST_CASE("checkpoints round trip") {
  const fs::path dir = scratch_dir("ckpt");
  RunConfig c = tiny_config(dir);
  const Model model = Model::init(c.model);
  AdamW opt;
  std::vector<Tensor> params;
  std::vector<Vector> grads;
  for (const auto& [name, t] : model.params().named()) {
    params.push_back(t);
    grads.push_back(Vector::Ones(t.size()));
  }
  opt.step(params, grads);
  save_checkpoint(dir, model, &opt);
  const Model back = load_checkpoint(dir);
  CHECK(back.config().num_layers == 2);
  const auto a = model.params().named(), b = back.params().named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.data() == b[i].second.data());
  }
  AdamW restored;
  CHECK(load_optimizer_state(dir, back, restored));
  CHECK(restored.step_count() == 1);
  CHECK(restored.first_moments()[3] == opt.first_moments()[3]);
  CHECK_THROWS(load_checkpoint(dir / "missing"));
}

TEST_CASE("training, evaluation and ablation on a tiny dataset") {
  const fs::path dir = scratch_dir("train");
  RunConfig c = tiny_config(dir);
  generate_dataset(c);
  CHECK(read_manifest(c.train.data_dir).size() == 6);
  CHECK(read_manifest(c.eval.data_dir).size() == 3);

  const TrainResult a = train(c);
  CHECK(a.losses.size() == 4);
  for (double l : a.losses) CHECK(std::isfinite(l));
  CHECK(fs::exists(dir / "run" / "config.txt"));
  CHECK(fs::exists(dir / "run" / "checkpoint" / "manifest.txt"));
  const std::string csv = file_bytes(dir / "run" / "loss.csv");
  CHECK(csv.rfind("iter,loss\n", 0) == 0);

  c.train.output_dir = (dir / "run2").string();
  const TrainResult b = train(c);
  CHECK(a.losses == b.losses);
  CHECK(file_bytes(dir / "run2" / "loss.csv") == csv);

  const MetricsReport r1 = evaluate(c, dir / "run" / "checkpoint", EvaluateFlags{});
  CHECK(fs::exists(dir / "eval" / "report.json"));
  CHECK(fs::exists(dir / "eval" / "config.txt"));
  const std::string json = file_bytes(dir / "eval" / "report.json");
  evaluate(c, dir / "run2" / "checkpoint", EvaluateFlags{});
  CHECK(file_bytes(dir / "eval" / "report.json") == json);
  CHECK(r1.overlap.f >= 0.0);
  CHECK(r1.overlap.f <= 1.0);

  EvaluateFlags oracle;
  oracle.oracle = true;
  const MetricsReport perfect = evaluate(c, {}, oracle);
  CHECK(perfect.overlap.f == 1.0);
  CHECK(perfect.boundary.f == 1.0);
  CHECK(perfect.f75 == 100.0);

  c.train.iterations = 2;
  const auto rows = ablate_layers(c, {1, 2});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].layers == 2);
  const std::string table = format_ablation_table(rows);
  CHECK(table.rfind("layers,overlap_p", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}

TEST_CASE("training rejects bad inputs") {
  RunConfig c = tiny_config(scratch_dir("bad"));
  CHECK_THROWS_AS(train(c), TrainingError);
  CHECK_THROWS_AS(train_on(c, {}), TrainingError);
  EvaluateFlags refine;
  refine.refine = true;
  CHECK_THROWS(evaluate(std::vector<Sample>{}, nullptr, c.eval, refine));
}
