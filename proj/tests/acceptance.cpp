// Acceptance run: one PASS/FAIL line per criterion. Criteria 8-11 train real
// models, so this binary takes several minutes on one core.

#include "checks.hpp"
#include "msm/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace msm;
namespace fs = std::filesystem;

namespace {

namespace tolerance {
constexpr double kOverlapF = 0.90;
constexpr double kBoundaryF = 0.75;
constexpr Index kMaxIterations = 3000;
}  // namespace tolerance

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return {};
  return {std::istreambuf_iterator<char>(is), {}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

RunConfig reference_config(const fs::path& work) {
  RunConfig c;
  c.model.embed_dim = 16;
  c.model.num_queries = 8;
  c.model.num_layers = 6;
  c.model.kappa = 20.0;
  c.train.lr = 1e-4;
  c.train.batch_size = 4;
  c.train.iterations = tolerance::kMaxIterations;
  c.data.height = 24;
  c.data.width = 24;
  c.data.min_objects = 1;
  c.data.max_objects = 4;
  c.val_count = 100;
  c.eval.boundary_dilation = 2;
  c.train.data_dir = (work / "data" / "train").string();
  c.eval.data_dir = (work / "data" / "val").string();
  c.train.output_dir = (work / "reference").string();
  c.eval.output_dir = (work / "reference_eval").string();
  return c;
}

void log_progress(const std::string& tag, Index it, double loss) {
  if ((it + 1) % 500 == 0) std::cerr << "  " << tag << " iter " << it + 1 << " loss " << loss << '\n';
}

/// Two axis-aligned rectangles sharing an edge, drawn in distinct palette
/// colours. Returns the scene and the stage-1 result that merges them.
struct SplitFixture {
  Scene scene;
  InferenceResult merged;
};

SplitFixture touching_rectangles(Box a, Box b, std::size_t color_a, std::size_t color_b, std::uint64_t seed) {
  const auto& palette = object_palette();
  std::vector<SceneObject> objects{{ShapeKind::rectangle, a, palette[color_a % palette.size()]},
                                   {ShapeKind::rectangle, b, palette[color_b % palette.size()]}};
  std::mt19937_64 rng(seed);
  SplitFixture f;
  f.scene = render_scene(24, 24, objects, background_color(), 0.02, rng);
  f.merged.labels = (f.scene.labels > 0).cast<std::int32_t>();
  return f;
}

verify::CheckResult check_two_stage(const Model& stage2, const EvalConfig& eval) {
  const auto start = Clock::now();
  verify::CheckResult r;
  r.criterion = 10;
  r.name = "two-stage split of merged touching rectangles";
  std::vector<SplitFixture> fixtures;
  fixtures.push_back(touching_rectangles({7, 3, 9, 8}, {7, 11, 9, 8}, 0, 1, 11));
  fixtures.push_back(touching_rectangles({3, 8, 8, 9}, {11, 8, 8, 9}, 2, 3, 12));
  fixtures.push_back(touching_rectangles({5, 5, 7, 7}, {9, 12, 10, 6}, 4, 5, 13));

  RefineOptions options;
  options.roi_size = eval.roi_size;
  options.pad_ratio = eval.pad_ratio;
  options.infer = InferOptions{eval.score_threshold, eval.nms_iou};

  bool ok = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const SplitFixture& f = fixtures[i];
    const InferenceResult refined = refine_two_stage(f.scene.image, f.merged, stage2, options);
    const std::size_t gt_count = object_ids(f.scene.labels).size();
    const std::size_t before = object_ids(f.merged.labels).size();
    const std::size_t after = object_ids(refined.labels).size();
    const double f_before = overlap_prf(f.merged.labels, f.scene.labels).f;
    const double f_after = overlap_prf(refined.labels, f.scene.labels).f;
    const bool pass = after == gt_count && f_after >= f_before;
    ok = ok && pass;
    os << (i ? "; " : "") << "scene " << i << ": objects " << before << "->" << after << " (GT " << gt_count
       << "), overlap F " << fmt(f_before) << "->" << fmt(f_after);
  }
  r.passed = ok;
  r.detail = os.str();
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "msm_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  std::vector<verify::CheckResult> results = verify::run_core_checks();
  for (const auto& r : results) std::cout << verify::format_result(r) << std::endl;

  // Criterion 8: reference training run on a held-out split.
  const RunConfig ref = reference_config(work);
  generate_dataset(ref);
  auto start = Clock::now();
  const TrainResult trained = train(ref, [](Index it, double l) { log_progress("reference", it, l); });
  const MetricsReport report = evaluate(ref, trained.checkpoint_dir, EvaluateFlags{});
  {
    verify::CheckResult r;
    r.criterion = 8;
    r.name = "end-to-end toy training";
    r.passed = report.overlap.f >= tolerance::kOverlapF && report.boundary.f >= tolerance::kBoundaryF;
    r.detail = "overlap F " + fmt(report.overlap.f) + " (P " + fmt(report.overlap.p) + ", R " + fmt(report.overlap.r) +
               "), boundary F " + fmt(report.boundary.f) + ", %75 " + fmt(report.f75) + ", final loss " +
               fmt(trained.losses.back()) + ", " + std::to_string(ref.train.iterations) + " iterations";
    r.seconds = seconds_since(start);
    results.push_back(r);
    std::cout << verify::format_result(r) << std::endl;
  }

  // Criterion 9: the same run with two decoder layers.
  start = Clock::now();
  {
    RunConfig shallow = ref;
    shallow.model.num_layers = 2;
    const TrainResult t2 = train_on(shallow, load_split(shallow.train.data_dir),
                                    [](Index it, double l) { log_progress("L=2", it, l); });
    const MetricsReport r2 = evaluate(load_split(shallow.eval.data_dir), &t2.model, shallow.eval, EvaluateFlags{});
    verify::CheckResult r;
    r.criterion = 9;
    r.name = "layer ablation shape";
    r.passed = report.overlap.f >= r2.overlap.f;
    r.detail = "overlap F L=6 " + fmt(report.overlap.f) + " vs L=2 " + fmt(r2.overlap.f);
    r.seconds = seconds_since(start);
    results.push_back(r);
    std::cout << verify::format_result(r) << std::endl;
  }

  // Criterion 10: a stage-2 model trained on padded ROI crops.
  start = Clock::now();
  {
    RunConfig s2 = ref;
    s2.data.roi_size = ref.eval.roi_size;
    s2.data.pad_ratio = ref.eval.pad_ratio;
    s2.data.min_objects = 1;
    s2.data.max_objects = 2;
    s2.train.data_dir = (work / "roi" / "train").string();
    s2.eval.data_dir = (work / "roi" / "val").string();
    s2.train.output_dir = (work / "stage2").string();
    generate_dataset(s2);
    const TrainResult t = train(s2, [](Index it, double l) { log_progress("stage2", it, l); });
    verify::CheckResult r = check_two_stage(t.model, ref.eval);
    r.seconds = seconds_since(start);
    results.push_back(r);
    std::cout << verify::format_result(r) << std::endl;
  }

  // Criterion 11: rerun training and evaluation with identical seeds.
  start = Clock::now();
  {
    RunConfig again = ref;
    again.train.output_dir = (work / "reference_rerun").string();
    again.eval.output_dir = (work / "reference_rerun_eval").string();
    const TrainResult t = train(again, [](Index it, double l) { log_progress("rerun", it, l); });
    evaluate(again, t.checkpoint_dir, EvaluateFlags{});
    const std::string loss_a = file_bytes(fs::path(ref.train.output_dir) / "loss.csv");
    const std::string loss_b = file_bytes(fs::path(again.train.output_dir) / "loss.csv");
    const std::string report_a = file_bytes(fs::path(ref.eval.output_dir) / "report.json");
    const std::string report_b = file_bytes(fs::path(again.eval.output_dir) / "report.json");
    verify::CheckResult r;
    r.criterion = 11;
    r.name = "deterministic reruns";
    r.passed = !loss_a.empty() && !report_a.empty() && loss_a == loss_b && report_a == report_b;
    r.detail = std::string("loss.csv ") + (loss_a == loss_b ? "identical" : "DIFFERENT") + " (" +
               std::to_string(loss_a.size()) + " bytes), report.json " +
               (report_a == report_b ? "identical" : "DIFFERENT") + " (" + std::to_string(report_a.size()) + " bytes)";
    r.seconds = seconds_since(start);
    results.push_back(r);
    std::cout << verify::format_result(r) << std::endl;
  }

  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
