#include "doctest.h"

#include "oracles.hpp"
#include "msm/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace msm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("msm_test_synthdata_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("sphere clusters") {
  SphereClusterSpec spec;
  spec.dim = 6;
  spec.clusters = 4;
  spec.points_per_cluster = 10;
  spec.seed = 12;
  const SphereClusters a = gen_sphere_clusters(spec);
  CHECK(a.points.rows() == 40);
  CHECK(a.labels.size() == 40);
  CHECK((a.points.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  const Matrix gram = a.means * a.means.transpose();
  for (Index i = 0; i < 4; ++i) {
    for (Index j = i + 1; j < 4; ++j) CHECK(gram(i, j) < 0.3);
  }
  CHECK(gen_sphere_clusters(spec).points == a.points);
  spec.seed = 13;
  CHECK(gen_sphere_clusters(spec).points != a.points);

  spec.clusters = 0;
  CHECK_THROWS(gen_sphere_clusters(spec));
}

TEST_CASE("scene generation") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    SceneSpec spec;
    spec.seed = s;
    const Scene scene = gen_scene(spec);
    CHECK(scene.image.shape() == Shape{24, 24, 3});
    CHECK(scene.image.data().minCoeff() >= 0.0);
    CHECK(scene.image.data().maxCoeff() <= 1.0);
    const auto ids = object_ids(scene.labels);
    CHECK(ids.size() == scene.objects.size());
    CHECK(ids.size() >= 1);
    CHECK(ids.size() <= 4);
    for (std::size_t k = 0; k < ids.size(); ++k) CHECK(ids[k] == static_cast<std::int32_t>(k + 1));
    // Labels agree with the analytic shapes when drawn in order.
    for (Index y = 0; y < 24; ++y) {
      for (Index x = 0; x < 24; ++x) {
        std::int32_t expected = 0;
        for (std::size_t k = 0; k < scene.objects.size(); ++k) {
          if (scene.objects[k].contains(y, x)) expected = static_cast<std::int32_t>(k + 1);
        }
        CHECK(scene.labels(y, x) == expected);
      }
    }
    const Scene again = gen_scene(spec);
    CHECK(again.image.data() == scene.image.data());
    CHECK((again.labels == scene.labels).all());
  }
}

TEST_CASE("SceneSpec validation") {
  SceneSpec spec;
  spec.min_objects = 3;
  spec.max_objects = 2;
  CHECK_THROWS(spec.validate());
  spec = SceneSpec{};
  spec.rectangles = false;
  spec.ellipses = false;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("boxes and crops") {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(6, 8);
  mask.block(2, 3, 2, 4).setConstant(true);
  const Box b = bounding_box(mask);
  CHECK(b.top == 2);
  CHECK(b.left == 3);
  CHECK(b.height == 2);
  CHECK(b.width == 4);
  const Box p = padded_box(b, 0.5, 6, 8);
  CHECK(p.top == 1);
  CHECK(p.left == 1);
  CHECK(p.bottom() == 5);
  CHECK(p.right() == 8);

  LabelMap l(2, 2);
  l << 1, 2, 3, 4;
  const LabelMap up = crop_resize(l, Box{0, 0, 2, 2}, 4, 4);
  CHECK(up(0, 0) == 1);
  CHECK(up(1, 1) == 1);
  CHECK(up(0, 2) == 2);
  CHECK(up(3, 3) == 4);
  CHECK_THROWS_AS(crop_resize(l, Box{1, 1, 2, 2}, 4, 4), ShapeError);

  LabelMap sparse(1, 4);
  sparse << 0, 9, 4, 9;
  const LabelMap c = compact_labels(sparse);
  CHECK(c(0, 0) == 0);
  CHECK(c(0, 1) == 2);
  CHECK(c(0, 2) == 1);
}

TEST_CASE("roi samples") {
  SceneSpec spec;
  spec.roi_size = 32;
  for (std::uint64_t s = 0; s < 10; ++s) {
    spec.seed = s;
    const Scene scene = gen_scene(spec);
    CHECK(scene.image.shape() == Shape{32, 32, 3});
    CHECK(scene.labels.rows() == 32);
    CHECK(object_ids(scene.labels).size() >= 1);
  }
}

TEST_CASE("netpbm round trips") {
  const fs::path dir = scratch_dir("pnm");
  SceneSpec spec;
  spec.seed = 5;
  const Scene scene = gen_scene(spec);
  write_ppm(dir / "a.ppm", scene.image);
  const Tensor back = read_ppm(dir / "a.ppm");
  CHECK(back.shape() == scene.image.shape());
  CHECK((back.data() - scene.image.data()).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
  write_ppm(dir / "b.ppm", back);
  CHECK(file_bytes(dir / "a.ppm") == file_bytes(dir / "b.ppm"));

  write_pgm(dir / "l.pgm", scene.labels);
  CHECK((read_pgm(dir / "l.pgm") == scene.labels).all());

  std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS(read_ppm(dir / "bad.ppm"));
}

TEST_CASE("splits") {
  const fs::path dir = scratch_dir("split");
  SceneSpec spec;
  spec.seed = 100;
  const auto entries = gen_split(spec, 6, dir / "a");
  gen_split(spec, 6, dir / "b");
  CHECK(entries.size() == 6);
  for (const auto& e : entries) {
    CHECK(file_bytes(dir / "a" / e.image) == file_bytes(dir / "b" / e.image));
    CHECK(file_bytes(dir / "a" / e.labels) == file_bytes(dir / "b" / e.labels));
  }
  CHECK(file_bytes(dir / "a" / "manifest.txt") == file_bytes(dir / "b" / "manifest.txt"));

  const auto read = read_manifest(dir / "a");
  REQUIRE(read.size() == 6);
  CHECK(read[3].image == entries[3].image);
  CHECK(read[3].objects == entries[3].objects);

  const auto samples = load_split(dir / "a");
  REQUIRE(samples.size() == 6);
  spec.seed = 102;
  CHECK((samples[2].labels == gen_scene(spec).labels).all());

  // A disjoint seed range gives different images.
  SceneSpec val = spec;
  val.seed = 1000000;
  gen_split(val, 6, dir / "val");
  std::set<std::string> train_bytes;
  for (const auto& e : entries) train_bytes.insert(file_bytes(dir / "a" / e.image));
  for (const auto& e : read_manifest(dir / "val")) CHECK(train_bytes.count(file_bytes(dir / "val" / e.image)) == 0);

  CHECK_THROWS(read_manifest(dir / "missing"));
}
