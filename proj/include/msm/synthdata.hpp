#pragma once

#include "msm/label_map.hpp"
#include "msm/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace msm {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- unit-sphere clusters -------------------------------------------------

struct SphereClusterSpec {
  Index dim = 8;
  Index clusters = 2;
  Index points_per_cluster = 32;
  double spread = 0.05;  // per-coordinate std of the perturbation, radians-ish
  std::uint64_t seed = 0;

  void validate() const;
};

struct SphereClusters {
  Matrix points;             // [K * per_cluster x d], unit rows
  std::vector<Index> labels;  // generating cluster per point
  Matrix means;              // [K x d], unit rows
};

/// Mean directions drawn uniformly and rejected until every pair has cosine
/// < 0.3; points are g(mean + N(0, spread^2 I)).
SphereClusters gen_sphere_clusters(const SphereClusterSpec& spec);

// ---- scenes ---------------------------------------------------------------

enum class ShapeKind { rectangle, ellipse };

using Color = std::array<double, 3>;

/// Axis-aligned bounding box in pixels, [top, top+height) x [left, left+width).
struct Box {
  Index top = 0;
  Index left = 0;
  Index height = 0;
  Index width = 0;

  Index bottom() const { return top + height; }
  Index right() const { return left + width; }
  bool overlaps(const Box& o) const;
};

struct SceneObject {
  ShapeKind kind = ShapeKind::rectangle;
  Box box;
  Color color{};

  /// Analytic region test for pixel (y, x); ellipses are inscribed in the box.
  bool contains(Index y, Index x) const;
};

struct SceneSpec {
  Index height = 24;
  Index width = 24;
  Index min_objects = 1;
  Index max_objects = 4;
  Index min_size = 5;
  Index max_size = 10;
  bool rectangles = true;
  bool ellipses = true;
  bool occlusion = false;
  double color_jitter = 0.04;
  double noise_std = 0.02;
  std::uint64_t seed = 0;
  /// When > 0 each sample is a padded crop around one or two objects of a
  /// scene, resized to roi_size x roi_size (second-stage training data).
  Index roi_size = 0;
  double pad_ratio = 0.25;

  void validate() const;
};

struct Scene {
  Tensor image;                      // [H x W x 3], values in [0, 1]
  LabelMap labels;                   // visible pixels only, IDs 1..K in draw order
  std::vector<SceneObject> objects;  // objects[k] carries label k + 1
};

/// Fixed palette of well separated object colours and the table colour.
const std::vector<Color>& object_palette();
Color background_color();

/// Draws `objects` in order (later ones occlude earlier ones) over the
/// background, adds Gaussian pixel noise, and drops objects left without
/// visible pixels.
Scene render_scene(Index height, Index width, const std::vector<SceneObject>& objects, const Color& background,
                   double noise_std, std::mt19937_64& rng);

Scene gen_scene(const SceneSpec& spec);

/// Padded bounding box of a mask, clipped to the image.
Box padded_box(const Box& box, double pad_ratio, Index height, Index width);
Box bounding_box(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& mask);

/// Nearest-neighbour crop + resize.
Tensor crop_resize(const Tensor& image, const Box& box, Index out_h, Index out_w);
LabelMap crop_resize(const LabelMap& labels, const Box& box, Index out_h, Index out_w);

/// Reassigns IDs to 1..K by first appearance order of sorted IDs.
LabelMap compact_labels(const LabelMap& labels);

// ---- files ----------------------------------------------------------------

void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);
/// 8-bit gray; values are clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_pgm(const std::filesystem::path& path);

struct ManifestEntry {
  Index index = 0;
  std::string image;
  std::string labels;
  Index objects = 0;
};

/// Writes image_NNNN.ppm, labels_NNNN.pgm and manifest.txt
/// ("index image labels objects" per line); sample i uses seed + i.
std::vector<ManifestEntry> gen_split(const SceneSpec& spec, Index count, const std::filesystem::path& dir);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

struct Sample {
  std::string name;
  Tensor image;
  LabelMap labels;
};

std::vector<Sample> load_split(const std::filesystem::path& dir);

}  // namespace msm
