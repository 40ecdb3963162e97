#include "msm/synthdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace msm {

namespace fs = std::filesystem;

// ---- unit-sphere clusters -------------------------------------------------

void SphereClusterSpec::validate() const {
  if (dim < 2) throw std::invalid_argument("sphere clusters: dim must be >= 2");
  if (clusters < 1) throw std::invalid_argument("sphere clusters: need at least one cluster");
  if (points_per_cluster < 1) throw std::invalid_argument("sphere clusters: need at least one point per cluster");
  if (!(spread > 0.0)) throw std::invalid_argument("sphere clusters: spread must be positive");
}

SphereClusters gen_sphere_clusters(const SphereClusterSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&] {
    Vector v(spec.dim);
    do {
      for (Index i = 0; i < spec.dim; ++i) v[i] = normal(rng);
    } while (v.norm() < 1e-9);
    return Vector(v.normalized());
  };

  SphereClusters out;
  out.means.resize(spec.clusters, spec.dim);
  for (Index k = 0; k < spec.clusters; ++k) {
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      Vector candidate = random_unit();
      accepted = true;
      for (Index j = 0; j < k; ++j) {
        if (out.means.row(j).dot(candidate) >= 0.3) {
          accepted = false;
          break;
        }
      }
      if (accepted) out.means.row(k) = candidate.transpose();
    }
    if (!accepted) {
      throw GenerationError("gen_sphere_clusters: could not place " + std::to_string(spec.clusters) +
                            " separated directions in dimension " + std::to_string(spec.dim));
    }
  }

  const Index n = spec.clusters * spec.points_per_cluster;
  out.points.resize(n, spec.dim);
  out.labels.reserve(static_cast<std::size_t>(n));
  for (Index k = 0; k < spec.clusters; ++k) {
    for (Index i = 0; i < spec.points_per_cluster; ++i) {
      Vector p = out.means.row(k).transpose();
      for (Index c = 0; c < spec.dim; ++c) p[c] += spec.spread * normal(rng);
      out.points.row(k * spec.points_per_cluster + i) = p.normalized().transpose();
      out.labels.push_back(k);
    }
  }
  return out;
}

// ---- scenes ---------------------------------------------------------------

bool Box::overlaps(const Box& o) const {
  return top < o.bottom() && o.top < bottom() && left < o.right() && o.left < right();
}

bool SceneObject::contains(Index y, Index x) const {
  if (y < box.top || y >= box.bottom() || x < box.left || x >= box.right()) return false;
  if (kind == ShapeKind::rectangle) return true;
  const double ry = 0.5 * static_cast<double>(box.height), rx = 0.5 * static_cast<double>(box.width);
  const double dy = (static_cast<double>(y - box.top) + 0.5 - ry) / ry;
  const double dx = (static_cast<double>(x - box.left) + 0.5 - rx) / rx;
  return dy * dy + dx * dx <= 1.0;
}

void SceneSpec::validate() const {
  if (height < 1 || width < 1) throw std::invalid_argument("scene: image size must be positive");
  if (min_objects < 0 || max_objects < min_objects) throw std::invalid_argument("scene: bad object count range");
  if (max_objects > static_cast<Index>(object_palette().size())) {
    throw std::invalid_argument("scene: more objects than palette colours");
  }
  if (min_size < 1 || max_size < min_size || max_size > std::min(height, width)) {
    throw std::invalid_argument("scene: object sizes must fit in the frame");
  }
  if (!rectangles && !ellipses) throw std::invalid_argument("scene: empty shape set");
  if (color_jitter < 0 || noise_std < 0) throw std::invalid_argument("scene: negative jitter or noise");
  if (roi_size < 0 || pad_ratio < 0) throw std::invalid_argument("scene: bad ROI settings");
}

const std::vector<Color>& object_palette() {
  static const std::vector<Color> palette{
      Color{0.85, 0.15, 0.15}, Color{0.15, 0.75, 0.20}, Color{0.15, 0.30, 0.90}, Color{0.95, 0.85, 0.10},
      Color{0.80, 0.20, 0.80}, Color{0.10, 0.80, 0.85}, Color{0.95, 0.55, 0.10}, Color{0.95, 0.95, 0.95},
  };
  return palette;
}

Color background_color() { return Color{0.45, 0.40, 0.35}; }

Scene render_scene(Index height, Index width, const std::vector<SceneObject>& objects, const Color& background,
                   double noise_std, std::mt19937_64& rng) {
  LabelMap draw_order = LabelMap::Zero(height, width);
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const Box& b = objects[k].box;
    for (Index y = std::max<Index>(0, b.top); y < std::min(height, b.bottom()); ++y) {
      for (Index x = std::max<Index>(0, b.left); x < std::min(width, b.right()); ++x) {
        if (objects[k].contains(y, x)) draw_order(y, x) = static_cast<std::int32_t>(k + 1);
      }
    }
  }

  Scene scene;
  std::vector<std::int32_t> remap(objects.size() + 1, 0);
  for (std::int32_t id : object_ids(draw_order)) {
    scene.objects.push_back(objects[static_cast<std::size_t>(id - 1)]);
    remap[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(scene.objects.size());
  }
  scene.labels = draw_order.unaryExpr([&](std::int32_t v) { return remap[static_cast<std::size_t>(v)]; });

  std::normal_distribution<double> noise(0.0, 1.0);
  Vector pixels(height * width * 3);
  for (Index p = 0; p < height * width; ++p) {
    const std::int32_t id = draw_order.data()[p];
    const Color& c = id == 0 ? background : objects[static_cast<std::size_t>(id - 1)].color;
    for (Index ch = 0; ch < 3; ++ch) {
      const double v = c[static_cast<std::size_t>(ch)] + (noise_std > 0 ? noise_std * noise(rng) : 0.0);
      pixels[p * 3 + ch] = std::clamp(v, 0.0, 1.0);
    }
  }
  scene.image = Tensor({height, width, 3}, std::move(pixels));
  return scene;
}

namespace {

Color jittered(const Color& base, double jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-jitter, jitter);
  Color out = base;
  for (double& v : out) v = std::clamp(v + (jitter > 0 ? u(rng) : 0.0), 0.0, 1.0);
  return out;
}

Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

Scene full_scene(const SceneSpec& spec, std::mt19937_64& rng) {
  const Index count = uniform_index(rng, spec.min_objects, spec.max_objects);
  std::vector<std::size_t> colors(object_palette().size());
  std::iota(colors.begin(), colors.end(), 0);
  std::shuffle(colors.begin(), colors.end(), rng);

  std::vector<SceneObject> objects;
  for (Index k = 0; k < count; ++k) {
    SceneObject obj;
    if (spec.rectangles && spec.ellipses) {
      obj.kind = uniform_index(rng, 0, 1) == 0 ? ShapeKind::rectangle : ShapeKind::ellipse;
    } else {
      obj.kind = spec.rectangles ? ShapeKind::rectangle : ShapeKind::ellipse;
    }
    obj.color = jittered(object_palette()[colors[static_cast<std::size_t>(k)]], spec.color_jitter, rng);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Box b;
      b.height = uniform_index(rng, spec.min_size, spec.max_size);
      b.width = uniform_index(rng, spec.min_size, spec.max_size);
      b.top = uniform_index(rng, 0, spec.height - b.height);
      b.left = uniform_index(rng, 0, spec.width - b.width);
      placed = spec.occlusion ||
               std::none_of(objects.begin(), objects.end(), [&](const SceneObject& o) { return o.box.overlaps(b); });
      if (placed) obj.box = b;
    }
    if (placed) objects.push_back(obj);
  }
  return render_scene(spec.height, spec.width, objects, jittered(background_color(), spec.color_jitter, rng),
                      spec.noise_std, rng);
}

Box union_box(const Box& a, const Box& b) {
  Box u;
  u.top = std::min(a.top, b.top);
  u.left = std::min(a.left, b.left);
  u.height = std::max(a.bottom(), b.bottom()) - u.top;
  u.width = std::max(a.right(), b.right()) - u.left;
  return u;
}

Scene roi_scene(const SceneSpec& spec, std::mt19937_64& rng) {
  Scene full = full_scene(spec, rng);
  const Index h = spec.height, w = spec.width;
  Box box{0, 0, h, w};
  if (!full.objects.empty()) {
    const auto ids = object_ids(full.labels);
    const std::size_t pick = static_cast<std::size_t>(uniform_index(rng, 0, static_cast<Index>(ids.size()) - 1));
    box = bounding_box(full.labels == ids[pick]);
    // Half of the crops cover a pair of objects, as a merged first-stage mask would.
    if (ids.size() > 1 && uniform_index(rng, 0, 1) == 1) {
      std::size_t other = static_cast<std::size_t>(uniform_index(rng, 0, static_cast<Index>(ids.size()) - 2));
      if (other >= pick) ++other;
      box = union_box(box, bounding_box(full.labels == ids[other]));
    }
    box = padded_box(box, spec.pad_ratio, h, w);
  }
  Scene crop;
  crop.image = crop_resize(full.image, box, spec.roi_size, spec.roi_size);
  crop.labels = compact_labels(crop_resize(full.labels, box, spec.roi_size, spec.roi_size));
  return crop;
}

}  // namespace

Scene gen_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  return spec.roi_size > 0 ? roi_scene(spec, rng) : full_scene(spec, rng);
}

Box bounding_box(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& mask) {
  Index top = mask.rows(), left = mask.cols(), bottom = -1, right = -1;
  for (Index y = 0; y < mask.rows(); ++y) {
    for (Index x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x)) continue;
      top = std::min(top, y);
      left = std::min(left, x);
      bottom = std::max(bottom, y);
      right = std::max(right, x);
    }
  }
  if (bottom < 0) return Box{};
  return Box{top, left, bottom - top + 1, right - left + 1};
}

Box padded_box(const Box& box, double pad_ratio, Index height, Index width) {
  const Index pad_y = static_cast<Index>(std::round(pad_ratio * static_cast<double>(box.height)));
  const Index pad_x = static_cast<Index>(std::round(pad_ratio * static_cast<double>(box.width)));
  const Index top = std::max<Index>(0, box.top - pad_y);
  const Index left = std::max<Index>(0, box.left - pad_x);
  const Index bottom = std::min(height, box.bottom() + pad_y);
  const Index right = std::min(width, box.right() + pad_x);
  return Box{top, left, bottom - top, right - left};
}

Tensor crop_resize(const Tensor& image, const Box& box, Index out_h, Index out_w) {
  if (image.rank() != 3) throw ShapeError("crop_resize: expects [H,W,C]");
  const Index w = image.dim(1), c = image.dim(2);
  if (box.height < 1 || box.width < 1 || box.bottom() > image.dim(0) || box.right() > w || box.top < 0 ||
      box.left < 0) {
    throw ShapeError("crop_resize: box outside image");
  }
  Vector out(out_h * out_w * c);
  for (Index y = 0; y < out_h; ++y) {
    const Index sy = box.top + y * box.height / out_h;
    for (Index x = 0; x < out_w; ++x) {
      const Index sx = box.left + x * box.width / out_w;
      out.segment((y * out_w + x) * c, c) = image.data().segment((sy * w + sx) * c, c);
    }
  }
  return Tensor({out_h, out_w, c}, std::move(out));
}

LabelMap crop_resize(const LabelMap& labels, const Box& box, Index out_h, Index out_w) {
  if (box.height < 1 || box.width < 1 || box.bottom() > labels.rows() || box.right() > labels.cols() ||
      box.top < 0 || box.left < 0) {
    throw ShapeError("crop_resize: box outside label map");
  }
  LabelMap out(out_h, out_w);
  for (Index y = 0; y < out_h; ++y) {
    for (Index x = 0; x < out_w; ++x) {
      out(y, x) = labels(box.top + y * box.height / out_h, box.left + x * box.width / out_w);
    }
  }
  return out;
}

LabelMap compact_labels(const LabelMap& labels) {
  const auto ids = object_ids(labels);
  std::vector<std::int32_t> remap(ids.empty() ? 1 : static_cast<std::size_t>(ids.back()) + 1, 0);
  for (std::size_t k = 0; k < ids.size(); ++k) remap[static_cast<std::size_t>(ids[k])] = static_cast<std::int32_t>(k + 1);
  return labels.unaryExpr([&](std::int32_t v) { return v > 0 ? remap[static_cast<std::size_t>(v)] : 0; });
}

// ---- files ----------------------------------------------------------------

namespace {

void write_netpbm(const fs::path& path, const char* magic, Index width, Index height, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << magic << '\n' << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<unsigned char> read_netpbm(const fs::path& path, const std::string& magic, Index channels, Index& width,
                                       Index& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  auto token = [&] {
    std::string t;
    while (t.empty()) {
      int ch = is.get();
      if (ch == EOF) throw std::runtime_error("truncated header in " + path.string());
      if (ch == '#') {
        std::string comment;
        std::getline(is, comment);
        continue;
      }
      if (std::isspace(ch)) continue;
      t.push_back(static_cast<char>(ch));
      while ((ch = is.peek()) != EOF && !std::isspace(ch)) t.push_back(static_cast<char>(is.get()));
    }
    return t;
  };
  if (token() != magic) throw std::runtime_error(path.string() + " is not a " + magic + " file");
  width = std::stol(token());
  height = std::stol(token());
  if (std::stol(token()) != 255) throw std::runtime_error(path.string() + ": only maxval 255 is supported");
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width * height * channels));
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw std::runtime_error("truncated pixel data in " + path.string());
  }
  return bytes;
}

}  // namespace

void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("write_ppm: expects [H,W,3]");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.size(); ++i) {
    bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  write_netpbm(path, "P6", image.dim(1), image.dim(0), bytes);
}

Tensor read_ppm(const fs::path& path) {
  Index w = 0, h = 0;
  const auto bytes = read_netpbm(path, "P6", 3, w, h);
  Vector v(static_cast<Index>(bytes.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) v[static_cast<Index>(i)] = static_cast<double>(bytes[i]) / 255.0;
  return Tensor({h, w, 3}, std::move(v));
}

void write_pgm(const fs::path& path, const LabelMap& labels) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(labels.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::clamp<std::int32_t>(labels.data()[i], 0, 255));
  }
  write_netpbm(path, "P5", labels.cols(), labels.rows(), bytes);
}

LabelMap read_pgm(const fs::path& path) {
  Index w = 0, h = 0;
  const auto bytes = read_netpbm(path, "P5", 1, w, h);
  LabelMap labels(h, w);
  for (Index i = 0; i < labels.size(); ++i) labels.data()[i] = bytes[static_cast<std::size_t>(i)];
  return labels;
}

std::vector<ManifestEntry> gen_split(const SceneSpec& spec, Index count, const fs::path& dir) {
  spec.validate();
  if (count < 1) throw std::invalid_argument("gen_split: count must be >= 1");
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
  for (Index i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = spec.seed + static_cast<std::uint64_t>(i);
    const Scene scene = gen_scene(s);
    std::ostringstream stem;
    stem << std::setw(4) << std::setfill('0') << i;
    ManifestEntry e{i, "image_" + stem.str() + ".ppm", "labels_" + stem.str() + ".pgm",
                    static_cast<Index>(object_ids(scene.labels).size())};
    write_ppm(dir / e.image, scene.image);
    write_pgm(dir / e.labels, scene.labels);
    manifest << e.index << ' ' << e.image << ' ' << e.labels << ' ' << e.objects << '\n';
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw std::runtime_error("missing manifest.txt in " + dir.string());
  std::vector<ManifestEntry> entries;
  ManifestEntry e;
  while (is >> e.index >> e.image >> e.labels >> e.objects) entries.push_back(e);
  return entries;
}

std::vector<Sample> load_split(const fs::path& dir) {
  std::vector<Sample> samples;
  for (const ManifestEntry& e : read_manifest(dir)) {
    samples.push_back(Sample{e.image, read_ppm(dir / e.image), read_pgm(dir / e.labels)});
  }
  if (samples.empty()) throw std::runtime_error("empty split in " + dir.string());
  return samples;
}

}  // namespace msm
