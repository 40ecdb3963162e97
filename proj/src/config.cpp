#include "msm/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace msm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw ConfigError("");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used != v.size()) throw ConfigError("");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

// A key binding: reads a string into the field and renders the field back.
struct Binding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> read;
  std::function<std::string()> write;
};

template <typename T>
Binding make_binding(const std::string& section, const std::string& key, T& field) {
  Binding b{section, key, {}, {}};
  const std::string full = section + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    b.read = [&field, full](const std::string& v) { field = parse_bool(full, v); };
    b.write = [&field] { return std::string(field ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, double>) {
    b.read = [&field, full](const std::string& v) { field = parse_double(full, v); };
    b.write = [&field] { return format_double(field); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    b.read = [&field](const std::string& v) { field = v; };
    b.write = [&field] { return field; };
  } else {
    b.read = [&field, full](const std::string& v) { field = static_cast<T>(parse_int(full, v)); };
    b.write = [&field] { return std::to_string(field); };
  }
  return b;
}

std::vector<Binding> bindings(RunConfig& c) {
  return {
      make_binding("model", "embed_dim", c.model.embed_dim),
      make_binding("model", "hidden_channels", c.model.hidden_channels),
      make_binding("model", "num_queries", c.model.num_queries),
      make_binding("model", "num_layers", c.model.num_layers),
      make_binding("model", "kappa", c.model.kappa),
      make_binding("model", "mask_scale", c.model.mask_scale),
      make_binding("model", "use_mask", c.model.use_mask),
      make_binding("model", "aux_loss", c.model.aux_loss),
      make_binding("model", "init_seed", c.model.init_seed),
      make_binding("train", "data_dir", c.train.data_dir),
      make_binding("train", "output_dir", c.train.output_dir),
      make_binding("train", "iterations", c.train.iterations),
      make_binding("train", "batch_size", c.train.batch_size),
      make_binding("train", "lr", c.train.lr),
      make_binding("train", "weight_decay", c.train.weight_decay),
      make_binding("train", "grad_clip", c.train.grad_clip),
      make_binding("train", "warmup_steps", c.train.warmup_steps),
      make_binding("train", "seed", c.train.seed),
      make_binding("data", "height", c.data.height),
      make_binding("data", "width", c.data.width),
      make_binding("data", "min_objects", c.data.min_objects),
      make_binding("data", "max_objects", c.data.max_objects),
      make_binding("data", "min_size", c.data.min_size),
      make_binding("data", "max_size", c.data.max_size),
      make_binding("data", "rectangles", c.data.rectangles),
      make_binding("data", "ellipses", c.data.ellipses),
      make_binding("data", "occlusion", c.data.occlusion),
      make_binding("data", "color_jitter", c.data.color_jitter),
      make_binding("data", "noise_std", c.data.noise_std),
      make_binding("data", "seed", c.data.seed),
      make_binding("data", "roi_size", c.data.roi_size),
      make_binding("data", "pad_ratio", c.data.pad_ratio),
      make_binding("data", "train_count", c.train_count),
      make_binding("data", "val_count", c.val_count),
      make_binding("data", "val_seed", c.val_seed),
      make_binding("eval", "data_dir", c.eval.data_dir),
      make_binding("eval", "output_dir", c.eval.output_dir),
      make_binding("eval", "score_threshold", c.eval.score_threshold),
      make_binding("eval", "nms_iou", c.eval.nms_iou),
      make_binding("eval", "boundary_dilation", c.eval.boundary_dilation),
      make_binding("eval", "refine", c.eval.refine),
      make_binding("eval", "stage2_checkpoint", c.eval.stage2_checkpoint),
      make_binding("eval", "roi_size", c.eval.roi_size),
      make_binding("eval", "pad_ratio", c.eval.pad_ratio),
  };
}

}  // namespace

ConfigDocument parse_config_document(const std::string& text) {
  ConfigDocument doc;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value' inside a section");
    }
    doc[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return doc;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  auto doc = parse_config_document(text);
  for (Binding& b : bindings(config)) {
    auto sec = doc.find(b.section);
    if (sec == doc.end()) continue;
    auto it = sec->second.find(b.key);
    if (it == sec->second.end()) continue;
    b.read(it->second);
    sec->second.erase(it);
  }
  for (const auto& [section, keys] : doc) {
    if (!keys.empty()) throw ConfigError("config: unknown key '" + section + "." + keys.begin()->first + "'");
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::to_text() const {
  RunConfig copy = *this;
  std::ostringstream os;
  std::string section;
  for (const Binding& b : bindings(copy)) {
    if (b.section != section) {
      os << (section.empty() ? "" : "\n") << '[' << b.section << "]\n";
      section = b.section;
    }
    os << b.key << " = " << b.write() << '\n';
  }
  return os.str();
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write config " + path.string());
  os << to_text();
}

}  // namespace msm
