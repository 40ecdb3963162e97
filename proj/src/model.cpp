#include "msm/model.hpp"

#include "msm/tensor_io.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace msm {

namespace fs = std::filesystem;

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  ModelParams copy = *this;
  copy.visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

void ModelParams::assign(const std::vector<Tensor>& values) {
  std::size_t i = 0;
  visit([&](const std::string& name, Tensor& t) {
    if (i >= values.size()) throw ShapeError("assign: too few tensors");
    if (values[i].shape() != t.shape()) throw ShapeError("assign: shape mismatch for " + name);
    t = values[i++];
  });
  if (i != values.size()) throw ShapeError("assign: too many tensors");
}

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {}

Model Model::init(const ModelConfig& config, Index raw_channels) {
  if (config.num_layers < 1 || config.num_queries < 1 || config.embed_dim < 1) {
    throw std::invalid_argument("model: layers, queries and embed_dim must be positive");
  }
  std::mt19937_64 rng(config.init_seed);
  ModelParams params;
  params.backbone = BackboneParams::init(raw_channels + 2, config.hidden_channels, config.embed_dim, rng);
  params.decoder = DecoderParams::init(config.num_queries, config.embed_dim, config.num_layers, rng);
  return Model(config, std::move(params));
}

DecoderConfig Model::decoder_config() const {
  DecoderConfig cfg;
  cfg.attention.kappa = config_.kappa;
  cfg.attention.key_dim = config_.embed_dim;
  cfg.attention.use_mask = config_.use_mask;
  cfg.mask_scale = config_.mask_scale;
  return cfg;
}

FeatureMap Model::embed_image(const Tensor& image, const ModelParams& params) const {
  // Colours are centred so the first convolution sees zero-mean inputs.
  return embed(append_coordinate_channels(add_scalar(image, -0.5)), params.backbone);
}

std::vector<MaskPrediction> Model::forward(const Tensor& image, const ModelParams& params) const {
  const FeatureMap feat = embed_image(image, params);
  return forward_stack(params.decoder.queries, feat, params.decoder, decoder_config());
}

namespace {

std::string model_section(const ModelConfig& m) {
  RunConfig rc;
  rc.model = m;
  const std::string text = rc.to_text();
  const auto end = text.find("\n[", 1);
  return text.substr(0, end == std::string::npos ? text.size() : end + 1);
}

void write_entry(std::ofstream& manifest, const fs::path& dir, const std::string& name, const Tensor& t) {
  const std::string file = name + ".msmt";
  save_tensor(dir / file, t);
  manifest << name << ' ' << file << ' ' << to_string(t.shape()) << '\n';
}

std::map<std::string, Tensor> read_manifest_tensors(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("checkpoint " + dir.string() + " has no manifest.txt");
  std::map<std::string, Tensor> out;
  std::string name, file, shape;
  while (manifest >> name >> file >> shape) {
    Tensor t = load_tensor(dir / file);
    if (to_string(t.shape()) != shape) throw FormatError("checkpoint: shape of " + name + " differs from manifest");
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model, const AdamW* optimizer) {
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "model.cfg");
    cfg << model_section(model.config());
  }
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("cannot write checkpoint manifest in " + dir.string());
  const auto named = model.params().named();
  for (const auto& [name, t] : named) write_entry(manifest, dir, name, t);
  if (optimizer != nullptr && !optimizer->first_moments().empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      write_entry(manifest, dir, "optim.m." + named[i].first, Tensor(named[i].second.shape(), optimizer->first_moments()[i]));
      write_entry(manifest, dir, "optim.v." + named[i].first, Tensor(named[i].second.shape(), optimizer->second_moments()[i]));
    }
    write_entry(manifest, dir, "optim.step", Tensor::scalar(static_cast<double>(optimizer->step_count())));
  }
}

Model load_checkpoint(const fs::path& dir) {
  const RunConfig rc = RunConfig::load(dir / "model.cfg");
  Model model = Model::init(rc.model);
  const auto tensors = read_manifest_tensors(dir);
  std::vector<Tensor> values;
  for (const auto& [name, t] : model.params().named()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor " + name);
    values.push_back(it->second);
  }
  model.params().assign(values);
  return model;
}

bool load_optimizer_state(const fs::path& dir, const Model& model, AdamW& optimizer) {
  const auto tensors = read_manifest_tensors(dir);
  auto step = tensors.find("optim.step");
  if (step == tensors.end()) return false;
  std::vector<Vector> m, v;
  for (const auto& [name, t] : model.params().named()) {
    m.push_back(tensors.at("optim.m." + name).data());
    v.push_back(tensors.at("optim.v." + name).data());
  }
  optimizer.restore(std::move(m), std::move(v), static_cast<Index>(step->second.item()));
  return true;
}

}  // namespace msm
