#include "glgat/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "glgat/error.hpp"

namespace glgat {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::ablation1: return "ablation1";
    case Variant::ablation2: return "ablation2";
    case Variant::ablation3: return "ablation3";
  }
  return "full";
}

Variant parse_variant(const std::string& text) {
  for (Variant v : {Variant::full, Variant::ablation1, Variant::ablation2, Variant::ablation3}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + text + "' (expected full, ablation1, ablation2, ablation3)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void ModelConfig::validate() const {
  if (vertices == 0) throw ConfigError("model needs at least one vertex");
  if (input_channels == 0) throw ConfigError("model needs at least one input channel");
  if (adjacency == 0 || heads == 0 || temporal_head_size == 0 || deep_head_size == 0) {
    throw ConfigError("adjacency count, heads and head sizes must be >= 1");
  }
  if (uses_gat() && pe_width != 0) throw ConfigError("GAT blocks take no pairwise encoding");
  if (pe_width != 0 && pe_width != kPairwiseWidth) {
    throw ConfigError("pairwise encoding width must be 0 or " + std::to_string(kPairwiseWidth));
  }
}

ModelConfig configure_ablation(ModelConfig config, Variant variant) {
  config.variant = variant;
  switch (variant) {
    case Variant::full:
    case Variant::ablation1:
      config.pe_width = kPairwiseWidth;
      break;
    case Variant::ablation2:
    case Variant::ablation3:
      config.pe_width = 0;
      break;
  }
  return config;
}

AdjacencySet adjacency_for_variant(Variant variant, const Matrix& event_up,
                                   const Matrix& event_down, const Matrix& connectivity) {
  AdjacencySet set;
  switch (variant) {
    case Variant::full:
    case Variant::ablation2:
      set.matrices = {event_up, event_down};
      set.labels = {"event-up", "event-down"};
      break;
    case Variant::ablation1:
      set.matrices = {connectivity, connectivity};
      set.labels = {"connectivity", "connectivity"};
      break;
    case Variant::ablation3: {
      Matrix u = binarize(event_up);
      const Matrix d = binarize(event_down);
      for (std::size_t i = 0; i < u.data.size(); ++i) u.data[i] = std::max(u.data[i], d.data[i]);
      set.matrices = {std::move(u)};
      set.labels = {"event-binary"};
      break;
    }
  }
  set.validate();
  return set;
}

Tensor group_timesteps(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != kInputSteps) {
    throw ConfigError("timestep grouping needs [B, " + std::to_string(kInputSteps) +
                      ", N, C] input, got " + shape_str(x.shape()));
  }
  std::vector<Tensor> steps;
  for (std::size_t p = 0; p < kInputSteps; ++p) steps.push_back(slice(x, 1, p, p + 1));
  std::vector<Tensor> groups;
  for (std::size_t g = 0; g < kGroups; ++g) {
    std::vector<Tensor> parts;
    for (std::size_t w = 0; w < kGroupWidth; ++w) {
      parts.push_back(steps[std::min(g + w, kInputSteps - 1)]);
    }
    groups.push_back(concat(parts, 3));
  }
  return concat(groups, 1);
}

GlgatModel::GlgatModel(ModelConfig config, ModelBuffers buffers, std::uint64_t seed)
    : config_(config), buffers_(std::move(buffers)) {
  config_.validate();
  const std::size_t n = config_.vertices;
  buffers_.adjacency.validate();
  if (buffers_.adjacency.vertices() != n) throw ShapeError("adjacency size does not match N");
  if (!(buffers_.target_std > 0.0)) throw ConfigError("target std must be positive");

  if (config_.uses_gat()) {
    if (buffers_.adjacency.count() != 1) throw ShapeError("GAT blocks take exactly one adjacency matrix");
    adjacency_ = Tensor::from({n, n}, buffers_.adjacency.matrices[0].data);
  } else {
    if (buffers_.adjacency.count() != config_.adjacency) {
      throw ShapeError("adjacency set holds " + std::to_string(buffers_.adjacency.count()) +
                       " matrices, model expects " + std::to_string(config_.adjacency));
    }
    std::vector<double> stacked;
    for (const auto& m : buffers_.adjacency.matrices) stacked.insert(stacked.end(), m.data.begin(), m.data.end());
    adjacency_ = Tensor::from({config_.adjacency, n, n}, std::move(stacked));
  }
  if (config_.pe_width > 0) {
    if (buffers_.pairwise.vertices != n || buffers_.pairwise.width != config_.pe_width) {
      throw ShapeError("pairwise encoding does not match the model");
    }
    pairwise_ = buffers_.pairwise.tensor();
  }

  encoding_ = init_vertex_encoding(n, config_.enc_width, derive_seed(seed, 0));
  const std::size_t c3 = kGroupWidth * config_.input_channels;
  const struct {
    std::size_t in, out;
    bool deep;
  } floors[] = {{c3, kTemporalWidth, false},
                {kTemporalWidth, kTemporalWidth, false},
                {kFlatWidth, kFlatWidth, true},
                {kFlatWidth, kFlatWidth, true},
                {kFlatWidth, kFlatWidth, true}};
  std::uint64_t stream = 1;
  for (const auto& f : floors) {
    const GlgatDims dims = f.deep ? config_.deep_dims() : config_.temporal_dims();
    const std::uint64_t s = derive_seed(seed, stream++);
    if (config_.uses_gat()) {
      blocks_.emplace_back(init_gat_layer(dims.hidden(), f.in, config_.enc_width, f.out, s));
    } else {
      blocks_.emplace_back(init_glgat_layer(dims, n, f.in, config_.enc_width, f.out, s));
    }
  }
  std::mt19937_64 rng(derive_seed(seed, stream));
  const double limit = std::sqrt(6.0 / static_cast<double>(kFlatWidth + kHorizon));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(kHorizon * kFlatWidth);
  for (double& v : w) v = dist(rng);
  head_w_ = Tensor::from({kHorizon, kFlatWidth}, std::move(w), true);
  head_b_ = Tensor::zeros({kHorizon}, true);
}

const GlgatModel::Block& GlgatModel::block(std::size_t floor) const {
  switch (floor) {
    case 1: return blocks_[0];
    case 2: return blocks_[1];
    case 4: return blocks_[2];
    case 5: return blocks_[3];
    case 6: return blocks_[4];
    default: throw ConfigError("floor " + std::to_string(floor) + " holds no attention block");
  }
}

Tensor GlgatModel::apply(const Block& block, const Tensor& x) const {
  if (const auto* g = std::get_if<GlgatLayerParams>(&block)) {
    return glgat_forward(*g, x, encoding_, adjacency_, pairwise_);
  }
  return gat_forward(std::get<GatLayerParams>(block), x, encoding_, adjacency_);
}

Tensor GlgatModel::prepare_input(const Tensor& input) const {
  const std::size_t n = config_.vertices;
  if (input.rank() != 4 || input.dim(1) != kInputSteps || input.dim(2) != n ||
      input.dim(3) != config_.input_channels) {
    throw ShapeError("model input " + shape_str(input.shape()) + " does not match [B, " +
                     std::to_string(kInputSteps) + ", " + std::to_string(n) + ", " +
                     std::to_string(config_.input_channels) + "]");
  }
  const std::size_t b = input.dim(0);
  return reshape(group_timesteps(input), {b * kGroups, n, kGroupWidth * config_.input_channels});
}

Tensor GlgatModel::run_stages(Tensor x, std::size_t from, std::size_t to) const {
  const std::size_t n = config_.vertices;
  for (std::size_t s = from; s < to; ++s) {
    if (s == 2) {
      const std::size_t b = x.dim(0) / kGroups;
      x = reshape(permute(reshape(x, {b, kGroups, n, kTemporalWidth}), {0, 2, 1, 3}), {b, n, kFlatWidth});
    }
    x = s < blocks_.size() ? apply(blocks_[s], x) : linear(x, head_w_, head_b_);
  }
  return x;
}

Tensor GlgatModel::forward_normalized(const Tensor& input) const {
  return run_stages(prepare_input(input), 0, kStages);
}

Tensor GlgatModel::stage_input(const Tensor& input, std::size_t stage) const {
  if (stage >= kStages) throw ConfigError("stage out of range");
  return run_stages(prepare_input(input), 0, stage);
}

Tensor GlgatModel::forward_from(std::size_t stage, const Tensor& activation) const {
  if (stage >= kStages) throw ConfigError("stage out of range");
  return denormalize(run_stages(activation, stage, kStages));
}

std::size_t GlgatModel::parameter_stage(const std::string& name) const {
  const char* prefixes[] = {"floor1.", "floor2.", "floor4.", "floor5.", "floor6.", "head."};
  for (std::size_t s = 0; s < kStages; ++s) {
    if (name.rfind(prefixes[s], 0) == 0) return s;
  }
  return 0;
}

Tensor GlgatModel::denormalize(const Tensor& normalized) const {
  return add_scalar(scale(normalized, buffers_.target_std), buffers_.target_mean);
}

Tensor GlgatModel::forward(const Tensor& input) const { return denormalize(forward_normalized(input)); }

std::vector<NamedTensor> GlgatModel::parameters() const {
  std::vector<NamedTensor> out{{"encoding", encoding_}};
  const char* names[] = {"floor1", "floor2", "floor4", "floor5", "floor6"};
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto params = std::visit([](const auto& b) { return b.parameters(); }, blocks_[k]);
    for (const auto& p : params) out.push_back({std::string(names[k]) + "." + p.name, p.tensor});
  }
  out.push_back({"head.w", head_w_});
  out.push_back({"head.b", head_b_});
  return out;
}

std::size_t GlgatModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

void GlgatModel::copy_parameters_from(const GlgatModel& other) {
  auto mine = parameters();
  const auto theirs = other.parameters();
  if (mine.size() != theirs.size()) throw ShapeError("parameter lists differ");
  for (std::size_t k = 0; k < mine.size(); ++k) {
    if (mine[k].tensor.shape() != theirs[k].tensor.shape()) {
      throw ShapeError("parameter '" + mine[k].name + "' differs in shape");
    }
    const auto src = theirs[k].tensor.values();
    std::copy(src.begin(), src.end(), mine[k].tensor.mutable_values().begin());
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"vertices", c.vertices},
          {"input_channels", c.input_channels},
          {"variant", to_string(c.variant)},
          {"adjacency", c.adjacency},
          {"heads", c.heads},
          {"temporal_head_size", c.temporal_head_size},
          {"deep_head_size", c.deep_head_size},
          {"pe_width", c.pe_width},
          {"enc_width", c.enc_width}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vertices = j.at("vertices").get<std::size_t>();
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.adjacency = j.at("adjacency").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.temporal_head_size = j.at("temporal_head_size").get<std::size_t>();
  c.deep_head_size = j.at("deep_head_size").get<std::size_t>();
  c.pe_width = j.at("pe_width").get<std::size_t>();
  c.enc_width = j.at("enc_width").get<std::size_t>();
  return c;
}

Checkpoint GlgatModel::to_checkpoint(nlohmann::json meta) const {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  ckpt.meta["model_config"] = to_json(config_);
  ckpt.meta["adjacency_labels"] = buffers_.adjacency.labels;
  ckpt.meta["target_mean"] = buffers_.target_mean;
  ckpt.meta["target_std"] = buffers_.target_std;
  for (std::size_t k = 0; k < buffers_.adjacency.count(); ++k) {
    const Matrix& m = buffers_.adjacency.matrices[k];
    ckpt.tensors.push_back({"buffer.adjacency." + std::to_string(k), {m.rows, m.cols}, m.data});
  }
  if (config_.pe_width > 0) {
    const auto& pe = buffers_.pairwise;
    ckpt.tensors.push_back({"buffer.pairwise", {pe.vertices, pe.vertices, pe.width}, pe.values});
  }
  for (const auto& p : parameters()) {
    ckpt.tensors.push_back({p.name, p.tensor.shape(),
                            std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())});
  }
  return ckpt;
}

GlgatModel GlgatModel::from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig config;
  ModelBuffers buffers;
  try {
    config = model_config_from_json(ckpt.meta.at("model_config"));
    buffers.adjacency.labels = ckpt.meta.at("adjacency_labels").get<std::vector<std::string>>();
    buffers.target_mean = ckpt.meta.at("target_mean").get<double>();
    buffers.target_std = ckpt.meta.at("target_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  for (std::size_t k = 0; k < buffers.adjacency.labels.size(); ++k) {
    const auto& t = ckpt.get("buffer.adjacency." + std::to_string(k));
    Matrix m(t.shape.at(0), t.shape.at(1));
    m.data = t.values;
    buffers.adjacency.matrices.push_back(std::move(m));
  }
  if (config.pe_width > 0) {
    const auto& t = ckpt.get("buffer.pairwise");
    buffers.pairwise.vertices = t.shape.at(0);
    buffers.pairwise.width = t.shape.at(2);
    buffers.pairwise.values = t.values;
  }
  GlgatModel model(config, std::move(buffers), 0);
  for (auto& p : model.parameters()) {
    const auto& t = ckpt.get(p.name);
    if (t.shape != p.tensor.shape()) {
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + shape_str(t.shape) +
                      ", model expects " + shape_str(p.tensor.shape()));
    }
    std::copy(t.values.begin(), t.values.end(), p.tensor.mutable_values().begin());
  }
  return model;
}

}  // namespace glgat
