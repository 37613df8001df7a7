#pragma once

// Seven-floor forecasting stack:
//   1. timestep grouping: pad the last input step twice, then width-3 stride-1
//      windows over the 14 padded steps give 12 groups of 3 steps each;
//      floor 1 (shared block) maps each group to 16 channels per vertex
//   2. shared 16 -> 16 block per group
//   3. time flatten: 12 groups x 16 channels = 192 per vertex
//   4-6. 192 -> 192 blocks
//   7. affine head 192 -> 12 horizons, denormalized to raw units

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "glgat/adjacency.hpp"
#include "glgat/checkpoint.hpp"
#include "glgat/layers.hpp"
#include "glgat/pairwise_encoding.hpp"

namespace glgat {

inline constexpr std::size_t kInputSteps = 12;
inline constexpr std::size_t kHorizon = 12;
inline constexpr std::size_t kGroupWidth = 3;
inline constexpr std::size_t kGroups = 12;
inline constexpr std::size_t kTemporalWidth = 16;
inline constexpr std::size_t kFlatWidth = kGroups * kTemporalWidth;  // 192

enum class Variant { full, ablation1, ablation2, ablation3 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);  // throws ConfigError

struct ModelConfig {
  std::size_t vertices = 0;
  std::size_t input_channels = 3;
  Variant variant = Variant::full;
  std::size_t adjacency = 2;            // H_adj
  std::size_t heads = 4;                // H_head
  std::size_t temporal_head_size = 2;   // H on floors 1-2 (H' = 16)
  std::size_t deep_head_size = 24;      // H on floors 4-6 (H' = 192)
  std::size_t pe_width = kPairwiseWidth;
  std::size_t enc_width = 8;            // H_E

  GlgatDims temporal_dims() const { return {temporal_head_size, adjacency, heads, pe_width}; }
  GlgatDims deep_dims() const { return {deep_head_size, adjacency, heads, pe_width}; }
  bool uses_gat() const { return variant == Variant::ablation3; }
  void validate() const;
};

// full: event matrices, pairwise encoding, GLGAT blocks.
// ablation1: connectivity in both adjacency slots.
// ablation2: no pairwise encoding (H_Q = H').
// ablation3: GAT blocks, no pairwise encoding, binarized event adjacency.
ModelConfig configure_ablation(ModelConfig config, Variant variant);

// Adjacency matrices consumed by `variant`. ablation3 receives a single
// matrix: the union of the binarized up and down event matrices.
AdjacencySet adjacency_for_variant(Variant variant, const Matrix& event_up,
                                   const Matrix& event_down, const Matrix& connectivity);

// [B, 12, N, C] -> [B, 12, N, 3C]; group g concatenates steps g, g+1, g+2
// with steps past the end clamped to the last one.
Tensor group_timesteps(const Tensor& x);

struct ModelBuffers {
  AdjacencySet adjacency;
  PairwiseEncoding pairwise;  // ignored when pe_width = 0
  double target_mean = 0.0;
  double target_std = 1.0;
};

class GlgatModel {
 public:
  using Block = std::variant<GlgatLayerParams, GatLayerParams>;

  GlgatModel(ModelConfig config, ModelBuffers buffers, std::uint64_t seed);

  // [B, 12, N, C] normalized inputs -> [B, N, 12] raw-scale predictions.
  Tensor forward(const Tensor& input) const;
  // Same, before denormalization.
  Tensor forward_normalized(const Tensor& input) const;
  Tensor denormalize(const Tensor& normalized) const;

  // Staged evaluation. Stage s in [0, 6) runs floor 1, 2, 4, 5, 6 or the
  // head; the time flatten opens stage 2. stage_input returns the activation
  // entering stage s, forward_from finishes the pass from there (raw scale).
  static constexpr std::size_t kStages = 6;
  Tensor stage_input(const Tensor& input, std::size_t stage) const;
  Tensor forward_from(std::size_t stage, const Tensor& activation) const;
  // First stage that reads parameter `name`; the vertex encoding feeds all.
  std::size_t parameter_stage(const std::string& name) const;

  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;

  const ModelConfig& config() const { return config_; }
  const ModelBuffers& buffers() const { return buffers_; }
  const Block& block(std::size_t floor) const;  // floors 1, 2, 4, 5, 6
  const Tensor& encoding() const { return encoding_; }
  const Tensor& adjacency_tensor() const { return adjacency_; }
  const Tensor& pairwise_tensor() const { return pairwise_; }

  // Copies parameter values from `other` (identical shapes required).
  void copy_parameters_from(const GlgatModel& other);

  Checkpoint to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const;
  static GlgatModel from_checkpoint(const Checkpoint& ckpt);

 private:
  Tensor apply(const Block& block, const Tensor& x) const;
  Tensor prepare_input(const Tensor& input) const;
  Tensor run_stages(Tensor x, std::size_t from, std::size_t to) const;

  ModelConfig config_;
  ModelBuffers buffers_;
  Tensor adjacency_;   // [H_adj, N, N] or [N, N] for GAT blocks
  Tensor pairwise_;    // [N, N, H_PE] or undefined
  Tensor encoding_;    // [N, H_E]
  std::vector<Block> blocks_;  // floors 1, 2, 4, 5, 6
  Tensor head_w_, head_b_;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Stateless 64-bit seed derivation (splitmix64 of seed and stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace glgat
