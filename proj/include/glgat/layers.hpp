#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glgat/tensor.hpp"

namespace glgat {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Head geometry of a global-local attention layer.
struct GlgatDims {
  std::size_t head_size = 2;   // H, width of one head
  std::size_t adjacency = 2;   // H_adj
  std::size_t heads = 4;       // H_head, heads per adjacency matrix
  std::size_t pe_width = 10;   // H_PE, 0 disables the pairwise term

  // H' = H * H_adj * H_head
  std::size_t hidden() const { return head_size * adjacency * heads; }
  // H_Q = H' + H_adj * H_PE
  std::size_t query_width() const { return hidden() + adjacency * pe_width; }
  void validate() const;
};

// Single-head graph attention with a shared query transform.
struct GatLayerParams {
  std::size_t hidden = 0;      // H
  std::size_t in_features = 0;   // K
  std::size_t enc_width = 0;     // H_E
  std::size_t out_features = 0;  // K'
  Tensor w_q, b_q;  // H x (K + H_E), H
  Tensor w_k, b_k;  // H x (K + H_E), H
  Tensor w_v, b_v;  // H x K, H
  Tensor w_ff, b_ff;  // K' x H, K'

  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
};

// Global-local attention. Queries combine a shared transform with a
// per-vertex transform from the local bank, compressed back to H_Q channels.
// The first H' query channels address keys; the remaining H_adj * H_PE
// channels address the pairwise encoding.
struct GlgatLayerParams {
  GlgatDims dims;
  std::size_t vertices = 0;      // N, the local bank is bound to it
  std::size_t in_features = 0;   // K
  std::size_t enc_width = 0;     // H_E
  std::size_t out_features = 0;  // K'
  Tensor w_q_global, b_q_global;      // H_Q x (K + H_E), H_Q
  Tensor w_q_local, b_q_local;        // N x H_Q x (K + H_E), N x H_Q
  Tensor w_q_compress, b_q_compress;  // H_Q x 2 H_Q, H_Q (shared across vertices)
  Tensor w_k, b_k;                    // H' x (K + H_E), H'
  Tensor w_v, b_v;                    // H' x K, H'
  Tensor w_ff, b_ff;                  // K' x H', K'

  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
};

std::size_t glgat_parameter_count(const GlgatDims& dims, std::size_t n, std::size_t in,
                                  std::size_t enc, std::size_t out);
std::size_t gat_parameter_count(std::size_t hidden, std::size_t in, std::size_t enc,
                                std::size_t out);

// Glorot-uniform weights, zero biases; the local bank draws each vertex
// independently and halves it. Deterministic under `seed`.
GlgatLayerParams init_glgat_layer(const GlgatDims& dims, std::size_t n, std::size_t in,
                                  std::size_t enc, std::size_t out, std::uint64_t seed);
GatLayerParams init_gat_layer(std::size_t hidden, std::size_t in, std::size_t enc, std::size_t out,
                              std::uint64_t seed);

// Intermediate attention tensors, exposed for inspection and tests.
// GLGAT: [G, H_adj, H_head, N, N]; GAT: [G, N, N].
struct AttentionTrace {
  Tensor scores;        // after GELU
  Tensor coefficients;  // after masked softmax
};

// x: [G, N, K] (or [N, K]); enc: [N, H_E] or undefined; adjacency:
// [H_adj, N, N]; pe: [N, N, H_PE] (ignored when H_PE = 0). Returns
// [G, N, K'] (or [N, K']).
Tensor glgat_forward(const GlgatLayerParams& p, const Tensor& x, const Tensor& enc,
                     const Tensor& adjacency, const Tensor& pe, AttentionTrace* trace = nullptr);

// adjacency: [N, N].
Tensor gat_forward(const GatLayerParams& p, const Tensor& x, const Tensor& enc,
                   const Tensor& adjacency, AttentionTrace* trace = nullptr);

}  // namespace glgat
