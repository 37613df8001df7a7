#include "glgat/layers.hpp"

#include <cmath>
#include <random>

#include "glgat/error.hpp"

namespace glgat {

namespace {

Tensor glorot(std::mt19937_64& rng, Shape shape, std::size_t fan_out, std::size_t fan_in,
              double gain = 1.0) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

// Queries/keys read x (+) E; the encoding is shared across the G graphs.
Tensor with_encoding(const Tensor& x, const Tensor& enc, std::size_t enc_width) {
  if (enc_width == 0) return x;
  if (!enc.defined() || enc.shape() != Shape{x.dim(1), enc_width}) {
    throw ShapeError("vertex encoding must be [N, " + std::to_string(enc_width) + "]");
  }
  return concat({x, broadcast_to(enc, {x.dim(0), x.dim(1), enc_width})}, 2);
}

void check_input(const Tensor& x3, std::size_t n, std::size_t k, const char* who) {
  if (x3.rank() != 3 || (n && x3.dim(1) != n) || x3.dim(2) != k) {
    throw ShapeError(std::string(who) + ": input " + shape_str(x3.shape()) + " does not match N=" +
                     std::to_string(n) + ", K=" + std::to_string(k));
  }
}

}  // namespace

void GlgatDims::validate() const {
  if (head_size == 0 || adjacency == 0 || heads == 0) {
    throw ConfigError("attention dims need H, H_adj and H_head >= 1");
  }
}

std::size_t glgat_parameter_count(const GlgatDims& d, std::size_t n, std::size_t in,
                                  std::size_t enc, std::size_t out) {
  const std::size_t hq = d.query_width(), hp = d.hidden(), z = in + enc;
  return (hq * z + hq) * (n + 1) + (hq * 2 * hq + hq) + (hp * z + hp) + (hp * in + hp) +
         (out * hp + out);
}

std::size_t gat_parameter_count(std::size_t h, std::size_t in, std::size_t enc, std::size_t out) {
  const std::size_t z = in + enc;
  return 2 * (h * z + h) + (h * in + h) + (out * h + out);
}

std::vector<NamedTensor> GlgatLayerParams::parameters() const {
  return {{"w_q_global", w_q_global}, {"b_q_global", b_q_global},
          {"w_q_local", w_q_local},   {"b_q_local", b_q_local},
          {"w_q_compress", w_q_compress}, {"b_q_compress", b_q_compress},
          {"w_k", w_k}, {"b_k", b_k}, {"w_v", w_v}, {"b_v", b_v},
          {"w_ff", w_ff}, {"b_ff", b_ff}};
}

std::size_t GlgatLayerParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

std::vector<NamedTensor> GatLayerParams::parameters() const {
  return {{"w_q", w_q}, {"b_q", b_q}, {"w_k", w_k}, {"b_k", b_k},
          {"w_v", w_v}, {"b_v", b_v}, {"w_ff", w_ff}, {"b_ff", b_ff}};
}

std::size_t GatLayerParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

GlgatLayerParams init_glgat_layer(const GlgatDims& dims, std::size_t n, std::size_t in,
                                  std::size_t enc, std::size_t out, std::uint64_t seed) {
  dims.validate();
  if (n == 0 || in == 0 || out == 0) throw ConfigError("layer needs N, K and K' >= 1");
  std::mt19937_64 rng(seed);
  const std::size_t hq = dims.query_width(), hp = dims.hidden(), z = in + enc;
  GlgatLayerParams p;
  p.dims = dims;
  p.vertices = n;
  p.in_features = in;
  p.enc_width = enc;
  p.out_features = out;
  p.w_q_global = glorot(rng, {hq, z}, hq, z);
  p.b_q_global = zeros_param({hq});
  p.w_q_local = glorot(rng, {n, hq, z}, hq, z, 0.5);
  p.b_q_local = zeros_param({n, hq});
  p.w_q_compress = glorot(rng, {hq, 2 * hq}, hq, 2 * hq);
  p.b_q_compress = zeros_param({hq});
  p.w_k = glorot(rng, {hp, z}, hp, z);
  p.b_k = zeros_param({hp});
  p.w_v = glorot(rng, {hp, in}, hp, in);
  p.b_v = zeros_param({hp});
  p.w_ff = glorot(rng, {out, hp}, out, hp);
  p.b_ff = zeros_param({out});
  return p;
}

GatLayerParams init_gat_layer(std::size_t hidden, std::size_t in, std::size_t enc, std::size_t out,
                              std::uint64_t seed) {
  if (hidden == 0 || in == 0 || out == 0) throw ConfigError("layer needs H, K and K' >= 1");
  std::mt19937_64 rng(seed);
  const std::size_t z = in + enc;
  GatLayerParams p;
  p.hidden = hidden;
  p.in_features = in;
  p.enc_width = enc;
  p.out_features = out;
  p.w_q = glorot(rng, {hidden, z}, hidden, z);
  p.b_q = zeros_param({hidden});
  p.w_k = glorot(rng, {hidden, z}, hidden, z);
  p.b_k = zeros_param({hidden});
  p.w_v = glorot(rng, {hidden, in}, hidden, in);
  p.b_v = zeros_param({hidden});
  p.w_ff = glorot(rng, {out, hidden}, out, hidden);
  p.b_ff = zeros_param({out});
  return p;
}

Tensor glgat_forward(const GlgatLayerParams& p, const Tensor& x, const Tensor& enc,
                     const Tensor& adjacency, const Tensor& pe, AttentionTrace* trace) {
  const bool unbatched = x.rank() == 2;
  const Tensor x3 = unbatched ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  check_input(x3, p.vertices, p.in_features, "glgat_forward");
  const std::size_t g = x3.dim(0), n = p.vertices;
  const std::size_t a = p.dims.adjacency, m = p.dims.heads, h = p.dims.head_size;
  const std::size_t hp = p.dims.hidden(), hq = p.dims.query_width(), pw = p.dims.pe_width;
  if (adjacency.shape() != Shape{a, n, n}) {
    throw ShapeError("glgat_forward: adjacency " + shape_str(adjacency.shape()) + ", expected " +
                     shape_str({a, n, n}));
  }
  if (pw > 0 && (!pe.defined() || pe.shape() != Shape{n, n, pw})) {
    throw ShapeError("glgat_forward: pairwise encoding must be " + shape_str({n, n, pw}));
  }

  const Tensor z = with_encoding(x3, enc, p.enc_width);
  const Tensor q_global = linear(z, p.w_q_global, p.b_q_global);
  const Tensor q_local = per_vertex_linear(z, p.w_q_local, p.b_q_local);
  const Tensor q = linear(concat({q_global, q_local}, 2), p.w_q_compress, p.b_q_compress);
  const Tensor k = linear(z, p.w_k, p.b_k);
  const Tensor v = linear(x3, p.w_v, p.b_v);

  // [G, N, H'] -> [G*H_adj*H_head, N, H]
  const auto split_heads = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {g, n, a, m, h}), {0, 2, 3, 1, 4}), {g * a * m, n, h});
  };
  const Tensor q_at = split_heads(slice(q, 2, 0, hp));
  const Tensor k_t = reshape(permute(reshape(k, {g, n, a, m, h}), {0, 2, 3, 4, 1}), {g * a * m, h, n});
  Tensor scores = reshape(bmm(q_at, k_t), {g, a, m, n, n});

  if (pw > 0) {
    // q_pe[g, i, n] . pe[i, j], evaluated per query vertex i.
    const Tensor q_pe = reshape(permute(reshape(slice(q, 2, hp, hq), {g, n, a, pw}), {1, 0, 2, 3}),
                                {n, g * a, pw});
    const Tensor pe_t = permute(pe, {0, 2, 1});  // [N(i), H_PE, N(j)]
    const Tensor pe_scores =
        reshape(permute(reshape(bmm(q_pe, pe_t), {n, g, a, n}), {1, 2, 0, 3}), {g, a, 1, n, n});
    scores = add(scores, broadcast_to(pe_scores, {g, a, m, n, n}));
  }
  const Tensor e = gelu(scores);
  const Tensor coeff = masked_softmax(e, reshape(adjacency, {a, 1, n, n}));
  if (trace) {
    trace->scores = e;
    trace->coefficients = coeff;
  }
  const Tensor hidden_heads = bmm(reshape(coeff, {g * a * m, n, n}), split_heads(v));
  const Tensor hidden =
      reshape(permute(reshape(hidden_heads, {g, a, m, n, h}), {0, 3, 1, 2, 4}), {g, n, hp});
  const Tensor out = linear(hidden, p.w_ff, p.b_ff);
  return unbatched ? reshape(out, {n, p.out_features}) : out;
}

Tensor gat_forward(const GatLayerParams& p, const Tensor& x, const Tensor& enc,
                   const Tensor& adjacency, AttentionTrace* trace) {
  const bool unbatched = x.rank() == 2;
  const Tensor x3 = unbatched ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  check_input(x3, 0, p.in_features, "gat_forward");
  const std::size_t g = x3.dim(0), n = x3.dim(1);
  if (adjacency.shape() != Shape{n, n}) {
    throw ShapeError("gat_forward: adjacency " + shape_str(adjacency.shape()) + ", expected " +
                     shape_str({n, n}));
  }
  const Tensor z = with_encoding(x3, enc, p.enc_width);
  const Tensor q = linear(z, p.w_q, p.b_q);
  const Tensor k = linear(z, p.w_k, p.b_k);
  const Tensor v = linear(x3, p.w_v, p.b_v);
  const Tensor e = gelu(bmm(q, permute(k, {0, 2, 1})));
  const Tensor coeff = masked_softmax(e, adjacency);
  if (trace) {
    trace->scores = e;
    trace->coefficients = coeff;
  }
  const Tensor out = linear(bmm(coeff, v), p.w_ff, p.b_ff);
  return unbatched ? reshape(out, {n, p.out_features}) : out;
}

}  // namespace glgat
