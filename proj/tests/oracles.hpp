#pragma once

// Independent scalar reference implementations used by the unit tests and
// the acceptance suite. Nothing here calls the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "glgat/graph_data.hpp"
#include "glgat/layers.hpp"

namespace glgat::oracle {

using Grid = std::vector<std::vector<double>>;

// ---- event adjacency ------------------------------------------------------------

struct EventMatrices {
  Grid up;
  Grid down;
};

inline EventMatrices event_adjacency(const TrafficSeries& s, std::size_t feature, long tp, long tq) {
  const std::size_t n = s.sensors;
  std::vector<std::vector<long>> up(n), down(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> seen;
    for (std::size_t t = 0; t < s.steps; ++t) {
      if (s.mask[(t * n + v) * s.features + feature]) seen.push_back(s.data[(t * n + v) * s.features + feature]);
    }
    if (seen.size() < 2) continue;
    const double divider = (*std::max_element(seen.begin(), seen.end()) +
                            *std::min_element(seen.begin(), seen.end())) / 2.0;
    for (std::size_t t = 1; t < s.steps; ++t) {
      const std::size_t a = ((t - 1) * n + v) * s.features + feature;
      const std::size_t b = (t * n + v) * s.features + feature;
      if (!s.mask[a] || !s.mask[b]) continue;
      if (s.data[a] < divider && divider <= s.data[b]) up[v].push_back(static_cast<long>(t));
      if (s.data[a] > divider && divider >= s.data[b]) down[v].push_back(static_cast<long>(t));
    }
  }
  const auto matrix = [&](const std::vector<std::vector<long>>& ev) {
    Grid m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (ev[i].empty()) continue;
        long count = 0;
        for (long t : ev[i]) {
          bool hit = false;
          for (long u : ev[j]) hit = hit || (u >= t - tp && u <= t + tq);
          count += hit ? 1 : 0;
        }
        m[i][j] = static_cast<double>(count) / static_cast<double>(ev[i].size());
      }
      m[i][i] = 1.0;
    }
    return m;
  };
  return {matrix(up), matrix(down)};
}

// ---- metrics ----------------------------------------------------------------------

struct Metrics {
  std::optional<double> mae, rmse, mape;
};

// Layout samples x N x H, horizon innermost; `horizon` is 1-based.
inline Metrics metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                       const std::vector<unsigned char>& mask, std::size_t horizons, std::size_t horizon) {
  double abs_sum = 0, sq_sum = 0, pct_sum = 0;
  double count = 0, pct_count = 0;
  for (std::size_t row = 0; row * horizons < pred.size(); ++row) {
    const std::size_t i = row * horizons + horizon - 1;
    if (!mask[i]) continue;
    const double y = truth[i], yhat = pred[i];
    abs_sum += std::fabs(y - yhat);
    sq_sum += (y - yhat) * (y - yhat);
    count += 1;
    if (std::fabs(y) >= 1.0) {
      pct_sum += std::fabs((y - yhat) / y);
      pct_count += 1;
    }
  }
  Metrics m;
  if (count > 0) {
    m.mae = abs_sum / count;
    m.rmse = std::sqrt(sq_sum / count);
  }
  if (pct_count > 0) m.mape = pct_sum / pct_count * 100.0;
  return m;
}

// ---- attention layers -------------------------------------------------------------

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

struct LayerEval {
  // GLGAT: scores[n][m][i][j]; GAT: scores[0][0][i][j].
  std::vector<std::vector<Grid>> scores;
  std::vector<std::vector<Grid>> coefficients;
  Grid output;  // N x K'
};

inline double val(const Tensor& t, std::size_t i) { return t.values()[i]; }

// x: N x K (one group), enc: N x H_E, adj[n]: N x N, pe[i][j][p].
inline LayerEval glgat_layer(const GlgatLayerParams& p, const Grid& x, const Grid& enc,
                             const std::vector<Grid>& adj, const std::vector<Grid>& pe) {
  const std::size_t n = x.size(), kin = p.in_features, he = p.enc_width, zw = kin + he;
  const std::size_t A = p.dims.adjacency, M = p.dims.heads, H = p.dims.head_size, P = p.dims.pe_width;
  const std::size_t hp = H * A * M, hq = hp + A * P;
  Grid z(n, std::vector<double>(zw));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < kin; ++l) z[i][l] = x[i][l];
    for (std::size_t l = 0; l < he; ++l) z[i][kin + l] = enc[i][l];
  }
  Grid q(n, std::vector<double>(hq)), k(n, std::vector<double>(hp)), v(n, std::vector<double>(hp));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> qg(hq), ql(hq);
    for (std::size_t c = 0; c < hq; ++c) {
      qg[c] = val(p.b_q_global, c);
      ql[c] = val(p.b_q_local, i * hq + c);
      for (std::size_t l = 0; l < zw; ++l) {
        qg[c] += val(p.w_q_global, c * zw + l) * z[i][l];
        ql[c] += val(p.w_q_local, (i * hq + c) * zw + l) * z[i][l];
      }
    }
    for (std::size_t c = 0; c < hq; ++c) {
      q[i][c] = val(p.b_q_compress, c);
      for (std::size_t l = 0; l < hq; ++l) {
        q[i][c] += val(p.w_q_compress, c * 2 * hq + l) * qg[l] + val(p.w_q_compress, c * 2 * hq + hq + l) * ql[l];
      }
    }
    for (std::size_t c = 0; c < hp; ++c) {
      k[i][c] = val(p.b_k, c);
      for (std::size_t l = 0; l < zw; ++l) k[i][c] += val(p.w_k, c * zw + l) * z[i][l];
      v[i][c] = val(p.b_v, c);
      for (std::size_t l = 0; l < kin; ++l) v[i][c] += val(p.w_v, c * kin + l) * x[i][l];
    }
  }
  LayerEval out;
  out.scores.assign(A, std::vector<Grid>(M, Grid(n, std::vector<double>(n))));
  out.coefficients = out.scores;
  Grid hidden(n, std::vector<double>(hp, 0.0));
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t base = (a * M + m) * H;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0;
          for (std::size_t c = 0; c < H; ++c) s += q[i][base + c] * k[j][base + c];
          for (std::size_t c = 0; c < P; ++c) s += q[i][hp + a * P + c] * pe[i][j][c];
          out.scores[a][m][i][j] = gelu(s);
        }
        double den = 0;
        for (std::size_t j = 0; j < n; ++j) den += std::exp(out.scores[a][m][i][j]) * adj[a][i][j];
        for (std::size_t j = 0; j < n; ++j) {
          out.coefficients[a][m][i][j] = std::exp(out.scores[a][m][i][j]) * adj[a][i][j] / den;
          for (std::size_t c = 0; c < H; ++c) hidden[i][base + c] += out.coefficients[a][m][i][j] * v[j][base + c];
        }
      }
    }
  }
  out.output.assign(n, std::vector<double>(p.out_features));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < p.out_features; ++o) {
      double s = val(p.b_ff, o);
      for (std::size_t c = 0; c < hp; ++c) s += val(p.w_ff, o * hp + c) * hidden[i][c];
      out.output[i][o] = s;
    }
  }
  return out;
}

inline LayerEval gat_layer(const GatLayerParams& p, const Grid& x, const Grid& enc, const Grid& adj) {
  const std::size_t n = x.size(), kin = p.in_features, he = p.enc_width, zw = kin + he, H = p.hidden;
  Grid q(n, std::vector<double>(H)), k = q, v = q;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(x[i]);
    for (std::size_t l = 0; l < he; ++l) z.push_back(enc[i][l]);
    for (std::size_t c = 0; c < H; ++c) {
      q[i][c] = val(p.b_q, c);
      k[i][c] = val(p.b_k, c);
      v[i][c] = val(p.b_v, c);
      for (std::size_t l = 0; l < zw; ++l) {
        q[i][c] += val(p.w_q, c * zw + l) * z[l];
        k[i][c] += val(p.w_k, c * zw + l) * z[l];
      }
      for (std::size_t l = 0; l < kin; ++l) v[i][c] += val(p.w_v, c * kin + l) * x[i][l];
    }
  }
  LayerEval out;
  out.scores.assign(1, std::vector<Grid>(1, Grid(n, std::vector<double>(n))));
  out.coefficients = out.scores;
  Grid& e = out.scores[0][0];
  Grid& a = out.coefficients[0][0];
  out.output.assign(n, std::vector<double>(p.out_features));
  for (std::size_t i = 0; i < n; ++i) {
    double den = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < H; ++c) s += q[i][c] * k[j][c];
      e[i][j] = gelu(s);
      den += std::exp(e[i][j]) * adj[i][j];
    }
    std::vector<double> hidden(H, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      a[i][j] = std::exp(e[i][j]) * adj[i][j] / den;
      for (std::size_t c = 0; c < H; ++c) hidden[c] += a[i][j] * v[j][c];
    }
    for (std::size_t o = 0; o < p.out_features; ++o) {
      double s = val(p.b_ff, o);
      for (std::size_t c = 0; c < H; ++c) s += val(p.w_ff, o * H + c) * hidden[c];
      out.output[i][o] = s;
    }
  }
  return out;
}

}  // namespace glgat::oracle
