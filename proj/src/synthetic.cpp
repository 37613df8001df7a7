#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numbers>
#include <random>

#include "glgat/error.hpp"
#include "glgat/graph_data.hpp"

namespace glgat {

namespace {

// Euclidean minimum spanning tree (Prim), returned as undirected pairs.
std::vector<Edge> spanning_tree(const std::vector<Point>& pts) {
  const std::size_t n = pts.size();
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(n, 0);
  std::vector<unsigned char> in_tree(n, 0);
  std::vector<Edge> edges;
  best[0] = 0.0;
  for (std::size_t iter = 0; iter < n; ++iter) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v] && (u == n || best[v] < best[u])) u = v;
    }
    in_tree[u] = 1;
    if (iter > 0) edges.push_back({std::min(parent[u], u), std::max(parent[u], u)});
    for (std::size_t v = 0; v < n; ++v) {
      const double d = std::hypot(pts[u].x - pts[v].x, pts[u].y - pts[v].y);
      if (!in_tree[v] && d < best[v]) {
        best[v] = d;
        parent[v] = u;
      }
    }
  }
  return edges;
}

struct Shock {
  std::size_t sensor;
  std::size_t step;
  double depth;
  double recovery;
};

}  // namespace

SyntheticData generate_synthetic(std::size_t n, std::size_t t, std::uint64_t seed,
                                 const SyntheticOptions& opt) {
  if (n < 4) throw ConfigError("synthetic data needs at least 4 sensors");
  if (t < 200) throw ConfigError("synthetic data needs at least 200 timesteps");
  if (!(opt.missing_ratio >= 0.0 && opt.missing_ratio < 1.0)) {
    throw ConfigError("missing ratio must lie in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticData out;
  SensorGraph& graph = out.graph;
  for (std::size_t v = 0; v < n; ++v) {
    char id[16];
    std::snprintf(id, sizeof id, "S%03zu", v);
    graph.ids.emplace_back(id);
    graph.coordinates.push_back({uniform(0.0, 10.0), uniform(0.0, 10.0)});
  }
  for (const auto& e : spanning_tree(graph.coordinates)) {
    graph.edges.push_back({e.from, e.to});
    graph.edges.push_back({e.to, e.from});
  }
  std::uniform_int_distribution<std::size_t> delay_dist(1, 3);
  auto& delay = out.trace.edge_delay;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) delay.push_back(delay_dist(rng));

  std::vector<double> base(n), amplitude(n), phase(n);
  for (std::size_t v = 0; v < n; ++v) {
    base[v] = uniform(55.0, 70.0);
    amplitude[v] = uniform(opt.daily_amplitude_min, opt.daily_amplitude_max);
    phase[v] = uniform(0.0, 1.0);
  }

  std::vector<Shock> shocks;
  for (std::size_t s = 0; s < t; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      if (unit(rng) < opt.shock_rate) {
        const double depth = uniform(opt.shock_depth_min, opt.shock_depth_max);
        shocks.push_back({v, s, depth, uniform(opt.shock_recovery_min, opt.shock_recovery_max)});
      }
    }
  }
  for (const auto& p : opt.planted) {
    if (p.sensor >= n || p.step >= t) throw ConfigError("planted shock outside the series");
    shocks.push_back({p.sensor, p.step, p.depth,
                      0.5 * (opt.shock_recovery_min + opt.shock_recovery_max)});
  }

  // Breadth-first propagation along edges: each hop adds the edge delay and
  // attenuates the depth.
  auto& congestion = out.trace.congestion;
  congestion.assign(t * n, 0.0);
  for (const auto& shock : shocks) {
    std::vector<unsigned char> reached(n, 0);
    std::deque<ShockArrival> queue;
    queue.push_back({shock.sensor, shock.step, shock.sensor, shock.step, 0, shock.depth});
    reached[shock.sensor] = 1;
    while (!queue.empty()) {
      const ShockArrival a = queue.front();
      queue.pop_front();
      if (a.step >= t) continue;
      out.trace.arrivals.push_back(a);
      for (std::size_t s = a.step; s < t; ++s) {
        const double c = a.depth * std::exp(-static_cast<double>(s - a.step) / shock.recovery);
        if (c < 1e-3) break;
        congestion[s * n + a.sensor] += c;
      }
      if (a.hops >= opt.propagation_hops) continue;
      for (std::size_t k = 0; k < graph.edges.size(); ++k) {
        const Edge& e = graph.edges[k];
        if (e.from != a.sensor || reached[e.to]) continue;
        reached[e.to] = 1;
        queue.push_back({e.to, a.step + delay[k], a.origin, a.origin_step, a.hops + 1,
                         a.depth * opt.propagation_decay});
      }
    }
  }

  TrafficSeries& series = out.series;
  series.steps = t;
  series.sensors = n;
  series.features = 1;
  series.data.assign(t * n, 0.0);
  series.mask.assign(t * n, 0);
  series.timestamps.resize(t);
  std::vector<double> drift(n, 0.0);
  for (std::size_t s = 0; s < t; ++s) {
    series.timestamps[s] = opt.start_time + static_cast<std::int64_t>(s) * opt.step_seconds;
    const double tod = series.time_of_day(s);
    for (std::size_t v = 0; v < n; ++v) {
      drift[v] = opt.drift_coeff * drift[v] + opt.drift_std * normal(rng);
      const double daily =
          amplitude[v] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (tod - phase[v])));
      double speed = base[v] - daily + drift[v] - congestion[s * n + v] + opt.noise_std * normal(rng);
      speed = std::clamp(speed, 3.0, 90.0);
      const bool missing = unit(rng) < opt.missing_ratio;
      series.data[s * n + v] = missing ? 0.0 : speed;
      series.mask[s * n + v] = missing ? 0 : 1;
    }
  }
  return out;
}

}  // namespace glgat
