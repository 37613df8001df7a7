#include "glgat/pairwise_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "glgat/error.hpp"

namespace glgat {

std::size_t direction_class(double xi, double yi, double xj, double yj) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double theta = std::atan2(yj - yi, xj - xi);
  double shifted = std::fmod(theta + std::numbers::pi / 8.0, two_pi);
  if (shifted < 0.0) shifted += two_pi;
  const auto c = static_cast<std::size_t>(std::floor(shifted / (std::numbers::pi / 4.0)));
  return std::min(c, kDirectionClasses - 1);
}

std::array<double, kDirectionClasses> encode_direction(double xi, double yi, double xj, double yj,
                                                       double eps) {
  std::array<double, kDirectionClasses> v{};
  if (xi == xj && yi == yj) {
    v.fill(1.0 / static_cast<double>(kDirectionClasses));
    return v;
  }
  v.fill(eps / static_cast<double>(kDirectionClasses - 1));
  v[direction_class(xi, yi, xj, yj)] = 1.0 - eps;
  return v;
}

PairwiseEncoding build_pairwise_encoding(const SensorGraph& graph, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");
  const std::size_t n = graph.size();
  const auto& p = graph.coordinates;
  double max_l2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      max_l2 = std::max(max_l2, std::hypot(p[i].x - p[j].x, p[i].y - p[j].y));
    }
  }
  if (n > 1 && max_l2 == 0.0) throw DataError("degenerate geometry: all sensor coordinates coincide");
  if (n == 1) max_l2 = 1.0;

  PairwiseEncoding pe;
  pe.vertices = n;
  pe.values.assign(n * n * kPairwiseWidth, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* out = pe.values.data() + (i * n + j) * kPairwiseWidth;
      const auto dir = encode_direction(p[i].x, p[i].y, p[j].x, p[j].y, eps);
      std::copy(dir.begin(), dir.end(), out);
      // Absolute differences make the distances exactly symmetric in (i, j).
      const double dx = std::abs(p[i].x - p[j].x);
      const double dy = std::abs(p[i].y - p[j].y);
      out[kDirectionClasses] = (dx + dy) / max_l2;
      out[kDirectionClasses + 1] = std::hypot(dx, dy) / max_l2;
    }
  }
  return pe;
}

Tensor init_vertex_encoding(std::size_t n, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  std::vector<double> v(n * width);
  for (double& x : v) x = dist(rng);
  return Tensor::from({n, width}, std::move(v), true);
}

}  // namespace glgat
