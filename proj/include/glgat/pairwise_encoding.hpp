#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "glgat/graph_data.hpp"
#include "glgat/tensor.hpp"

namespace glgat {

inline constexpr std::size_t kDirectionClasses = 8;
inline constexpr std::size_t kPairwiseWidth = kDirectionClasses + 2;
inline constexpr double kDefaultLabelSmoothing = 0.1;

// 45-degree sector of the bearing from i to j; class 0 is centred on due
// east and classes increase counter-clockwise.
std::size_t direction_class(double xi, double yi, double xj, double yj);

// Label-smoothed one-hot of direction_class: 1 - eps on the hot class,
// eps / 7 elsewhere. Coincident points give the uniform vector 1/8.
std::array<double, kDirectionClasses> encode_direction(double xi, double yi, double xj, double yj,
                                                       double eps = kDefaultLabelSmoothing);

// N x N x 10 tensor: direction(i -> j), then L1 and L2 distances divided by
// the largest pairwise L2 distance. Coordinates are treated as planar.
struct PairwiseEncoding {
  std::size_t vertices = 0;
  std::size_t width = kPairwiseWidth;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return values[(i * vertices + j) * width + c];
  }
  Tensor tensor() const { return Tensor::from({vertices, vertices, width}, values); }
};

PairwiseEncoding build_pairwise_encoding(const SensorGraph& graph,
                                         double eps = kDefaultLabelSmoothing);

// Learnable N x H_E vertex table, uniform in [-0.05, 0.05]. H_E = 0 yields an
// empty table and disables the concatenation.
Tensor init_vertex_encoding(std::size_t n, std::size_t width, std::uint64_t seed);

}  // namespace glgat
