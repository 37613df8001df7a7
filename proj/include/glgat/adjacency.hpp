#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "glgat/graph_data.hpp"

namespace glgat {

// Dense row-major square-or-rectangular matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// The matrices A_n consumed by attention. Entries lie in [0,1] and every
// diagonal entry is 1, so no attention row is ever empty.
struct AdjacencySet {
  std::vector<Matrix> matrices;
  std::vector<std::string> labels;

  std::size_t count() const { return matrices.size(); }
  std::size_t vertices() const { return matrices.empty() ? 0 : matrices.front().rows; }
  // Throws DataError if any matrix breaks the [0,1] / unit-diagonal contract.
  void validate() const;
};

// Up/down crossings of each sensor's divider, (max + min) / 2 of its
// observed readings.
struct EventLog {
  std::vector<std::vector<std::size_t>> up;
  std::vector<std::vector<std::size_t>> down;
  std::vector<double> divider;
  std::vector<unsigned char> flagged;  // fewer than two observed readings

  std::size_t vertices() const { return up.size(); }
};

// `series` must already be restricted to the training portion.
EventLog detect_events(const TrafficSeries& series, std::size_t feature = 0);

struct EventAdjacency {
  Matrix up;
  Matrix down;
};

// Row i, column j: fraction of i's events whose window [t - tp, t + tq]
// contains an event of j, then A[i][i] := 1.
EventAdjacency build_event_adjacency(const EventLog& log, std::size_t tp, std::size_t tq);

// Co-occurrence matrix for one event family (the up or the down lists).
Matrix event_cooccurrence(const std::vector<std::vector<std::size_t>>& events, std::size_t tp,
                          std::size_t tq);

// A[i][j] = 1 for raw edges (i, j) and on the diagonal.
Matrix build_connectivity_adjacency(const SensorGraph& graph);

// Entries > 0 become 1.
Matrix binarize(const Matrix& m);

void write_matrix_csv(const std::filesystem::path& file, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& file);

}  // namespace glgat
