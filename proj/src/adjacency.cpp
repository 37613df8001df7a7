#include "glgat/adjacency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "glgat/error.hpp"

namespace glgat {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void AdjacencySet::validate() const {
  if (matrices.empty()) throw DataError("adjacency set is empty");
  if (labels.size() != matrices.size()) throw DataError("adjacency set: label count mismatch");
  const std::size_t n = vertices();
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const Matrix& m = matrices[k];
    if (m.rows != n || m.cols != n) throw DataError("adjacency '" + labels[k] + "' is not N x N");
    for (std::size_t i = 0; i < n; ++i) {
      if (m(i, i) != 1.0) throw DataError("adjacency '" + labels[k] + "' lacks a unit diagonal");
      for (std::size_t j = 0; j < n; ++j) {
        if (!(m(i, j) >= 0.0 && m(i, j) <= 1.0)) {
          throw DataError("adjacency '" + labels[k] + "' has an entry outside [0,1]");
        }
      }
    }
  }
}

EventLog detect_events(const TrafficSeries& series, std::size_t feature) {
  if (feature >= series.features) throw DataError("event feature index out of range");
  const std::size_t n = series.sensors;
  EventLog log;
  log.up.resize(n);
  log.down.resize(n);
  log.divider.assign(n, 0.0);
  log.flagged.assign(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    std::size_t seen = 0;
    for (std::size_t t = 0; t < series.steps; ++t) {
      if (!series.observed(t, v, feature)) continue;
      hi = std::max(hi, series.at(t, v, feature));
      lo = std::min(lo, series.at(t, v, feature));
      ++seen;
    }
    if (seen < 2) {
      log.flagged[v] = 1;
      continue;
    }
    const double divider = (hi + lo) / 2.0;
    log.divider[v] = divider;
    for (std::size_t t = 1; t < series.steps; ++t) {
      if (!series.observed(t - 1, v, feature) || !series.observed(t, v, feature)) continue;
      const double prev = series.at(t - 1, v, feature);
      const double cur = series.at(t, v, feature);
      if (prev < divider && divider <= cur) log.up[v].push_back(t);
      if (prev > divider && divider >= cur) log.down[v].push_back(t);
    }
  }
  return log;
}

Matrix event_cooccurrence(const std::vector<std::vector<std::size_t>>& events, std::size_t tp,
                          std::size_t tq) {
  const std::size_t n = events.size();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = events[i];
    if (!own.empty()) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto& other = events[j];
        std::size_t hits = 0;
        for (std::size_t t : own) {
          const std::size_t lo = t >= tp ? t - tp : 0;
          const auto it = std::lower_bound(other.begin(), other.end(), lo);
          if (it != other.end() && *it <= t + tq) ++hits;
        }
        a(i, j) = std::clamp(static_cast<double>(hits) / static_cast<double>(own.size()), 0.0, 1.0);
      }
    }
    a(i, i) = 1.0;
  }
  return a;
}

EventAdjacency build_event_adjacency(const EventLog& log, std::size_t tp, std::size_t tq) {
  return {event_cooccurrence(log.up, tp, tq), event_cooccurrence(log.down, tp, tq)};
}

Matrix build_connectivity_adjacency(const SensorGraph& graph) {
  Matrix a = Matrix::identity(graph.size());
  for (const auto& e : graph.edges) {
    if (e.from >= graph.size() || e.to >= graph.size()) throw DataError("edge endpoint out of range");
    a(e.from, e.to) = 1.0;
  }
  return a;
}

Matrix binarize(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data) v = v > 0.0 ? 1.0 : 0.0;
  return out;
}

void write_matrix_csv(const std::filesystem::path& file, const Matrix& m) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  char buf[32];
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  Matrix m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(is, cell, ',')) {
      m.data.push_back(std::stod(cell));
      ++cols;
    }
    if (m.rows == 0) m.cols = cols;
    if (cols != m.cols) throw DataError(file.string() + ": ragged matrix row");
    ++m.rows;
  }
  return m;
}

}  // namespace glgat
