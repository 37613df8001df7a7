#include "glgat/graph_data.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "glgat/error.hpp"

namespace glgat {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " columns, found " +
                      std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw DataError(file.string() + ": empty file");
  return table;
}

std::size_t column(const CsvTable& t, const std::string& name, const std::filesystem::path& file) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw DataError(file.string() + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

double parse_number(const std::string& cell, const std::filesystem::path& file, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size() || cell.empty()) {
    throw DataError(file.string() + ":" + std::to_string(line) + ": cannot parse '" + cell + "'");
  }
  return v;
}

bool is_missing_token(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "nan" || lower == "na" || lower == "null";
}

}  // namespace

void SensorGraph::validate() const {
  if (!ids.empty() && ids.size() != coordinates.size()) {
    throw DataError("sensor graph: id count does not match coordinate count");
  }
  for (const auto& p : coordinates) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError("sensor graph: non-finite coordinate");
  }
  for (const auto& e : edges) {
    if (e.from >= size() || e.to >= size()) throw DataError("sensor graph: edge endpoint out of range");
    if (e.from == e.to) throw DataError("sensor graph: self-loop in raw edge list");
  }
}

std::int64_t TrafficSeries::step_seconds() const {
  if (timestamps.size() < 2) return 300;
  return timestamps[1] - timestamps[0];
}

double TrafficSeries::time_of_day(std::size_t t) const {
  constexpr std::int64_t day = 86400;
  const std::int64_t s = ((timestamps[t] % day) + day) % day;
  return static_cast<double>(s) / static_cast<double>(day);
}

double TrafficSeries::missing_fraction() const {
  if (mask.empty()) return 0.0;
  const auto observed = std::count(mask.begin(), mask.end(), static_cast<unsigned char>(1));
  return 1.0 - static_cast<double>(observed) / static_cast<double>(mask.size());
}

TrafficSeries TrafficSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > steps) throw DataError("series slice out of range");
  TrafficSeries out;
  out.steps = end - begin;
  out.sensors = sensors;
  out.features = features;
  const std::size_t row = sensors * features;
  out.data.assign(data.begin() + begin * row, data.begin() + end * row);
  out.mask.assign(mask.begin() + begin * row, mask.begin() + end * row);
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  return out;
}

void TrafficSeries::validate() const {
  const std::size_t n = steps * sensors * features;
  if (data.size() != n || mask.size() != n || timestamps.size() != steps) {
    throw DataError("traffic series: inconsistent array sizes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) throw DataError("traffic series: non-finite value");
    if (!mask[i] && data[i] != 0.0) throw DataError("traffic series: masked cell holds nonzero value");
  }
  for (std::size_t t = 1; t < steps; ++t) {
    if (timestamps[t] - timestamps[t - 1] != step_seconds() || step_seconds() <= 0) {
      throw DataError("traffic series: timestamps are not strictly increasing with constant step");
    }
  }
}

NormStats compute_norm_stats(const TrafficSeries& series, std::size_t begin, std::size_t end) {
  NormStats stats;
  stats.mean.assign(series.features, 0.0);
  stats.std.assign(series.features, 1.0);
  for (std::size_t k = 0; k < series.features; ++k) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t n = 0; n < series.sensors; ++n) {
        if (series.observed(t, n, k)) {
          sum += series.at(t, n, k);
          ++count;
        }
      }
    }
    if (count == 0) throw DataError("no observed training values for feature " + std::to_string(k));
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t n = 0; n < series.sensors; ++n) {
        if (series.observed(t, n, k)) {
          const double d = series.at(t, n, k) - mean;
          sq += d * d;
        }
      }
    }
    stats.mean[k] = mean;
    stats.std[k] = std::max(std::sqrt(sq / static_cast<double>(count)), kMinStd);
  }
  return stats;
}

std::pair<std::size_t, std::size_t> split_boundaries(std::size_t steps, const SplitRatios& r) {
  if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0) ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  const auto part = [steps](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(steps) * ratio + 1e-9));
  };
  const std::size_t train_end = part(r.train);
  const std::size_t val_end = train_end + part(r.val);
  return {train_end, std::min(val_end, steps)};
}

WindowedSample make_window(const TrafficSeries& series, const NormStats& stats, std::size_t start,
                           std::size_t input_steps, std::size_t horizon) {
  if (start + input_steps + horizon > series.steps) throw DataError("window exceeds series");
  const std::size_t n = series.sensors, k_count = series.features;
  WindowedSample w;
  w.start = start;
  w.input_steps = input_steps;
  w.horizon = horizon;
  w.sensors = n;
  w.features = k_count;
  w.channels = input_channels(k_count);
  w.input.assign(input_steps * n * w.channels, 0.0);
  for (std::size_t p = 0; p < input_steps; ++p) {
    const std::size_t t = start + p;
    const double tod = series.time_of_day(t);
    for (std::size_t v = 0; v < n; ++v) {
      double* row = w.input.data() + (p * n + v) * w.channels;
      for (std::size_t k = 0; k < k_count; ++k) {
        const bool seen = series.observed(t, v, k);
        row[k] = seen ? stats.normalize(series.at(t, v, k), k) : 0.0;
        row[k_count + 1 + k] = seen ? 1.0 : 0.0;
      }
      row[k_count] = tod;
    }
  }
  const std::size_t row = n * k_count;
  const std::size_t first = (start + input_steps) * row;
  w.target.assign(series.data.begin() + first, series.data.begin() + first + horizon * row);
  w.target_mask.assign(series.mask.begin() + first, series.mask.begin() + first + horizon * row);
  return w;
}

DatasetSplits split_and_window(const TrafficSeries& series, std::size_t input_steps,
                               std::size_t horizon, const SplitRatios& ratios) {
  const auto [train_end, val_end] = split_boundaries(series.steps, ratios);
  if (input_steps + horizon > train_end) {
    throw DataError("series too short: the " + std::to_string(train_end) +
                    "-step training split cannot hold a " + std::to_string(input_steps + horizon) +
                    "-step window");
  }
  DatasetSplits out;
  out.train_end = train_end;
  out.val_end = val_end;
  out.stats = compute_norm_stats(series, 0, train_end);
  const auto windows = [&](std::size_t begin, std::size_t end) {
    std::vector<WindowedSample> ws;
    for (std::size_t s = begin; s + input_steps + horizon <= end; ++s) {
      ws.push_back(make_window(series, out.stats, s, input_steps, horizon));
    }
    return ws;
  };
  out.train = windows(0, train_end);
  out.val = windows(train_end, val_end);
  out.test = windows(val_end, series.steps);
  return out;
}

std::int64_t parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const int got = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d%n", &y, &mo, &d, &sep, &h, &mi, &s,
                              &consumed);
  if (got != 7 || (sep != ' ' && sep != 'T') || static_cast<std::size_t>(consumed) != text.size()) {
    throw DataError("cannot parse timestamp '" + text + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
    throw DataError("invalid timestamp '" + text + "'");
  }
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t seconds) {
  using namespace std::chrono;
  const std::int64_t day_count = (seconds >= 0 ? seconds : seconds - 86399) / 86400;
  const std::int64_t rem = seconds - day_count * 86400;
  const year_month_day ymd{sys_days{days{day_count}}};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

LoadedData load_series(const std::filesystem::path& series_file,
                       const std::filesystem::path& locations_file,
                       const std::optional<std::filesystem::path>& edges_file,
                       const LoadOptions& options) {
  const CsvTable table = read_csv(series_file);
  if (table.header.size() < 2) throw DataError(series_file.string() + ": no sensor columns");
  LoadedData out;
  SensorGraph& graph = out.graph;
  TrafficSeries& series = out.series;
  graph.ids.assign(table.header.begin() + 1, table.header.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < graph.ids.size(); ++i) {
    if (!index.emplace(graph.ids[i], i).second) {
      throw DataError(series_file.string() + ": duplicate sensor id '" + graph.ids[i] + "'");
    }
  }
  const std::size_t n = graph.ids.size();
  series.steps = table.rows.size();
  series.sensors = n;
  series.features = 1;
  series.data.assign(series.steps * n, 0.0);
  series.mask.assign(series.steps * n, 0);
  series.timestamps.resize(series.steps);
  for (std::size_t t = 0; t < series.steps; ++t) {
    const auto& row = table.rows[t];
    try {
      series.timestamps[t] = parse_timestamp(row[0]);
    } catch (const DataError& e) {
      throw DataError(series_file.string() + ":" + std::to_string(table.line_numbers[t]) + ": " +
                      e.what());
    }
    for (std::size_t v = 0; v < n; ++v) {
      const std::string& cell = row[v + 1];
      if (is_missing_token(cell)) continue;
      const double value = parse_number(cell, series_file, table.line_numbers[t]);
      if (!std::isfinite(value) || (options.zero_is_missing && value == 0.0)) continue;
      series.data[t * n + v] = value;
      series.mask[t * n + v] = 1;
    }
  }
  for (std::size_t t = 1; t < series.steps; ++t) {
    const auto step = series.timestamps[t] - series.timestamps[t - 1];
    if (step <= 0 || step != series.timestamps[1] - series.timestamps[0]) {
      throw DataError(series_file.string() + ":" + std::to_string(table.line_numbers[t]) +
                      ": non-constant timestep");
    }
  }

  const CsvTable locs = read_csv(locations_file);
  const std::size_t c_id = column(locs, "sensor_id", locations_file);
  const std::size_t c_x = column(locs, "x", locations_file);
  const std::size_t c_y = column(locs, "y", locations_file);
  graph.coordinates.assign(n, Point{});
  std::vector<unsigned char> located(n, 0);
  for (std::size_t r = 0; r < locs.rows.size(); ++r) {
    const auto& row = locs.rows[r];
    const auto it = index.find(row[c_id]);
    if (it == index.end()) {
      throw DataError("sensor-id mismatch: '" + row[c_id] + "' in " + locations_file.string() +
                      " is not a series column");
    }
    graph.coordinates[it->second] = {parse_number(row[c_x], locations_file, locs.line_numbers[r]),
                                     parse_number(row[c_y], locations_file, locs.line_numbers[r])};
    located[it->second] = 1;
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!located[v]) {
      throw DataError("sensor-id mismatch: '" + graph.ids[v] + "' has no location in " +
                      locations_file.string());
    }
  }

  if (edges_file) {
    const CsvTable es = read_csv(*edges_file);
    const std::size_t c_from = column(es, "from_id", *edges_file);
    const std::size_t c_to = column(es, "to_id", *edges_file);
    for (const auto& row : es.rows) {
      const auto a = index.find(row[c_from]);
      const auto b = index.find(row[c_to]);
      if (a == index.end() || b == index.end()) {
        throw DataError("sensor-id mismatch: edge " + row[c_from] + "->" + row[c_to] +
                        " references an unknown sensor");
      }
      if (a->second != b->second) graph.edges.push_back({a->second, b->second});
    }
  }
  graph.validate();
  series.validate();
  return out;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  return out;
}

}  // namespace

void write_series_csv(const std::filesystem::path& file, const SensorGraph& graph,
                      const TrafficSeries& series) {
  auto out = open_for_write(file);
  out << "timestamp";
  for (const auto& id : graph.ids) out << ',' << id;
  out << '\n';
  char buf[64];
  for (std::size_t t = 0; t < series.steps; ++t) {
    out << format_timestamp(series.timestamps[t]);
    for (std::size_t v = 0; v < series.sensors; ++v) {
      out << ',';
      if (series.observed(t, v)) {
        std::snprintf(buf, sizeof buf, "%.6f", series.at(t, v));
        out << buf;
      }
    }
    out << '\n';
  }
}

void write_locations_csv(const std::filesystem::path& file, const SensorGraph& graph) {
  auto out = open_for_write(file);
  out << "sensor_id,x,y\n";
  char buf[96];
  for (std::size_t v = 0; v < graph.size(); ++v) {
    std::snprintf(buf, sizeof buf, ",%.9f,%.9f\n", graph.coordinates[v].x, graph.coordinates[v].y);
    out << graph.ids[v] << buf;
  }
}

void write_edges_csv(const std::filesystem::path& file, const SensorGraph& graph) {
  auto out = open_for_write(file);
  out << "from_id,to_id\n";
  for (const auto& e : graph.edges) out << graph.ids[e.from] << ',' << graph.ids[e.to] << '\n';
}

}  // namespace glgat
