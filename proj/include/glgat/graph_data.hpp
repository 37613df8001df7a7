#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace glgat {

using Mask = std::vector<unsigned char>;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Sensors with planar coordinates and the raw road edge list (no self-loops).
struct SensorGraph {
  std::vector<std::string> ids;
  std::vector<Point> coordinates;
  std::vector<Edge> edges;

  std::size_t size() const { return coordinates.size(); }
  void validate() const;
};

// T x N x K observations, row-major (t, sensor, feature).
struct TrafficSeries {
  std::size_t steps = 0;
  std::size_t sensors = 0;
  std::size_t features = 0;
  std::vector<double> data;
  Mask mask;                          // 1 = observed; masked-out cells hold 0
  std::vector<std::int64_t> timestamps;  // seconds since epoch, constant step

  std::size_t index(std::size_t t, std::size_t n, std::size_t k) const {
    return (t * sensors + n) * features + k;
  }
  double at(std::size_t t, std::size_t n, std::size_t k = 0) const { return data[index(t, n, k)]; }
  bool observed(std::size_t t, std::size_t n, std::size_t k = 0) const {
    return mask[index(t, n, k)] != 0;
  }
  std::int64_t step_seconds() const;
  // Fraction of the day in [0, 1) for timestep t.
  double time_of_day(std::size_t t) const;
  double missing_fraction() const;
  // Copy of timesteps [begin, end).
  TrafficSeries slice(std::size_t begin, std::size_t end) const;
  void validate() const;
};

// Per-feature z-score statistics, computed on the training split only.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  double normalize(double v, std::size_t feature) const { return (v - mean[feature]) / std[feature]; }
  double denormalize(double z, std::size_t feature) const { return z * std[feature] + mean[feature]; }
};

inline constexpr double kMinStd = 1e-6;

NormStats compute_norm_stats(const TrafficSeries& series, std::size_t begin, std::size_t end);

// One forecasting example. Input channels per sensor are the K normalized
// features (0 where missing), the time of day, then the K mask flags.
struct WindowedSample {
  std::size_t start = 0;  // timestep of the first input step
  std::size_t input_steps = 0;
  std::size_t horizon = 0;
  std::size_t sensors = 0;
  std::size_t channels = 0;     // 2K + 1
  std::size_t features = 0;     // K
  std::vector<double> input;    // P x N x channels
  std::vector<double> target;   // Q x N x K, raw scale
  Mask target_mask;             // Q x N x K
};

inline std::size_t input_channels(std::size_t features) { return 2 * features + 1; }

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DatasetSplits {
  std::vector<WindowedSample> train;
  std::vector<WindowedSample> val;
  std::vector<WindowedSample> test;
  NormStats stats;
  std::size_t train_end = 0;  // timesteps [0, train_end) are training data
  std::size_t val_end = 0;    // [train_end, val_end) validation, rest test
};

// Chronological partition sizes for `steps` under `ratios`.
std::pair<std::size_t, std::size_t> split_boundaries(std::size_t steps, const SplitRatios& ratios);

// Stride-1 windows inside each chronological split; no window crosses a
// boundary. A split shorter than one window yields no windows, but the
// training split must hold at least one.
DatasetSplits split_and_window(const TrafficSeries& series, std::size_t input_steps,
                               std::size_t horizon, const SplitRatios& ratios = {});

WindowedSample make_window(const TrafficSeries& series, const NormStats& stats, std::size_t start,
                           std::size_t input_steps, std::size_t horizon);

struct LoadOptions {
  bool zero_is_missing = true;
};

struct LoadedData {
  SensorGraph graph;
  TrafficSeries series;
};

// Series CSV: timestamp column then one column per sensor id. Locations CSV:
// sensor_id,x,y. Optional edges CSV: from_id,to_id. Series column order
// defines vertex indexing.
LoadedData load_series(const std::filesystem::path& series_file,
                       const std::filesystem::path& locations_file,
                       const std::optional<std::filesystem::path>& edges_file = std::nullopt,
                       const LoadOptions& options = {});

// Naive ISO-8601 ("YYYY-MM-DD hh:mm:ss" or with 'T') <-> epoch seconds.
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t seconds);

void write_series_csv(const std::filesystem::path& file, const SensorGraph& graph,
                      const TrafficSeries& series);
void write_locations_csv(const std::filesystem::path& file, const SensorGraph& graph);
void write_edges_csv(const std::filesystem::path& file, const SensorGraph& graph);

// ---- synthetic data --------------------------------------------------------

struct PlantedShock {
  std::size_t sensor = 0;
  std::size_t step = 0;
  double depth = 20.0;
};

struct SyntheticOptions {
  double missing_ratio = 0.0;
  double noise_std = 1.0;
  double drift_std = 0.8;       // innovation of the per-sensor AR(1) drift
  double drift_coeff = 0.98;
  double daily_amplitude_min = 5.0;
  double daily_amplitude_max = 15.0;
  double shock_rate = 0.002;    // per sensor per step
  double shock_depth_min = 10.0;
  double shock_depth_max = 25.0;
  double shock_recovery_min = 12.0;  // e-folding time in steps
  double shock_recovery_max = 36.0;
  double propagation_decay = 0.7;    // depth multiplier per hop
  std::size_t propagation_hops = 3;
  std::vector<PlantedShock> planted;
  std::int64_t start_time = 1330560000;  // 2012-03-01 00:00:00
  std::int64_t step_seconds = 300;
};

struct ShockArrival {
  std::size_t sensor = 0;
  std::size_t step = 0;
  std::size_t origin = 0;
  std::size_t origin_step = 0;
  std::size_t hops = 0;
  double depth = 0.0;
};

struct SyntheticTrace {
  std::vector<ShockArrival> arrivals;  // includes the origin itself (hops = 0)
  std::vector<double> congestion;      // T x N speed reduction from shocks
  // Delay in steps (1..3) for each directed edge, aligned with graph.edges.
  std::vector<std::size_t> edge_delay;
};

struct SyntheticData {
  SensorGraph graph;
  TrafficSeries series;
  SyntheticTrace trace;
};

SyntheticData generate_synthetic(std::size_t n, std::size_t t, std::uint64_t seed,
                                 const SyntheticOptions& options = {});

}  // namespace glgat
