#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "glgat/graph_data.hpp"
#include "glgat/layers.hpp"
#include "glgat/model.hpp"

namespace glgat {

// ---- loss -----------------------------------------------------------------

// Mean smooth-L1 (0.5 d^2 if |d| < 1, else |d| - 0.5) over mask-true
// elements. An empty mask yields 0 and a warning on stderr.
Tensor smooth_l1(const Tensor& pred, std::span<const double> target,
                 std::span<const unsigned char> mask);

// ---- optimizer ------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global-norm clipping; 0 disables
};

class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamOptions options);

  // Applies one bias-corrected update from the parameters' current grads.
  // A non-finite gradient throws NumericalError naming the tensor and leaves
  // every parameter untouched.
  void step();
  void zero_grad();

  std::size_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<NamedTensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

// ---- metrics --------------------------------------------------------------

inline constexpr std::array<std::size_t, 3> kReportHorizons = {3, 6, 12};  // 15/30/60 min
inline constexpr double kMapeMinTruth = 1.0;

struct HorizonMetrics {
  std::size_t horizon = 0;          // steps ahead, 1-based
  std::optional<double> mae;        // undefined when no valid element
  std::optional<double> rmse;
  std::optional<double> mape;       // percent
  std::size_t valid = 0;
  std::size_t masked_out = 0;
  std::size_t mape_excluded = 0;    // valid elements with |truth| < kMapeMinTruth
};

struct EvalReport {
  std::string label;
  std::vector<HorizonMetrics> horizons;

  const HorizonMetrics& at(std::size_t horizon) const;
};

// preds/targets/masks: samples x N x H (horizon innermost).
EvalReport evaluate(std::span<const double> preds, std::span<const double> targets,
                    std::span<const unsigned char> masks, std::size_t horizon_count,
                    const std::vector<std::size_t>& horizons = {kReportHorizons.begin(),
                                                                kReportHorizons.end()});

nlohmann::json to_json(const EvalReport& report);
// Text table shaped like the usual MAE/RMSE/MAPE x 15/30/60 min layout.
std::string format_table(const std::vector<EvalReport>& reports);

// ---- batching -------------------------------------------------------------

// Stacked model inputs and horizon-major targets for a set of windows.
struct Batch {
  Tensor input;                 // [B, P, N, C]
  std::vector<double> target;   // B x N x Q (feature 0)
  Mask mask;                    // B x N x Q
  std::size_t size = 0;
};

Batch make_batch(const std::vector<WindowedSample>& samples, std::span<const std::size_t> indices);
Batch make_batch(const std::vector<WindowedSample>& samples);

// ---- historical average ----------------------------------------------------

class HistoricalAverage {
 public:
  // Fits per (sensor, time-of-day slot) means over observed values of
  // `train` (feature `feature`). Needs at least one full day of data.
  explicit HistoricalAverage(const TrafficSeries& train, std::size_t feature = 0);

  double predict(std::size_t sensor, std::int64_t timestamp) const;
  std::size_t slots() const { return slots_; }

  // Predictions for the target steps of each window: samples x N x Q.
  std::vector<double> predict_windows(const TrafficSeries& series,
                                      const std::vector<WindowedSample>& windows) const;

 private:
  std::size_t slot_of(std::int64_t timestamp) const;

  std::size_t sensors_ = 0;
  std::size_t slots_ = 0;
  std::int64_t step_seconds_ = 300;
  std::vector<double> table_;  // slot x sensor
};

// ---- training loop ----------------------------------------------------------

struct TrainOptions {
  AdamOptions adam;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::size_t patience = 20;          // epochs without validation gain
  std::size_t batches_per_epoch = 0;  // 0 = full pass over the training windows
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::array<double, 3> val_mae{};  // at kReportHorizons
  double val_mae_all = 0.0;         // over all 12 horizons
  double wall_seconds = 0.0;        // non-deterministic
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 = initial parameters were never beaten
  double best_val_mae = 0.0;
  bool early_stopped = false;
};

// Predictions for windows in evaluation mode: samples x N x Q.
std::vector<double> predict(const GlgatModel& model, const std::vector<WindowedSample>& windows,
                            std::size_t batch_size = 64);

// Mean absolute error over all horizons and valid targets.
double mean_absolute_error(std::span<const double> preds, std::span<const double> targets,
                           std::span<const unsigned char> masks);

// Mini-batch Adam on the training windows with per-epoch validation;
// the best-validation parameters are restored into `model` on return.
// Divergence throws NumericalError after restoring the best parameters.
TrainResult train(GlgatModel& model, const DatasetSplits& data, const TrainOptions& options,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

void write_training_log(const std::filesystem::path& file, const std::vector<EpochLog>& log);

}  // namespace glgat
