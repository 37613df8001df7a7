#include "glgat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "glgat/error.hpp"

namespace glgat {

Tensor smooth_l1(const Tensor& pred, std::span<const double> target,
                 std::span<const unsigned char> mask) {
  if (std::none_of(mask.begin(), mask.end(), [](unsigned char m) { return m != 0; })) {
    std::cerr << "warning: smooth_l1 called with an empty mask; loss is 0\n";
  }
  return batch_smooth_l1(reshape(pred, {1, pred.numel()}), target, mask);
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<NamedTensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr >= 0.0) || !(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 >= 0.0 && options_.beta2 < 1.0) || !(options_.eps > 0.0) ||
      !(options_.clip_norm >= 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  double sq_norm = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
      }
      sq_norm += g * g;
    }
  }
  double factor = 1.0;
  if (options_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq_norm);
    if (norm > options_.clip_norm) factor = options_.clip_norm / norm;
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * factor;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

// ---- metrics ----------------------------------------------------------------

const HorizonMetrics& EvalReport::at(std::size_t horizon) const {
  for (const auto& h : horizons) {
    if (h.horizon == horizon) return h;
  }
  throw Error("report has no horizon " + std::to_string(horizon));
}

EvalReport evaluate(std::span<const double> preds, std::span<const double> targets,
                    std::span<const unsigned char> masks, std::size_t horizon_count,
                    const std::vector<std::size_t>& horizons) {
  if (preds.size() != targets.size() || preds.size() != masks.size()) {
    throw ShapeError("evaluate: prediction, target and mask sizes differ");
  }
  if (horizon_count == 0 || preds.size() % horizon_count != 0) {
    throw ShapeError("evaluate: array size is not a multiple of the horizon count");
  }
  const std::size_t rows = preds.size() / horizon_count;
  EvalReport report;
  for (std::size_t h : horizons) {
    if (h == 0 || h > horizon_count) throw ShapeError("evaluate: horizon out of range");
    HorizonMetrics m;
    m.horizon = h;
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t pct_count = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = r * horizon_count + (h - 1);
      if (!masks[i]) {
        ++m.masked_out;
        continue;
      }
      const double err = targets[i] - preds[i];
      abs_sum += std::abs(err);
      sq_sum += err * err;
      ++m.valid;
      if (std::abs(targets[i]) < kMapeMinTruth) {
        ++m.mape_excluded;
      } else {
        pct_sum += std::abs(err / targets[i]);
        ++pct_count;
      }
    }
    if (m.valid > 0) {
      m.mae = abs_sum / static_cast<double>(m.valid);
      m.rmse = std::sqrt(sq_sum / static_cast<double>(m.valid));
    }
    if (pct_count > 0) m.mape = 100.0 * pct_sum / static_cast<double>(pct_count);
    report.horizons.push_back(m);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["label"] = report.label;
  j["horizons"] = nlohmann::json::array();
  const auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  for (const auto& h : report.horizons) {
    j["horizons"].push_back({{"horizon", h.horizon},
                             {"minutes", h.horizon * 5},
                             {"mae", opt(h.mae)},
                             {"rmse", opt(h.rmse)},
                             {"mape", opt(h.mape)},
                             {"valid", h.valid},
                             {"masked_out", h.masked_out},
                             {"mape_excluded", h.mape_excluded}});
  }
  return j;
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  char buf[128];
  if (reports.empty()) return {};
  const auto& first = reports.front().horizons;
  std::snprintf(buf, sizeof buf, "%-12s", "Model");
  os << buf;
  for (const auto& h : first) {
    std::snprintf(buf, sizeof buf, "| %-24s", (std::to_string(h.horizon * 5) + " minutes").c_str());
    os << buf;
  }
  os << '\n';
  std::snprintf(buf, sizeof buf, "%-12s", "");
  os << buf;
  for (std::size_t k = 0; k < first.size(); ++k) os << "| MAE     RMSE    MAPE     ";
  os << '\n';
  const auto cell = [&](const std::optional<double>& v, bool pct) {
    if (!v) return std::string("n/a     ");
    std::snprintf(buf, sizeof buf, pct ? "%6.2f%% " : "%-7.3f ", *v);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-12s", r.label.c_str());
    os << buf;
    for (const auto& h : r.horizons) {
      os << "| " << cell(h.mae, false) << cell(h.rmse, false) << cell(h.mape, true) << " ";
    }
    os << '\n';
  }
  return os.str();
}

// ---- batching -----------------------------------------------------------------

Batch make_batch(const std::vector<WindowedSample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  const WindowedSample& first = samples.at(indices[0]);
  const std::size_t p = first.input_steps, n = first.sensors, c = first.channels;
  const std::size_t q = first.horizon, k = first.features;
  Batch batch;
  batch.size = indices.size();
  std::vector<double> input;
  input.reserve(batch.size * p * n * c);
  batch.target.resize(batch.size * n * q);
  batch.mask.resize(batch.size * n * q);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const WindowedSample& w = samples.at(indices[b]);
    if (w.input_steps != p || w.sensors != n || w.channels != c || w.horizon != q) {
      throw ShapeError("batch mixes windows of different shapes");
    }
    input.insert(input.end(), w.input.begin(), w.input.end());
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t h = 0; h < q; ++h) {
        batch.target[(b * n + v) * q + h] = w.target[(h * n + v) * k];
        batch.mask[(b * n + v) * q + h] = w.target_mask[(h * n + v) * k];
      }
    }
  }
  batch.input = Tensor::from({batch.size, p, n, c}, std::move(input));
  return batch;
}

Batch make_batch(const std::vector<WindowedSample>& samples) {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batch(samples, all);
}

// ---- historical average ---------------------------------------------------------

HistoricalAverage::HistoricalAverage(const TrafficSeries& train, std::size_t feature)
    : sensors_(train.sensors), step_seconds_(train.step_seconds()) {
  if (feature >= train.features) throw DataError("HA feature index out of range");
  if (step_seconds_ <= 0 || 86400 % step_seconds_ != 0) {
    throw DataError("HA needs a timestep that divides one day");
  }
  slots_ = static_cast<std::size_t>(86400 / step_seconds_);
  if (train.steps < slots_) throw DataError("HA needs at least one full day of training data");
  std::vector<double> sum(slots_ * sensors_, 0.0), count(slots_ * sensors_, 0.0);
  std::vector<double> total(sensors_, 0.0), total_count(sensors_, 0.0);
  for (std::size_t t = 0; t < train.steps; ++t) {
    const std::size_t s = slot_of(train.timestamps[t]);
    for (std::size_t v = 0; v < sensors_; ++v) {
      if (!train.observed(t, v, feature)) continue;
      sum[s * sensors_ + v] += train.at(t, v, feature);
      count[s * sensors_ + v] += 1.0;
      total[v] += train.at(t, v, feature);
      total_count[v] += 1.0;
    }
  }
  table_.resize(slots_ * sensors_);
  for (std::size_t s = 0; s < slots_; ++s) {
    for (std::size_t v = 0; v < sensors_; ++v) {
      const std::size_t i = s * sensors_ + v;
      if (count[i] > 0.0) {
        table_[i] = sum[i] / count[i];
      } else {
        table_[i] = total_count[v] > 0.0 ? total[v] / total_count[v] : 0.0;
      }
    }
  }
}

std::size_t HistoricalAverage::slot_of(std::int64_t timestamp) const {
  const std::int64_t sec = ((timestamp % 86400) + 86400) % 86400;
  return static_cast<std::size_t>(sec / step_seconds_);
}

double HistoricalAverage::predict(std::size_t sensor, std::int64_t timestamp) const {
  if (sensor >= sensors_) throw DataError("HA sensor index out of range");
  return table_[slot_of(timestamp) * sensors_ + sensor];
}

std::vector<double> HistoricalAverage::predict_windows(
    const TrafficSeries& series, const std::vector<WindowedSample>& windows) const {
  std::vector<double> out;
  for (const auto& w : windows) {
    for (std::size_t v = 0; v < w.sensors; ++v) {
      for (std::size_t h = 0; h < w.horizon; ++h) {
        out.push_back(predict(v, series.timestamps.at(w.start + w.input_steps + h)));
      }
    }
  }
  return out;
}

// ---- training ---------------------------------------------------------------------

std::vector<double> predict(const GlgatModel& model, const std::vector<WindowedSample>& windows,
                            std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<double> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(windows.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch batch = make_batch(windows, idx);
    const Tensor pred = model.forward(batch.input);
    out.insert(out.end(), pred.values().begin(), pred.values().end());
  }
  return out;
}

double mean_absolute_error(std::span<const double> preds, std::span<const double> targets,
                           std::span<const unsigned char> masks) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!masks[i]) continue;
    sum += std::abs(preds[i] - targets[i]);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

namespace {

std::vector<std::vector<double>> snapshot(const GlgatModel& model) {
  std::vector<std::vector<double>> out;
  for (const auto& p : model.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(GlgatModel& model, const std::vector<std::vector<double>>& values) {
  auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::copy(values[k].begin(), values[k].end(), params[k].tensor.mutable_values().begin());
  }
}

}  // namespace

TrainResult train(GlgatModel& model, const DatasetSplits& data, const TrainOptions& options,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (data.train.empty()) throw DataError("no training windows");
  if (data.val.empty()) throw DataError("no validation windows");
  if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");

  const Batch val = make_batch(data.val);
  const auto validate = [&](EpochLog& log) {
    const auto preds = predict(model, data.val);
    const EvalReport r = evaluate(preds, val.target, val.mask, kHorizon);
    for (std::size_t k = 0; k < kReportHorizons.size(); ++k) {
      log.val_mae[k] = r.at(kReportHorizons[k]).mae.value_or(0.0);
    }
    log.val_mae_all = mean_absolute_error(preds, val.target, val.mask);
  };

  TrainResult result;
  EpochLog initial;
  validate(initial);
  result.best_val_mae = initial.val_mae_all;
  auto best = snapshot(model);

  Adam adam(model.parameters(), options.adam);
  std::mt19937_64 rng(derive_seed(options.seed, 0x5EED));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t batches = (order.size() + options.batch_size - 1) / options.batch_size;
  if (options.batches_per_epoch > 0) batches = std::min(batches, options.batches_per_epoch);

  std::size_t stale = 0;
  const auto started = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * options.batch_size;
      const std::size_t hi = std::min(order.size(), lo + options.batch_size);
      const Batch batch =
          make_batch(data.train, std::span<const std::size_t>(order.data() + lo, hi - lo));
      try {
        adam.zero_grad();
        const Tensor pred = model.forward(batch.input);
        const Tensor loss = batch_smooth_l1(pred, batch.target, batch.mask);
        loss.backward();
        adam.step();
        loss_sum += loss.item();
      } catch (const NumericalError& e) {
        restore(model, best);
        throw NumericalError(std::string("training diverged at epoch ") + std::to_string(epoch) +
                             ", batch " + std::to_string(b + 1) + ": " + e.what() +
                             "; parameters restored to the last finite checkpoint (epoch " +
                             std::to_string(result.best_epoch) + ")");
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    validate(log);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (options.verbose) {
      std::fprintf(stderr, "epoch %zu  loss %.5f  val MAE %.4f  (%.1fs)\n", epoch, log.train_loss,
                   log.val_mae_all, log.wall_seconds);
    }
    if (log.val_mae_all < result.best_val_mae) {
      result.best_val_mae = log.val_mae_all;
      result.best_epoch = epoch;
      best = snapshot(model);
      stale = 0;
    } else if (++stale >= options.patience && options.patience > 0) {
      result.early_stopped = true;
      break;
    }
  }
  restore(model, best);
  return result;
}

void write_training_log(const std::filesystem::path& file, const std::vector<EpochLog>& log) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "epoch,train_loss,val_mae_15min,val_mae_30min,val_mae_60min,val_mae_all,wall_time_s\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n", e.epoch, e.train_loss,
                  e.val_mae[0], e.val_mae[1], e.val_mae[2], e.val_mae_all, e.wall_seconds);
    out << buf;
  }
}

}  // namespace glgat
