#pragma once

// Run configuration (flat `key = value` text, `#` comments) and the
// load -> split -> adjacency -> encoding -> model pipeline built from it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "glgat/adjacency.hpp"
#include "glgat/graph_data.hpp"
#include "glgat/model.hpp"
#include "glgat/pairwise_encoding.hpp"
#include "glgat/training.hpp"

namespace glgat {

struct RunConfig {
  // data
  std::string series;
  std::string locations;
  std::string edges;
  std::string out = "out";
  bool zero_is_missing = true;
  double train_ratio = 0.7;
  double val_ratio = 0.1;
  double test_ratio = 0.2;
  // adjacency
  std::size_t tp = 6;
  std::size_t tq = 0;
  std::size_t event_feature = 0;
  // model
  Variant variant = Variant::full;
  std::size_t heads = 4;
  std::size_t temporal_head_size = 2;
  std::size_t deep_head_size = 24;
  std::size_t enc_width = 8;
  double label_smoothing = kDefaultLabelSmoothing;
  // training
  std::uint64_t seed = 0;
  double lr = 1e-4;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::size_t patience = 20;
  std::size_t batches_per_epoch = 0;
  double clip_norm = 0.0;

  // Throws ConfigError on the first invalid field.
  void validate() const;
  SplitRatios ratios() const { return {train_ratio, val_ratio, test_ratio}; }
  TrainOptions train_options() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Every recognised key, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Sets one key from text; unknown keys and malformed values throw ConfigError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
// Applies a config file on top of `config`.
void load_config_file(RunConfig& config, const std::filesystem::path& file);
void apply_config_text(RunConfig& config, const std::string& text);
// `key = value` lines for every key; re-parsing yields the same config.
std::string to_text(const RunConfig& config);

// ---- pipeline -----------------------------------------------------------------

struct PreparedData {
  SensorGraph graph;
  TrafficSeries series;
  DatasetSplits splits;
  EventLog events;        // detected on the training portion only
  EventAdjacency event;   // up / down
  Matrix connectivity;
  PairwiseEncoding pairwise;
};

PreparedData prepare_data(SensorGraph graph, TrafficSeries series, const RunConfig& config);
PreparedData load_and_prepare(const RunConfig& config);

ModelConfig make_model_config(const RunConfig& config, const PreparedData& data);
ModelBuffers make_model_buffers(const RunConfig& config, const PreparedData& data);

}  // namespace glgat
