#include "glgat/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "glgat/error.hpp"

namespace glgat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty() || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string real_text(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
ConfigKey size_key(std::string name, std::string help, T RunConfig::*field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) { c.*field = static_cast<T>(parse_uint(name, v)); },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey real_key(std::string name, std::string help, double RunConfig::*field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) { c.*field = parse_real(name, v); },
          [field](const RunConfig& c) { return real_text(c.*field); }};
}

ConfigKey text_key(std::string name, std::string help, std::string RunConfig::*field) {
  return {name, std::move(help), [field](RunConfig& c, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(text_key("series", "series CSV: timestamp column, then one column per sensor id",
                         &RunConfig::series));
    k.push_back(text_key("locations", "locations CSV: sensor_id,x,y", &RunConfig::locations));
    k.push_back(text_key("edges", "optional edges CSV: from_id,to_id (default: none)", &RunConfig::edges));
    k.push_back(text_key("out", "output directory (default: out)", &RunConfig::out));
    k.push_back({"zero_is_missing", "treat exact zero readings as missing (default: true)",
                 [](RunConfig& c, const std::string& v) { c.zero_is_missing = parse_bool("zero_is_missing", v); },
                 [](const RunConfig& c) { return std::string(c.zero_is_missing ? "true" : "false"); }});
    k.push_back(real_key("train_ratio", "chronological training fraction (default: 0.7)", &RunConfig::train_ratio));
    k.push_back(real_key("val_ratio", "validation fraction (default: 0.1)", &RunConfig::val_ratio));
    k.push_back(real_key("test_ratio", "test fraction (default: 0.2)", &RunConfig::test_ratio));
    k.push_back(size_key("tp", "event window look-back in steps (default: 6)", &RunConfig::tp));
    k.push_back(size_key("tq", "event window look-ahead in steps (default: 0)", &RunConfig::tq));
    k.push_back(size_key("event_feature", "feature index used for event detection (default: 0)",
                         &RunConfig::event_feature));
    k.push_back({"variant", "full | ablation1 | ablation2 | ablation3 (default: full)",
                 [](RunConfig& c, const std::string& v) { c.variant = parse_variant(v); },
                 [](const RunConfig& c) { return to_string(c.variant); }});
    k.push_back(size_key("heads", "attention heads per adjacency matrix (default: 4)", &RunConfig::heads));
    k.push_back(size_key("temporal_head_size", "head width on floors 1-2 (default: 2)",
                         &RunConfig::temporal_head_size));
    k.push_back(size_key("deep_head_size", "head width on floors 4-6 (default: 24)", &RunConfig::deep_head_size));
    k.push_back(size_key("enc_width", "learnable vertex encoding width (default: 8)", &RunConfig::enc_width));
    k.push_back(real_key("label_smoothing", "direction label smoothing (default: 0.1)",
                         &RunConfig::label_smoothing));
    k.push_back(size_key("seed", "random seed (default: 0)", &RunConfig::seed));
    k.push_back(real_key("lr", "Adam learning rate (default: 1e-4)", &RunConfig::lr));
    k.push_back(size_key("epochs", "maximum epochs (default: 200)", &RunConfig::epochs));
    k.push_back(size_key("batch_size", "mini-batch size (default: 16)", &RunConfig::batch_size));
    k.push_back(size_key("patience", "early-stopping patience in epochs, 0 disables (default: 20)",
                         &RunConfig::patience));
    k.push_back(size_key("batches_per_epoch", "cap on batches per epoch, 0 = full pass (default: 0)",
                         &RunConfig::batches_per_epoch));
    k.push_back(real_key("clip_norm", "global gradient-norm clip, 0 disables (default: 0)",
                         &RunConfig::clip_norm));
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void load_config_file(RunConfig& config, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

void RunConfig::validate() const {
  for (double r : {train_ratio, val_ratio, test_ratio}) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("split ratios must lie in (0, 1)");
  }
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (heads == 0 || temporal_head_size == 0 || deep_head_size == 0 || enc_width == 0) {
    throw ConfigError("heads, head sizes and enc_width must be >= 1");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.adam.lr = lr;
  o.adam.clip_norm = clip_norm;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.patience = patience;
  o.batches_per_epoch = batches_per_epoch;
  o.seed = seed;
  return o;
}

// ---- pipeline -------------------------------------------------------------------

PreparedData prepare_data(SensorGraph graph, TrafficSeries series, const RunConfig& config) {
  config.validate();
  graph.validate();
  series.validate();
  if (graph.size() != series.sensors) throw DataError("graph and series disagree on sensor count");
  if (config.event_feature >= series.features) throw DataError("event_feature out of range");
  PreparedData d;
  d.splits = split_and_window(series, kInputSteps, kHorizon, config.ratios());
  d.events = detect_events(series.slice(0, d.splits.train_end), config.event_feature);
  d.event = build_event_adjacency(d.events, config.tp, config.tq);
  d.connectivity = build_connectivity_adjacency(graph);
  if (config.variant == Variant::full || config.variant == Variant::ablation1) {
    d.pairwise = build_pairwise_encoding(graph, config.label_smoothing);
  }
  d.graph = std::move(graph);
  d.series = std::move(series);
  return d;
}

PreparedData load_and_prepare(const RunConfig& config) {
  if (config.series.empty() || config.locations.empty()) {
    throw ConfigError("series and locations files are required");
  }
  LoadOptions opt;
  opt.zero_is_missing = config.zero_is_missing;
  std::optional<std::filesystem::path> edges;
  if (!config.edges.empty()) edges = config.edges;
  LoadedData loaded = load_series(config.series, config.locations, edges, opt);
  return prepare_data(std::move(loaded.graph), std::move(loaded.series), config);
}

ModelConfig make_model_config(const RunConfig& config, const PreparedData& data) {
  ModelConfig m;
  m.vertices = data.graph.size();
  m.input_channels = input_channels(data.series.features);
  m.heads = config.heads;
  m.temporal_head_size = config.temporal_head_size;
  m.deep_head_size = config.deep_head_size;
  m.enc_width = config.enc_width;
  return configure_ablation(m, config.variant);
}

ModelBuffers make_model_buffers(const RunConfig& config, const PreparedData& data) {
  ModelBuffers b;
  b.adjacency = adjacency_for_variant(config.variant, data.event.up, data.event.down, data.connectivity);
  b.pairwise = data.pairwise;
  b.target_mean = data.splits.stats.mean.at(0);
  b.target_std = data.splits.stats.std.at(0);
  return b;
}

}  // namespace glgat
