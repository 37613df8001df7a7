// glgat: synth-data, build-adjacency, train, evaluate, gradcheck.
// Exit codes: 0 ok, 2 usage/config, 3 data, 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "glgat/adjacency.hpp"
#include "glgat/checkpoint.hpp"
#include "glgat/config.hpp"
#include "glgat/error.hpp"
#include "glgat/gradcheck.hpp"
#include "glgat/graph_data.hpp"
#include "glgat/model.hpp"
#include "glgat/training.hpp"

namespace fs = std::filesystem;
using namespace glgat;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

// Every config key as a string flag plus --config; flags win over the file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "flat key = value config file");
    for (const auto& k : config_keys()) {
      app->add_option(flag_name(k.name), values[k.name], k.help);
    }
  }

  void apply_flags(CLI::App* app, RunConfig& cfg) const {
    for (const auto& k : config_keys()) {
      if (app->count(flag_name(k.name)) > 0) apply_setting(cfg, k.name, values.at(k.name));
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg;
    if (!config_file.empty()) load_config_file(cfg, config_file);
    apply_flags(app, cfg);
    cfg.validate();
    return cfg;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

nlohmann::json run_config_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_keys()) {
    if (k.name != "out") j[k.name] = k.get(cfg);
  }
  return j;
}

// ---- synth-data ---------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 15;
  std::size_t t = 2000;
  std::uint64_t seed = 0;
  double missing = 0.0;
  std::string out = "data";
};

int cmd_synth(const SynthArgs& a) {
  if (a.n < 4) throw ConfigError("--n must be >= 4");
  if (!(a.missing >= 0.0 && a.missing < 1.0)) throw ConfigError("--missing must lie in [0, 1)");
  SyntheticOptions opt;
  opt.missing_ratio = a.missing;
  const SyntheticData d = generate_synthetic(a.n, a.t, a.seed, opt);
  const fs::path out(a.out);
  ensure_dir(out);
  write_series_csv(out / "series.csv", d.graph, d.series);
  write_locations_csv(out / "locations.csv", d.graph);
  write_edges_csv(out / "edges.csv", d.graph);
  std::printf("wrote %zu sensors x %zu steps to %s (missing %.4f)\n", a.n, a.t, out.string().c_str(),
              d.series.missing_fraction());
  return 0;
}

// ---- build-adjacency ------------------------------------------------------------

int cmd_build_adjacency(const RunConfig& cfg) {
  const PreparedData d = load_and_prepare(cfg);
  const fs::path out(cfg.out);
  ensure_dir(out);
  write_matrix_csv(out / "adj_event_up.csv", d.event.up);
  write_matrix_csv(out / "adj_event_down.csv", d.event.down);
  write_matrix_csv(out / "adj_connectivity.csv", d.connectivity);
  nlohmann::json j;
  j["labels"] = {"event-up", "event-down", "connectivity"};
  j["files"] = {"adj_event_up.csv", "adj_event_down.csv", "adj_connectivity.csv"};
  j["sensors"] = d.graph.ids;
  j["divider"] = d.events.divider;
  std::vector<std::string> flagged;
  for (std::size_t i = 0; i < d.events.flagged.size(); ++i) {
    if (d.events.flagged[i]) flagged.push_back(d.graph.ids[i]);
  }
  j["flagged_sensors"] = flagged;
  std::vector<std::size_t> ups, downs;
  for (const auto& e : d.events.up) ups.push_back(e.size());
  for (const auto& e : d.events.down) downs.push_back(e.size());
  j["up_event_counts"] = ups;
  j["down_event_counts"] = downs;
  j["parameters"] = {{"tp", cfg.tp},
                     {"tq", cfg.tq},
                     {"event_feature", cfg.event_feature},
                     {"train_steps", d.splits.train_end},
                     {"train_ratio", cfg.train_ratio}};
  write_text(out / "adjacency.json", j.dump(2) + "\n");
  std::printf("wrote 3 adjacency matrices (%zu x %zu) to %s\n", d.graph.size(), d.graph.size(),
              out.string().c_str());
  return 0;
}

// ---- train --------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, bool quiet) {
  const PreparedData d = load_and_prepare(cfg);
  const fs::path out(cfg.out);
  ensure_dir(out);
  write_text(out / "config.txt", to_text(cfg));

  GlgatModel model(make_model_config(cfg, d), make_model_buffers(cfg, d), cfg.seed);
  TrainOptions opt = cfg.train_options();
  opt.verbose = !quiet;
  std::fprintf(stderr, "variant %s, %zu parameters, %zu train / %zu val windows\n",
               to_string(cfg.variant).c_str(), model.parameter_count(), d.splits.train.size(),
               d.splits.val.size());

  const auto save = [&](const TrainResult& r) {
    nlohmann::json meta;
    meta["run_config"] = run_config_json(cfg);
    meta["best_epoch"] = r.best_epoch;
    meta["best_val_mae"] = r.best_val_mae;
    meta["epochs_run"] = r.log.size();
    write_checkpoint(out / "checkpoint.bin", model.to_checkpoint(meta));
    write_training_log(out / "train_log.csv", r.log);
  };

  TrainResult partial;
  try {
    const TrainResult r = train(model, d.splits, opt, [&](const EpochLog& e) { partial.log.push_back(e); });
    save(r);
    std::printf("best epoch %zu, validation MAE %.4f%s\n", r.best_epoch, r.best_val_mae,
                r.early_stopped ? " (early stop)" : "");
  } catch (const NumericalError&) {
    // train() already restored the best parameters seen so far.
    save(partial);
    std::fprintf(stderr, "last finite checkpoint written to %s\n", (out / "checkpoint.bin").string().c_str());
    throw;
  }
  return 0;
}

// ---- evaluate -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string split = "test";
};

int cmd_evaluate(CLI::App* app, const ConfigFlags& flags, const EvalArgs& a) {
  const fs::path ckpt_path = a.checkpoint.empty() ? fs::path(flags.resolve(app).out) / "checkpoint.bin"
                                                  : fs::path(a.checkpoint);
  const Checkpoint ckpt = read_checkpoint(ckpt_path);

  // Split and adjacency parameters come from the training run unless overridden.
  RunConfig cfg;
  if (ckpt.meta.contains("run_config")) {
    for (const auto& [key, value] : ckpt.meta.at("run_config").items()) {
      apply_setting(cfg, key, value.get<std::string>());
    }
  }
  const RunConfig fresh = flags.resolve(app);
  cfg.out = fresh.out;
  if (!flags.config_file.empty()) load_config_file(cfg, flags.config_file);
  flags.apply_flags(app, cfg);
  cfg.validate();

  const GlgatModel model = GlgatModel::from_checkpoint(ckpt);
  const PreparedData d = load_and_prepare(cfg);
  if (model.config().vertices != d.graph.size() ||
      model.config().input_channels != input_channels(d.series.features)) {
    throw DataError("checkpoint was trained on " + std::to_string(model.config().vertices) +
                    " sensors, data has " + std::to_string(d.graph.size()));
  }
  if (a.split != "test" && a.split != "val") throw ConfigError("--split must be test or val");
  const auto& windows = a.split == "test" ? d.splits.test : d.splits.val;
  if (windows.empty()) throw DataError("no " + a.split + " windows");

  const Batch truth = make_batch(windows);
  const auto preds = predict(model, windows);
  EvalReport report = evaluate(preds, truth.target, truth.mask, kHorizon);
  report.label = "GLGAT-" + to_string(model.config().variant);

  const HistoricalAverage ha(d.series.slice(0, d.splits.train_end));
  EvalReport ha_report = evaluate(ha.predict_windows(d.series, windows), truth.target, truth.mask, kHorizon);
  ha_report.label = "HA";

  std::printf("%s split, %zu windows\n%s", a.split.c_str(), windows.size(),
              format_table({ha_report, report}).c_str());
  const fs::path out(cfg.out);
  ensure_dir(out);
  nlohmann::json j;
  j["split"] = a.split;
  j["variant"] = to_string(model.config().variant);
  j["checkpoint"] = ckpt_path.string();
  j["windows"] = windows.size();
  j["model"] = to_json(report);
  j["baseline"] = to_json(ha_report);
  write_text(out / "eval_report.json", j.dump(2) + "\n");
  return 0;
}

// ---- gradcheck ------------------------------------------------------------------

struct GradArgs {
  std::uint64_t seed = 0;
  std::string variant = "full";
  std::size_t max_entries = 200;
};

int cmd_gradcheck(const GradArgs& a) {
  const GradcheckInstance inst = make_gradcheck_instance(a.seed, parse_variant(a.variant));
  GradcheckOptions opt;
  opt.seed = a.seed;
  opt.max_entries = a.max_entries;
  const GradcheckReport report = check_instance(inst, opt);
  std::printf("%s", report.summary().c_str());
  return report.passed() ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global-local graph attention traffic forecasting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic sensor dataset");
  synth_cmd->add_option("--n", synth.n, "number of sensors (>= 4)")->capture_default_str();
  synth_cmd->add_option("--t", synth.t, "number of 5-minute steps (>= 200)")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "random seed")->capture_default_str();
  synth_cmd->add_option("--missing", synth.missing, "fraction of readings dropped")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "output directory")->capture_default_str();

  ConfigFlags adj_flags, train_flags, eval_flags;
  auto* adj_cmd = app.add_subcommand("build-adjacency", "build event and connectivity matrices");
  adj_flags.add_to(adj_cmd);

  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes config.txt, checkpoint.bin, train_log.csv");
  train_flags.add_to(train_cmd);
  train_cmd->add_flag("--quiet", quiet, "no per-epoch progress");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint against the HA baseline");
  eval_flags.add_to(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file (default: <out>/checkpoint.bin)");
  eval_cmd->add_option("--split", eval.split, "test or val")->capture_default_str();

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check on a tiny model");
  grad_cmd->add_option("--seed", grad.seed, "random seed")->capture_default_str();
  grad_cmd->add_option("--variant", grad.variant, "full | ablation1 | ablation2 | ablation3")->capture_default_str();
  grad_cmd->add_option("--max-entries", grad.max_entries, "entries sampled per tensor, 0 = all")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*adj_cmd) return cmd_build_adjacency(adj_flags.resolve(adj_cmd));
    if (*train_cmd) return cmd_train(train_flags.resolve(train_cmd), quiet);
    if (*eval_cmd) return cmd_evaluate(eval_cmd, eval_flags, eval);
    if (*grad_cmd) return cmd_gradcheck(grad);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
