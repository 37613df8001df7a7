#include <gtest/gtest.h>

#include <set>

#include "glgat/config.hpp"
#include "glgat/error.hpp"
#include "test_support.hpp"

using namespace glgat;
using glgat::testing::TempDir;

TEST(RunConfig, DefaultsValidate) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.tp, 6u);
  EXPECT_EQ(c.tq, 0u);
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.epochs, 200u);
  EXPECT_EQ(c.variant, Variant::full);
}

TEST(RunConfig, ParsesTextWithComments) {
  RunConfig c;
  apply_config_text(c, "# comment\n\n  lr = 0.003  # trailing\nvariant=ablation2\nseed = 42\nzero_is_missing = false\n"
                       "series = data/s.csv\n");
  EXPECT_EQ(c.lr, 0.003);
  EXPECT_EQ(c.variant, Variant::ablation2);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_FALSE(c.zero_is_missing);
  EXPECT_EQ(c.series, "data/s.csv");
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_setting(c, "learning_rate", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "epochs", "-3"), ConfigError);
  EXPECT_THROW(apply_setting(c, "epochs", "12x"), ConfigError);
  EXPECT_THROW(apply_setting(c, "lr", "fast"), ConfigError);
  EXPECT_THROW(apply_setting(c, "zero_is_missing", "maybe"), ConfigError);
  EXPECT_THROW(apply_setting(c, "variant", "ablation9"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "lr 0.1\n"), ConfigError);
  EXPECT_THROW(load_config_file(c, "/nonexistent/run.cfg"), ConfigError);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  c.lr = 0.1 + 0.2;  // not exactly representable as a short decimal
  c.variant = Variant::ablation3;
  c.edges = "e.csv";
  c.tp = 3;
  c.clip_norm = 5.0;
  c.zero_is_missing = false;
  RunConfig back;
  apply_config_text(back, to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.variant, Variant::ablation3);
}

TEST(RunConfig, FileLoading) {
  TempDir dir;
  RunConfig c;
  load_config_file(c, dir.file("run.cfg", "epochs = 7\nbatch_size = 4\n"));
  EXPECT_EQ(c.epochs, 7u);
  EXPECT_EQ(c.batch_size, 4u);
}

TEST(RunConfig, KeysAreUniqueAndDocumented) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
  for (const char* required : {"series", "locations", "edges", "out", "tp", "tq", "variant", "lr", "epochs",
                               "batch_size", "seed", "patience"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
}

TEST(RunConfig, Validation) {
  const auto invalid = [](const std::function<void(RunConfig&)>& edit) {
    RunConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  invalid([](RunConfig& c) { c.train_ratio = 0.8; });
  invalid([](RunConfig& c) { c.val_ratio = 0.0; c.train_ratio = 0.8; });
  invalid([](RunConfig& c) { c.heads = 0; });
  invalid([](RunConfig& c) { c.label_smoothing = 1.0; });
  invalid([](RunConfig& c) { c.lr = -1e-3; });
  invalid([](RunConfig& c) { c.epochs = 0; });
  invalid([](RunConfig& c) { c.batch_size = 0; });
  invalid([](RunConfig& c) { c.clip_norm = -1.0; });
}

TEST(RunConfig, TrainOptionsMirrorFields) {
  RunConfig c;
  c.lr = 0.01;
  c.epochs = 3;
  c.batch_size = 5;
  c.patience = 2;
  c.batches_per_epoch = 9;
  c.seed = 11;
  c.clip_norm = 4.0;
  const auto o = c.train_options();
  EXPECT_EQ(o.adam.lr, 0.01);
  EXPECT_EQ(o.adam.clip_norm, 4.0);
  EXPECT_EQ(o.epochs, 3u);
  EXPECT_EQ(o.batch_size, 5u);
  EXPECT_EQ(o.patience, 2u);
  EXPECT_EQ(o.batches_per_epoch, 9u);
  EXPECT_EQ(o.seed, 11u);
}

TEST(Pipeline, PrepareDataUsesTrainingPortionForEvents) {
  auto syn = generate_synthetic(5, 600, 3);
  RunConfig c;
  const auto d = prepare_data(syn.graph, syn.series, c);
  const auto expected = detect_events(syn.series.slice(0, d.splits.train_end));
  EXPECT_EQ(d.events.up, expected.up);
  EXPECT_EQ(d.events.down, expected.down);
  EXPECT_EQ(d.event.up, build_event_adjacency(expected, 6, 0).up);
  EXPECT_EQ(d.connectivity, build_connectivity_adjacency(syn.graph));
  EXPECT_EQ(d.pairwise.values, build_pairwise_encoding(syn.graph).values);
  const auto mc = make_model_config(c, d);
  EXPECT_EQ(mc.vertices, 5u);
  EXPECT_EQ(mc.input_channels, 3u);
  const auto buffers = make_model_buffers(c, d);
  EXPECT_EQ(buffers.target_mean, d.splits.stats.mean[0]);
  EXPECT_EQ(buffers.target_std, d.splits.stats.std[0]);
  EXPECT_EQ(buffers.adjacency.count(), 2u);
}

TEST(Pipeline, VariantsSelectInputs) {
  auto syn = generate_synthetic(5, 600, 3);
  RunConfig c;
  c.variant = Variant::ablation3;
  const auto d = prepare_data(syn.graph, syn.series, c);
  const auto mc = make_model_config(c, d);
  EXPECT_EQ(mc.pe_width, 0u);
  EXPECT_TRUE(mc.uses_gat());
  EXPECT_EQ(make_model_buffers(c, d).adjacency.count(), 1u);
  c.variant = Variant::ablation1;
  const auto b1 = make_model_buffers(c, prepare_data(syn.graph, syn.series, c));
  EXPECT_EQ(b1.adjacency.matrices[0], build_connectivity_adjacency(syn.graph));
}

TEST(Pipeline, InconsistentInputsThrow) {
  auto syn = generate_synthetic(5, 600, 3);
  RunConfig c;
  auto small = syn.graph;
  small.ids.pop_back();
  small.coordinates.pop_back();
  small.edges.clear();
  EXPECT_THROW(prepare_data(small, syn.series, c), DataError);
  c.event_feature = 1;
  EXPECT_THROW(prepare_data(syn.graph, syn.series, c), DataError);
  RunConfig no_files;
  EXPECT_THROW(load_and_prepare(no_files), ConfigError);
}
