#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "glgat/checkpoint.hpp"
#include "glgat/error.hpp"
#include "glgat/model.hpp"
#include "test_support.hpp"

using namespace glgat;
using glgat::testing::expect_gradients_match;
using glgat::testing::random_tensor;
using glgat::testing::TempDir;

namespace {

Matrix random_event_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = i == j ? 1.0 : (u(rng) < 0.4 ? 0.0 : u(rng));
  }
  return m;
}

struct Geometry {
  Matrix up, down, connectivity;
  PairwiseEncoding pairwise;
};

Geometry random_geometry(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  SensorGraph g;
  for (std::size_t i = 0; i < n; ++i) {
    g.ids.push_back("s" + std::to_string(i));
    g.coordinates.push_back({u(rng), u(rng)});
    if (i > 0) g.edges.push_back({i - 1, i});
  }
  return {random_event_matrix(n, rng), random_event_matrix(n, rng), build_connectivity_adjacency(g),
          build_pairwise_encoding(g)};
}

ModelConfig small_config(std::size_t n, Variant variant, std::size_t channels = 3) {
  ModelConfig c;
  c.vertices = n;
  c.input_channels = channels;
  c.heads = 1;
  c.temporal_head_size = 2;
  c.deep_head_size = 2;
  c.enc_width = 2;
  return configure_ablation(c, variant);
}

GlgatModel make_model(const ModelConfig& config, std::uint64_t seed, double mean = 50.0, double std = 10.0) {
  const auto geo = random_geometry(config.vertices, seed + 1000);
  ModelBuffers b;
  b.adjacency = adjacency_for_variant(config.variant, geo.up, geo.down, geo.connectivity);
  b.pairwise = geo.pairwise;
  b.target_mean = mean;
  b.target_std = std;
  return GlgatModel(config, b, seed);
}

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (Variant v : {Variant::full, Variant::ablation1, Variant::ablation2, Variant::ablation3}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("ablation4"), ConfigError);
}

TEST(DeriveSeed, StreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s) {
    for (std::uint64_t k = 0; k < 8; ++k) seen.insert(derive_seed(s, k));
  }
  EXPECT_EQ(seen.size(), 32u);
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(GroupTimesteps, WindowsWithClampedPadding) {
  const std::size_t n = 2;
  std::vector<double> v(12 * n);
  for (std::size_t t = 0; t < 12; ++t) {
    for (std::size_t i = 0; i < n; ++i) v[t * n + i] = 100.0 * t + i;
  }
  const Tensor g = group_timesteps(Tensor::from({1, 12, n, 1}, v));
  ASSERT_EQ(g.shape(), (Shape{1, 12, n, 3}));
  const auto at = [&](std::size_t grp, std::size_t i, std::size_t w) { return g.values()[(grp * n + i) * 3 + w]; };
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(at(0, i, 0), 0.0 + i);
    EXPECT_EQ(at(0, i, 1), 100.0 + i);
    EXPECT_EQ(at(0, i, 2), 200.0 + i);
    EXPECT_EQ(at(10, i, 0), 1000.0 + i);
    EXPECT_EQ(at(10, i, 1), 1100.0 + i);
    EXPECT_EQ(at(10, i, 2), 1100.0 + i);
    for (std::size_t w = 0; w < 3; ++w) EXPECT_EQ(at(11, i, w), 1100.0 + i);
  }
}

TEST(GroupTimesteps, ChannelsStayTogether) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 12, 3, 4}, rng);
  const Tensor g = group_timesteps(x);
  ASSERT_EQ(g.shape(), (Shape{2, 12, 3, 12}));
  // Group 4, vertex 1, second step of the window: step 5, channels 0..3.
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(g.values()[((1 * 12 + 4) * 3 + 1) * 12 + 4 + c], x.values()[((1 * 12 + 5) * 3 + 1) * 4 + c]);
  }
}

TEST(GroupTimesteps, RequiresTwelveSteps) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(group_timesteps(random_tensor({1, 11, 2, 1}, rng)), ConfigError);
  EXPECT_THROW(group_timesteps(random_tensor({12, 2, 1}, rng)), ConfigError);
}

TEST(Model, ShapeTrace) {
  const std::size_t n = 5, b = 2;
  const auto model = make_model(small_config(n, Variant::full), 3);
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({b, 12, n, 3}, rng, -1.0, 1.0, false);
  const Shape expected[] = {{b * 12, n, 9}, {b * 12, n, 16}, {b * 12, n, 16},
                            {b, n, 192},    {b, n, 192},     {b, n, 192}};
  for (std::size_t s = 0; s < GlgatModel::kStages; ++s) EXPECT_EQ(model.stage_input(x, s).shape(), expected[s]) << s;
  EXPECT_EQ(model.forward(x).shape(), (Shape{b, n, 12}));
  EXPECT_THROW(model.forward(random_tensor({b, 12, n, 2}, rng)), ShapeError);
  EXPECT_THROW(model.forward(random_tensor({b, 12, n + 1, 3}, rng)), ShapeError);
  EXPECT_THROW(model.forward(random_tensor({b, 11, n, 3}, rng)), ShapeError);
  EXPECT_THROW(model.stage_input(x, GlgatModel::kStages), ConfigError);
}

TEST(Model, StagedForwardEqualsFullForward) {
  for (Variant v : {Variant::full, Variant::ablation3}) {
    const auto model = make_model(small_config(4, v), 4);
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor({2, 12, 4, 3}, rng, -1.0, 1.0, false);
    const Tensor full = model.forward(x);
    for (std::size_t s = 0; s < GlgatModel::kStages; ++s) {
      EXPECT_TRUE(same_values(model.forward_from(s, model.stage_input(x, s)), full)) << s;
    }
  }
}

TEST(Model, ParameterStages) {
  const auto model = make_model(small_config(3, Variant::full), 5);
  EXPECT_EQ(model.parameter_stage("encoding"), 0u);
  EXPECT_EQ(model.parameter_stage("floor1.w_k"), 0u);
  EXPECT_EQ(model.parameter_stage("floor2.w_k"), 1u);
  EXPECT_EQ(model.parameter_stage("floor4.w_q_local"), 2u);
  EXPECT_EQ(model.parameter_stage("floor6.b_ff"), 4u);
  EXPECT_EQ(model.parameter_stage("head.w"), 5u);
}

TEST(Model, ZeroParametersGiveConstantOutput) {
  const auto model = make_model(small_config(4, Variant::full), 6, 42.0, 3.0);
  for (const auto& p : model.parameters()) {
    Tensor t = p.tensor;
    std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
  }
  std::mt19937_64 rng(4);
  for (int k = 0; k < 3; ++k) {
    const Tensor y = model.forward(random_tensor({2, 12, 4, 3}, rng, -3.0, 3.0, false));
    for (double v : y.values()) EXPECT_EQ(v, 42.0);
  }
  // The head bias alone sets each horizon, scaled back to raw units.
  Tensor head_b = model.parameters().back().tensor;
  for (std::size_t h = 0; h < 12; ++h) head_b.mutable_values()[h] = static_cast<double>(h);
  const Tensor y = model.forward(random_tensor({1, 12, 4, 3}, rng, -3.0, 3.0, false));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t h = 0; h < 12; ++h) EXPECT_EQ(y.values()[i * 12 + h], 42.0 + 3.0 * h);
  }
}

TEST(Model, FloorsShareWeightsAcrossGroups) {
  const auto model = make_model(small_config(4, Variant::full), 7);
  // Identical readings at every step give identical groups, so floors 1-2 must agree across groups.
  std::mt19937_64 rng(5);
  const Tensor step = random_tensor({1, 1, 4, 3}, rng, -1.0, 1.0, false);
  std::vector<double> v;
  for (int t = 0; t < 12; ++t) v.insert(v.end(), step.values().begin(), step.values().end());
  const Tensor after2 = model.stage_input(Tensor::from({1, 12, 4, 3}, v), 2);
  const std::size_t per_group = 4 * 16;
  for (std::size_t g = 1; g < 12; ++g) {
    for (std::size_t k = 0; k < per_group; ++k) {
      EXPECT_NEAR(after2.values()[g * per_group + k], after2.values()[k], 1e-14);
    }
  }
}

TEST(Model, SeedDeterminism) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({1, 12, 4, 3}, rng, -1.0, 1.0, false);
  const auto a = make_model(small_config(4, Variant::full), 11);
  const auto b = make_model(small_config(4, Variant::full), 11);
  const auto c = make_model(small_config(4, Variant::full), 12);
  EXPECT_TRUE(same_values(a.forward(x), b.forward(x)));
  EXPECT_FALSE(same_values(a.forward(x), c.forward(x)));
}

TEST(Model, FloorOneLocalBankGradients) {
  const auto model = make_model(small_config(3, Variant::full), 13);
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({1, 12, 3, 3}, rng, -1.0, 1.0, false);
  const auto& block = std::get<GlgatLayerParams>(model.block(1));
  expect_gradients_match({block.w_q_local, block.b_q_local},
                         [&](const std::vector<Tensor>&) { return model.forward_normalized(x); });
}

TEST(Model, HeadAndEncodingGradients) {
  const auto model = make_model(small_config(3, Variant::ablation3), 14);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({2, 12, 3, 3}, rng, -1.0, 1.0, false);
  const auto params = model.parameters();
  expect_gradients_match({params.front().tensor, params.back().tensor},
                         [&](const std::vector<Tensor>&) { return model.forward_normalized(x); });
}

TEST(Ablation, ConfigurationWidths) {
  ModelConfig base;
  base.vertices = 4;
  const auto full = configure_ablation(base, Variant::full);
  const auto a2 = configure_ablation(base, Variant::ablation2);
  EXPECT_EQ(full.deep_dims().query_width(), 192u + 2 * 10);
  EXPECT_EQ(a2.deep_dims().query_width(), a2.deep_dims().hidden());
  EXPECT_EQ(a2.temporal_dims().query_width(), 16u);
  EXPECT_EQ(configure_ablation(base, Variant::ablation1).pe_width, 10u);
  EXPECT_EQ(configure_ablation(base, Variant::ablation3).pe_width, 0u);
}

TEST(Ablation, ParameterCounts) {
  const auto full = make_model(small_config(4, Variant::full), 15);
  const auto a1 = make_model(small_config(4, Variant::ablation1), 15);
  const auto a2 = make_model(small_config(4, Variant::ablation2), 15);
  const auto a3 = make_model(small_config(4, Variant::ablation3), 15);
  const auto pf = full.parameters(), p1 = a1.parameters();
  ASSERT_EQ(pf.size(), p1.size());
  for (std::size_t k = 0; k < pf.size(); ++k) {
    EXPECT_EQ(pf[k].name, p1[k].name);
    EXPECT_EQ(pf[k].tensor.shape(), p1[k].tensor.shape());
  }
  EXPECT_LT(a2.parameter_count(), full.parameter_count());
  EXPECT_LT(a3.parameter_count(), a2.parameter_count());
  EXPECT_EQ(a3.adjacency_tensor().shape(), (Shape{4, 4}));
  EXPECT_FALSE(a3.pairwise_tensor().defined());
  EXPECT_TRUE(std::holds_alternative<GatLayerParams>(a3.block(4)));
  EXPECT_EQ(std::get<GatLayerParams>(a3.block(4)).hidden, 4u);
  EXPECT_THROW(a3.block(3), ConfigError);
}

TEST(Ablation, FullParameterCountAtPublishedWidths) {
  ModelConfig c;
  c.vertices = 6;
  c.input_channels = 3;
  const auto model = make_model(configure_ablation(c, Variant::full), 16);
  std::size_t expected = 6 * 8 + 12 * 192 + 12;
  expected += glgat_parameter_count(c.temporal_dims(), 6, 9, 8, 16);
  expected += glgat_parameter_count(c.temporal_dims(), 6, 16, 8, 16);
  expected += 3 * glgat_parameter_count(c.deep_dims(), 6, 192, 8, 192);
  EXPECT_EQ(model.parameter_count(), expected);
}

TEST(Ablation, AdjacencySelection) {
  const auto geo = random_geometry(5, 17);
  const auto full = adjacency_for_variant(Variant::full, geo.up, geo.down, geo.connectivity);
  EXPECT_EQ(full.matrices, (std::vector<Matrix>{geo.up, geo.down}));
  const auto a1 = adjacency_for_variant(Variant::ablation1, geo.up, geo.down, geo.connectivity);
  EXPECT_EQ(a1.matrices, (std::vector<Matrix>{geo.connectivity, geo.connectivity}));
  const auto a3 = adjacency_for_variant(Variant::ablation3, geo.up, geo.down, geo.connectivity);
  ASSERT_EQ(a3.count(), 1u);
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(a3.matrices[0].data[i], (geo.up.data[i] > 0 || geo.down.data[i] > 0) ? 1.0 : 0.0);
  }
}

TEST(Model, ConstructionErrors) {
  const auto geo = random_geometry(4, 18);
  ModelBuffers b;
  b.adjacency = adjacency_for_variant(Variant::full, geo.up, geo.down, geo.connectivity);
  b.pairwise = geo.pairwise;
  EXPECT_THROW(GlgatModel(small_config(5, Variant::full), b, 1), ShapeError);
  EXPECT_THROW(GlgatModel(small_config(4, Variant::ablation3), b, 1), ShapeError);
  auto one = b;
  one.adjacency = adjacency_for_variant(Variant::ablation3, geo.up, geo.down, geo.connectivity);
  EXPECT_THROW(GlgatModel(small_config(4, Variant::full), one, 1), ShapeError);
  auto bad_pe = b;
  bad_pe.pairwise = random_geometry(3, 1).pairwise;
  EXPECT_THROW(GlgatModel(small_config(4, Variant::full), bad_pe, 1), ShapeError);
  auto bad_std = b;
  bad_std.target_std = 0.0;
  EXPECT_THROW(GlgatModel(small_config(4, Variant::full), bad_std, 1), ConfigError);
  auto gat_pe = small_config(4, Variant::ablation3);
  gat_pe.pe_width = 10;
  EXPECT_THROW(GlgatModel(gat_pe, one, 1), ConfigError);
}

TEST(Model, ConfigJsonRoundTrip) {
  auto c = small_config(7, Variant::ablation2, 5);
  c.heads = 3;
  const auto back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.variant, Variant::ablation2);
  EXPECT_EQ(back.heads, 3u);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  TempDir dir;
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({2, 12, 4, 3}, rng, -1.0, 1.0, false);
  for (Variant v : {Variant::full, Variant::ablation3}) {
    const auto model = make_model(small_config(4, v), 19, 55.5, 7.25);
    const auto ckpt = model.to_checkpoint({{"note", "x"}});
    write_checkpoint(dir.path() / "m.bin", ckpt);
    const auto loaded = GlgatModel::from_checkpoint(read_checkpoint(dir.path() / "m.bin"));
    EXPECT_TRUE(same_values(loaded.forward(x), model.forward(x)));
    EXPECT_EQ(loaded.config().variant, v);
    EXPECT_EQ(loaded.buffers().target_mean, 55.5);
    EXPECT_EQ(serialize_checkpoint(loaded.to_checkpoint({{"note", "x"}})), serialize_checkpoint(ckpt));
    EXPECT_EQ(read_checkpoint(dir.path() / "m.bin").meta.at("note"), "x");
  }
}

TEST(Checkpoint, SerializationIsDeterministic) {
  const auto a = make_model(small_config(3, Variant::full), 20);
  const auto b = make_model(small_config(3, Variant::full), 20);
  EXPECT_EQ(serialize_checkpoint(a.to_checkpoint()), serialize_checkpoint(b.to_checkpoint()));
}

TEST(Checkpoint, LayoutHeader) {
  Checkpoint c;
  c.tensors.push_back({"t", {2}, {1.5, -2.0}});
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 8), "GLGATCKP");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), kCheckpointVersion);
  std::uint64_t header = 0;
  for (int k = 7; k >= 0; --k) header = (header << 8) | static_cast<unsigned char>(bytes[12 + k]);
  EXPECT_EQ(bytes.size(), 20 + header + 2 * sizeof(double));
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.get("t").values, (std::vector<double>{1.5, -2.0}));
  EXPECT_TRUE(back.contains("t"));
  EXPECT_THROW(back.get("u"), DataError);
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const std::string good = serialize_checkpoint(make_model(small_config(3, Variant::full), 21).to_checkpoint());
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), DataError);
  bad = good;
  bad[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad), DataError);
  EXPECT_THROW(deserialize_checkpoint(good.substr(0, good.size() - 3)), DataError);
  EXPECT_THROW(deserialize_checkpoint(good.substr(0, 15)), DataError);
  EXPECT_THROW(deserialize_checkpoint(good + "x"), DataError);
  EXPECT_THROW(read_checkpoint("/nonexistent/ckpt.bin"), DataError);
}

TEST(Checkpoint, MismatchedTensorsAreRejected) {
  auto ckpt = make_model(small_config(3, Variant::full), 22).to_checkpoint();
  auto missing = ckpt;
  missing.tensors.pop_back();
  EXPECT_THROW(GlgatModel::from_checkpoint(missing), DataError);
  auto reshaped = ckpt;
  for (auto& t : reshaped.tensors) {
    if (t.name == "head.w") t.shape = {t.shape[1], t.shape[0]};
  }
  EXPECT_THROW(GlgatModel::from_checkpoint(reshaped), DataError);
  auto no_meta = ckpt;
  no_meta.meta = nlohmann::json::object();
  EXPECT_THROW(GlgatModel::from_checkpoint(no_meta), DataError);
}
