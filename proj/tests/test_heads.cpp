#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "gedlab/errors.hpp"
#include "oracles.hpp"

namespace gedlab {
namespace {

using testing::compose_top_layer_head;
using testing::random_states;
using testing::random_tensor;
using testing::randomize;
using testing::tiny_config;
using testing::toy_sentence;

TEST(LayerAttention, NormalizedAndNonnegative) {
  Rng rng(1);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph g(false);
  LayerStates s = random_states(g, 3, 5, c.hidden, rng);
  const AttentionRecord r = layer_attention_weights(g, s, p, c, {}).record;
  ASSERT_EQ(r.n_tokens, 5u);
  ASSERT_EQ(r.n_heads, 2u);
  ASSERT_EQ(r.n_layers, 3u);
  for (std::size_t n = 0; n < 5; ++n) {
    for (std::size_t j = 0; j < 2; ++j) {
      double total = 0.0;
      for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_GE(r.at(n, j, l), 0.0);
        total += r.at(n, j, l);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(LayerAttention, EqualLogitsGiveUniformWeights) {
  Rng rng(2);
  ModelConfig c = tiny_config();
  c.n_layers = 4;
  MhmlaParams p = MhmlaParams::init(c, rng);
  for (auto& layer : p.slots) {
    for (auto& slot : layer) {
      std::fill(slot.score.weight.data.begin(), slot.score.weight.data.end(), 0.0);
      slot.score.bias.data[0] = 0.7;
    }
  }
  Graph g(false);
  LayerStates s = random_states(g, 4, 3, c.hidden, rng);
  for (double w : layer_attention_weights(g, s, p, c, {}).record.weights) EXPECT_NEAR(w, 0.25, 1e-15);
}

TEST(LayerAttention, SingleLayerWeightIsOne) {
  Rng rng(3);
  ModelConfig c = tiny_config();
  c.n_layers = 1;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph g(false);
  LayerStates s = random_states(g, 1, 4, c.hidden, rng);
  for (double w : layer_attention_weights(g, s, p, c, {}).record.weights) EXPECT_EQ(w, 1.0);
}

TEST(LayerAttention, RaisingOneLogitRaisesItsWeight) {
  Rng rng(4);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph g(false);
  LayerStates s = random_states(g, 3, 4, c.hidden, rng);
  const AttentionRecord before = layer_attention_weights(g, s, p, c, {}).record;
  p.slots[1][0].score.bias.data[0] += 0.3;
  const AttentionRecord after = layer_attention_weights(g, s, p, c, {}).record;
  for (std::size_t n = 0; n < 4; ++n) {
    EXPECT_GT(after.at(n, 0, 1), before.at(n, 0, 1));
    EXPECT_LT(after.at(n, 0, 0), before.at(n, 0, 0));
    EXPECT_EQ(after.at(n, 1, 1), before.at(n, 1, 1));
  }
}

TEST(LayerAttention, EmbeddingLayerIsNotAttended) {
  Rng rng(5);
  ModelConfig c = tiny_config();
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph g(false);
  LayerStates s = random_states(g, 2, 3, c.hidden, rng);
  const Tensor before = mhmla_forward(g, s, p, c, {}).probs.value();
  s.states[0] = g.constant(random_tensor({3, c.hidden}, rng));
  EXPECT_EQ(mhmla_forward(g, s, p, c, {}).probs.value().data, before.data);
}

TEST(Mhmla, OutputShapeAndNormalization) {
  Rng rng(6);
  ModelConfig c = tiny_config();
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph g(false);
  LayerStates s = random_states(g, 2, 5, c.hidden, rng);
  const Tensor& probs = mhmla_forward(g, s, p, c, {}).probs.value();
  ASSERT_EQ(probs.shape, (Shape{5, 2}));
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(probs.at(r, 0) + probs.at(r, 1), 1.0, 1e-9);
}

TEST(Mhmla, RepresentationWidthIsHiddenForAnyHeadCount) {
  Rng rng(7);
  for (std::size_t heads : {1u, 2u, 4u, 8u}) {
    ModelConfig c = tiny_config();
    c.layer_attn_heads = heads;
    MhmlaParams p = MhmlaParams::init(c, rng);
    Graph g(false);
    LayerStates s = random_states(g, 2, 3, c.hidden, rng);
    EXPECT_EQ(mhmla_representation(g, s, p, c, {}).shape(), (Shape{3, c.hidden})) << heads;
  }
}

// Identical layers and tied parameters: every layer offers the same value, so
// the score logits cannot change the result.
TEST(Mhmla, TiedIdenticalLayersIgnoreScores) {
  Rng rng(8);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  for (std::size_t l = 1; l < 3; ++l) {
    for (std::size_t j = 0; j < 2; ++j) {
      p.slots[l][j].value = p.slots[0][j].value;
      p.slots[l][j].key = p.slots[0][j].key;
      p.slots[l][j].score = p.slots[0][j].score;
    }
  }
  Graph g(false);
  Tensor h = random_tensor({4, c.hidden}, rng);
  LayerStates s;
  for (std::size_t l = 0; l <= 3; ++l) s.states.push_back(g.constant(h));
  const Tensor base = mhmla_forward(g, s, p, c, {}).probs.value();
  for (auto& layer : p.slots) {
    for (auto& slot : layer) {
      for (double& v : slot.score.weight.data) v = rng.normal(0.0, 3.0);
    }
  }
  const Tensor& moved = mhmla_forward(g, s, p, c, {}).probs.value();
  for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_NEAR(moved.data[i], base.data[i], 1e-12);
}

TEST(Mhmla, HeadsStayInsideConvexHullOfValues) {
  Rng rng(9);
  ModelConfig c = tiny_config();
  c.n_layers = 4;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph g(false);
  LayerStates s = random_states(g, 4, 6, c.hidden, rng);
  const Tensor& rep = mhmla_representation(g, s, p, c, {}).value();
  const std::size_t width = c.head_width();
  for (std::size_t j = 0; j < 2; ++j) {
    std::vector<Tensor> values;
    for (std::size_t l = 1; l <= 4; ++l) values.push_back(linear(g, s[l], p.slots[l - 1][j].value).value());
    for (std::size_t n = 0; n < 6; ++n) {
      for (std::size_t d = 0; d < width; ++d) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& v : values) lo = std::min(lo, v.at(n, d)), hi = std::max(hi, v.at(n, d));
        const double x = rep.at(n, j * width + d);
        EXPECT_GE(x, lo - 1e-12);
        EXPECT_LE(x, hi + 1e-12);
      }
    }
  }
}

// One-hot attention on the top layer collapses the head into a single affine
// map of h^L; build that map by hand and compare.
TEST(Mhmla, OneHotTopLayerMatchesComposedFinalHead) {
  Rng rng(10);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  c.layer_attn_heads = 4;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  const std::size_t H = c.hidden;

  LinearParams composed = compose_top_layer_head(p, c);
  Graph g(false);
  LayerStates s = random_states(g, 3, 5, H, rng);
  const ForcedLayerWeights forced{{0.0, 0.0, 1.0}};
  const Tensor& got = mhmla_forward(g, s, p, c, {}, &forced).probs.value();
  const Tensor& want = final_layer_forward(g, s, composed).value();
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-10);
}

TEST(Mhmla, UniformSingleHeadMatchesAvgl) {
  Rng rng(11);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  c.layer_attn_heads = 1;
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  AvglParams a = AvglParams::init(c, rng);
  for (std::size_t l = 0; l < 3; ++l) a.layer_transforms[l] = p.slots[l][0].value;
  a.output = p.output;

  Graph g(false);
  LayerStates s = random_states(g, 3, 4, c.hidden, rng);
  const ForcedLayerWeights uniform{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
  const Tensor& m = mhmla_representation(g, s, p, c, {}, &uniform).value();
  const Tensor& v = avgl_representation(g, s, a).value();
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_NEAR(m.data[i], v.data[i], 1e-12);
}

TEST(FinalHead, UsesOnlyTopLayer) {
  Rng rng(12);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  FinalHeadParams p = FinalHeadParams::init(c, rng);
  Graph g(false);
  LayerStates s = random_states(g, 3, 4, c.hidden, rng);
  const Tensor before = final_layer_forward(g, s, p.output).value();
  s.states[1] = g.constant(random_tensor({4, c.hidden}, rng));
  s.states[2] = g.constant(random_tensor({4, c.hidden}, rng));
  const Tensor& after = final_layer_forward(g, s, p.output).value();
  EXPECT_EQ(after.data, before.data);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(after.at(r, 0) + after.at(r, 1), 1.0, 1e-9);
}

TEST(FinalHead, ZeroWeightsGiveUniformRows) {
  Rng rng(13);
  ModelConfig c = tiny_config();
  LinearParams zero{Tensor::zeros({c.hidden, 2}), Tensor::zeros({2})};
  Graph g(false);
  LayerStates s = random_states(g, 2, 3, c.hidden, rng);
  for (double v : final_layer_forward(g, s, zero).value().data) EXPECT_EQ(v, 0.5);
}

TEST(Avgl, IdentityTransformsAverageLayers) {
  Rng rng(14);
  ModelConfig c = tiny_config();
  c.n_layers = 3;
  AvglParams a = AvglParams::init(c, rng);
  for (auto& t : a.layer_transforms) {
    t.weight = Tensor::zeros({c.hidden, c.hidden});
    for (std::size_t i = 0; i < c.hidden; ++i) t.weight.data[i * c.hidden + i] = 1.0;
  }
  Graph g(false);
  LayerStates s = random_states(g, 3, 2, c.hidden, rng);
  const Tensor& rep = avgl_representation(g, s, a).value();
  for (std::size_t i = 0; i < rep.numel(); ++i) {
    const double mean = (s[1].value().data[i] + s[2].value().data[i] + s[3].value().data[i]) / 3.0;
    EXPECT_NEAR(rep.data[i], mean, 1e-15);
  }
}

TEST(Avgl, SingleLayerIsFinalHeadWithExtraMap) {
  Rng rng(15);
  ModelConfig c = tiny_config();
  c.n_layers = 1;
  AvglParams a = AvglParams::init(c, rng);
  Graph g(false);
  LayerStates s = random_states(g, 1, 3, c.hidden, rng);
  const Tensor& via_avgl = avgl_forward(g, s, a).value();
  LayerStates mapped{{s[0], linear(g, s[1], a.layer_transforms[0])}};
  const Tensor& via_final = final_layer_forward(g, mapped, a.output).value();
  for (std::size_t i = 0; i < via_avgl.numel(); ++i) EXPECT_NEAR(via_avgl.data[i], via_final.data[i], 1e-15);
}

TEST(Mhmla, HeadParametersPassGradCheck) {
  Rng rng(16);
  ModelConfig c = tiny_config();
  MhmlaParams p = MhmlaParams::init(c, rng);
  randomize(p, rng);
  Graph states_graph(false);
  std::vector<Tensor> layers;
  for (std::size_t l = 0; l <= 2; ++l) layers.push_back(random_tensor({4, c.hidden}, rng));
  std::vector<std::size_t> targets{0, 1, 1, 0};
  std::vector<NamedParam> params;
  p.visit([&](const std::string& name, Tensor& t) { params.push_back({name, &t}); });
  for (std::size_t l = 0; l <= 2; ++l) params.push_back({"h" + std::to_string(l), &layers[l]});
  auto loss = [&](Graph& g) {
    LayerStates s;
    for (auto& t : layers) s.states.push_back(g.parameter(t));
    return cross_entropy(mhmla_forward(g, s, p, c, {}).probs, targets);
  };
  auto report = finite_diff_check(loss, params, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error << " in " << report.worst_param;
}

class FullModelGrad : public ::testing::TestWithParam<HeadType> {};

TEST_P(FullModelGrad, MatchesFiniteDifferences) {
  ModelConfig c = tiny_config(GetParam());
  Model model(c, 21);
  Rng rng(22);
  // At the N(0, 0.02) init scale the attention gradients sit near 1e-9, where
  // central differences are mostly roundoff. Wider matrices keep them
  // measurable; biases and norm gains keep their init values.
  for (auto& p : model.parameters()) {
    if (p.tensor->shape.size() != 2) continue;
    for (double& v : p.tensor->data) v = rng.normal(0.0, 0.3);
  }
  const TokenizedSentence a = toy_sentence({4, 7, 9, 12, 5});
  const TokenizedSentence b = toy_sentence({8, 19, 6});
  const std::vector<const TokenizedSentence*> members{&a, &b};
  const Batch batch = make_batch(members);
  auto loss = [&](Graph& g) { return cross_entropy(model.forward(g, batch, {}).probs, batch.targets); };
  auto report = finite_diff_check(loss, model.parameters(), 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error << " in " << report.worst_param << "["
                             << report.worst_index << "] analytic " << report.worst_analytic << " numeric " << report.worst_numeric;
  EXPECT_EQ(report.entries_checked, model.parameter_count());
}

INSTANTIATE_TEST_SUITE_P(Heads, FullModelGrad,
                         ::testing::Values(HeadType::mhmla, HeadType::avgl, HeadType::final_layer),
                         [](const auto& info) { return std::string(head_type_name(info.param)); });

TEST(Model, ParameterCountDependsOnlyOnConfig) {
  ModelConfig c = tiny_config();
  EXPECT_EQ(Model(c, 1).parameter_count(), Model(c, 2).parameter_count());
  const std::size_t H = 8, L = 2, J = 2, V = 20, M = 16, F = 16, dk = 4, w = 4;
  const std::size_t encoder = V * H + M * H + L * (4 * (H * H + H) + 2 * 2 * H + H * F + F + F * H + H);
  const std::size_t head = L * J * (H * w + w + H * dk + dk + dk + 1) + H * 2 + 2;
  EXPECT_EQ(Model(c, 1).parameter_count(), encoder + head);
}

TEST(Model, ConfigValidation) {
  ModelConfig c = tiny_config();
  c.layer_attn_heads = 3;
  EXPECT_THROW(Model{c}, ConfigError);
  c = tiny_config();
  c.self_attn_heads = 3;
  EXPECT_THROW(Model{c}, ConfigError);
  c = tiny_config();
  c.vocab_size = 3;
  EXPECT_THROW(Model{c}, ConfigError);
  c = tiny_config();
  c.n_layers = 0;
  EXPECT_THROW(Model{c}, ConfigError);
}

}  // namespace
}  // namespace gedlab
