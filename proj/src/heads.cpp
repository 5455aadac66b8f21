#include "gedlab/heads.hpp"

#include <stdexcept>
#include <string>

#include "gedlab/errors.hpp"

namespace gedlab {

namespace {

void visit_linear(const ParamVisitor& visit, const std::string& name, LinearParams& p) {
  visit(name + ".weight", p.weight);
  visit(name + ".bias", p.bias);
}

void check_depth(const LayerStates& states, std::size_t layers, const char* who) {
  if (states.states.size() != layers + 1) {
    throw DimensionError(std::string(who) + ": got " + std::to_string(states.states.size()) +
                         " layer states, expected " + std::to_string(layers + 1));
  }
}

}  // namespace

FinalHeadParams FinalHeadParams::init(const ModelConfig& config, Rng& rng) {
  return {LinearParams::init(config.hidden, config.n_classes, rng)};
}

void FinalHeadParams::visit(const ParamVisitor& visit) { visit_linear(visit, "final.output", output); }

AvglParams AvglParams::init(const ModelConfig& config, Rng& rng) {
  AvglParams p;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    p.layer_transforms.push_back(LinearParams::init(config.hidden, config.hidden, rng));
  }
  p.output = LinearParams::init(config.hidden, config.n_classes, rng);
  return p;
}

void AvglParams::visit(const ParamVisitor& visit) {
  for (std::size_t l = 0; l < layer_transforms.size(); ++l) {
    visit_linear(visit, "avgl.layer" + std::to_string(l + 1), layer_transforms[l]);
  }
  visit_linear(visit, "avgl.output", output);
}

MhmlaParams MhmlaParams::init(const ModelConfig& config, Rng& rng) {
  const std::size_t H = config.hidden;
  const std::size_t dk = config.resolved_key_dim();
  MhmlaParams p;
  p.slots.resize(config.n_layers);
  for (auto& layer : p.slots) {
    for (std::size_t j = 0; j < config.layer_attn_heads; ++j) {
      LayerHeadParams s;
      s.value = LinearParams::init(H, config.head_width(), rng);
      s.key = LinearParams::init(H, dk, rng);
      s.score = LinearParams::init(dk, 1, rng);
      layer.push_back(std::move(s));
    }
  }
  p.output = LinearParams::init(H, config.n_classes, rng);
  return p;
}

void MhmlaParams::visit(const ParamVisitor& visit) {
  for (std::size_t l = 0; l < slots.size(); ++l) {
    for (std::size_t j = 0; j < slots[l].size(); ++j) {
      const std::string prefix =
          "mhmla.layer" + std::to_string(l + 1) + ".head" + std::to_string(j + 1) + ".";
      visit_linear(visit, prefix + "value", slots[l][j].value);
      visit_linear(visit, prefix + "key", slots[l][j].key);
      visit_linear(visit, prefix + "score", slots[l][j].score);
    }
  }
  visit_linear(visit, "mhmla.output", output);
}

LayerAttention layer_attention_weights(Graph& g, const LayerStates& states, MhmlaParams& params,
                                       const ModelConfig& config, const DropoutContext& ctx,
                                       const ForcedLayerWeights* forced) {
  const std::size_t L = params.n_layers();
  const std::size_t J = params.n_heads();
  check_depth(states, L, "layer_attention_weights");
  const std::size_t N = states[1].shape()[0];
  if (forced && forced->weights.size() != L) {
    throw DimensionError("forced layer weights: expected " + std::to_string(L) + " entries");
  }

  LayerAttention out;
  out.record.n_tokens = N;
  out.record.n_heads = J;
  out.record.n_layers = L;
  out.record.weights.assign(N * J * L, 0.0);

  for (std::size_t j = 0; j < J; ++j) {
    Var weights;
    if (forced) {
      Tensor fixed = Tensor::zeros({N, L});
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t l = 0; l < L; ++l) fixed.data[n * L + l] = forced->weights[l];
      }
      weights = g.constant(std::move(fixed));
    } else {
      std::vector<Var> logits;
      logits.reserve(L);
      for (std::size_t l = 0; l < L; ++l) {
        LayerHeadParams& slot = params.slots[l][j];
        Var key = relu(linear(g, states[l + 1], slot.key));
        key = dropout(key, config.dropout, ctx);
        logits.push_back(linear(g, key, slot.score));
      }
      weights = softmax(concat_cols(logits), 1);
    }
    const auto& w = weights.value().data;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t l = 0; l < L; ++l) out.record.weights[(n * J + j) * L + l] = w[n * L + l];
    }
    out.per_head.push_back(dropout(weights, config.attn_dropout, ctx));
  }
  return out;
}

Var mhmla_representation(Graph& g, const LayerStates& states, MhmlaParams& params,
                         const ModelConfig& config, const DropoutContext& ctx,
                         const ForcedLayerWeights* forced, AttentionRecord* record) {
  LayerAttention attention = layer_attention_weights(g, states, params, config, ctx, forced);
  const std::size_t L = params.n_layers();
  std::vector<Var> heads;
  heads.reserve(params.n_heads());
  for (std::size_t j = 0; j < params.n_heads(); ++j) {
    Var head;
    for (std::size_t l = 0; l < L; ++l) {
      Var value = linear(g, states[l + 1], params.slots[l][j].value);
      Var weighted = scale_rows(value, slice_cols(attention.per_head[j], l, 1));
      head = l == 0 ? weighted : add(head, weighted);
    }
    heads.push_back(head);
  }
  if (record) *record = std::move(attention.record);
  return concat_cols(heads);
}

HeadOutput mhmla_forward(Graph& g, const LayerStates& states, MhmlaParams& params,
                         const ModelConfig& config, const DropoutContext& ctx,
                         const ForcedLayerWeights* forced) {
  AttentionRecord record;
  Var c = mhmla_representation(g, states, params, config, ctx, forced, &record);
  return {softmax(linear(g, c, params.output), 1), std::move(record)};
}

Var final_layer_forward(Graph& g, const LayerStates& states, LinearParams& output) {
  if (states.states.empty()) throw DimensionError("final_layer_forward: no layer states");
  return softmax(linear(g, states.states.back(), output), 1);
}

Var avgl_representation(Graph& g, const LayerStates& states, AvglParams& params) {
  const std::size_t L = params.layer_transforms.size();
  check_depth(states, L, "avgl_forward");
  Var total;
  for (std::size_t l = 0; l < L; ++l) {
    Var t = linear(g, states[l + 1], params.layer_transforms[l]);
    total = l == 0 ? t : add(total, t);
  }
  return scale(total, 1.0 / static_cast<double>(L));
}

Var avgl_forward(Graph& g, const LayerStates& states, AvglParams& params) {
  return softmax(linear(g, avgl_representation(g, states, params), params.output), 1);
}

}  // namespace gedlab
