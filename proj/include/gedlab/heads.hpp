#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gedlab/encoder.hpp"

namespace gedlab {

// Baseline: softmax over a linear map of the last layer only.
struct FinalHeadParams {
  LinearParams output;  // [H×n_classes]

  static FinalHeadParams init(const ModelConfig& config, Rng& rng);
  void visit(const ParamVisitor& visit);
};

// Baseline: average of per-layer affine transforms of h¹…h^L.
struct AvglParams {
  std::vector<LinearParams> layer_transforms;  // L entries, each [H×H]
  LinearParams output;

  static AvglParams init(const ModelConfig& config, Rng& rng);
  void visit(const ParamVisitor& visit);
};

// Projections for one (layer, head) pair of multi-head multi-layer attention.
struct LayerHeadParams {
  LinearParams value;  // [H×H/J]
  LinearParams key;    // [H×d_k]
  LinearParams score;  // [d_k×1]
};

struct MhmlaParams {
  std::vector<std::vector<LayerHeadParams>> slots;  // [layer][head]
  LinearParams output;                              // [H×n_classes]

  static MhmlaParams init(const ModelConfig& config, Rng& rng);
  void visit(const ParamVisitor& visit);
  std::size_t n_layers() const { return slots.size(); }
  std::size_t n_heads() const { return slots.empty() ? 0 : slots.front().size(); }
};

// Normalized layer-attention weights, laid out [token][head][layer].
struct AttentionRecord {
  std::size_t n_tokens = 0;
  std::size_t n_heads = 0;
  std::size_t n_layers = 0;
  std::vector<double> weights;

  double at(std::size_t token, std::size_t head, std::size_t layer) const {
    return weights[(token * n_heads + head) * n_layers + layer];
  }
};

// Test hook: replaces the learned distribution over layers with a fixed one,
// shared by every token and head. Not used by training or evaluation.
struct ForcedLayerWeights {
  std::vector<double> weights;  // length L
};

struct LayerAttention {
  // Per head, [N×L] weights after attention dropout (equal to the record in
  // eval mode).
  std::vector<Var> per_head;
  AttentionRecord record;
};

// k = relu(h·W_k + b_k), score = k·W_a + b_a, then softmax over layers 1..L
// (the embedding output h⁰ is not attended). Dropout is applied to k and,
// without renormalization, to the weights.
LayerAttention layer_attention_weights(Graph& g, const LayerStates& states, MhmlaParams& params,
                                       const ModelConfig& config, const DropoutContext& ctx,
                                       const ForcedLayerWeights* forced = nullptr);

struct HeadOutput {
  Var probs;  // [N×n_classes]
  std::optional<AttentionRecord> attention;
};

// Per head j: head_j = Σ_l ã_l,j · (h^l·W_v[l][j] + b_v[l][j]); the heads are
// concatenated to width H and mapped through softmax(c·W_o + b_o).
HeadOutput mhmla_forward(Graph& g, const LayerStates& states, MhmlaParams& params,
                         const ModelConfig& config, const DropoutContext& ctx,
                         const ForcedLayerWeights* forced = nullptr);

// Pre-softmax representation c for each token, exposed for equivalence checks.
Var mhmla_representation(Graph& g, const LayerStates& states, MhmlaParams& params,
                         const ModelConfig& config, const DropoutContext& ctx,
                         const ForcedLayerWeights* forced = nullptr,
                         AttentionRecord* record = nullptr);

Var final_layer_forward(Graph& g, const LayerStates& states, LinearParams& output);

Var avgl_representation(Graph& g, const LayerStates& states, AvglParams& params);
Var avgl_forward(Graph& g, const LayerStates& states, AvglParams& params);

}  // namespace gedlab
