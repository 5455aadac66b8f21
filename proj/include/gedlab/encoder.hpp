#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gedlab/autograd.hpp"
#include "gedlab/config.hpp"

namespace gedlab {

// Affine map x·W + b with W [in×out] and b [out].
struct LinearParams {
  Tensor weight;
  Tensor bias;

  static LinearParams init(std::size_t in, std::size_t out, Rng& rng);
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(std::size_t width);
};

struct BlockParams {
  LinearParams query, key, value, output;
  LayerNormParams attn_norm;
  LinearParams ffn_in, ffn_out;
  LayerNormParams ffn_norm;
};

using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

struct EncoderParams {
  Tensor token_embedding;     // [vocab×H]
  Tensor position_embedding;  // [max_len×H]
  std::vector<BlockParams> blocks;

  static EncoderParams init(const ModelConfig& config, Rng& rng);
  void visit(const ParamVisitor& visit);
};

// Stack of `batch` sequences, each padded to seq_len rows. Row b*seq_len + t
// holds token t of sequence b; mask is 0 on pad rows.
struct EncoderInput {
  std::vector<std::size_t> token_ids;
  std::vector<std::size_t> positions;
  std::vector<std::uint8_t> mask;
  std::size_t batch = 0;
  std::size_t seq_len = 0;

  static EncoderInput single(std::span<const std::size_t> ids);
  // Pads every sequence with PAD (id 0) up to max(pad_to, longest sequence).
  static EncoderInput padded(const std::vector<std::vector<std::size_t>>& sequences,
                             std::size_t pad_to = 0);
};

// h⁰ … h^L, each [rows×H].
struct LayerStates {
  std::vector<Var> states;

  std::size_t n_layers() const { return states.size() - 1; }
  Var operator[](std::size_t layer) const { return states[layer]; }
};

Var linear(Graph& g, Var x, LinearParams& p);

// Token plus learned position embedding, with dropout at train time.
Var embed_input(Graph& g, EncoderParams& params, const ModelConfig& config,
                const EncoderInput& input, const DropoutContext& ctx);

// Post-norm transformer layer: masked multi-head self-attention, residual,
// layer norm, relu feed-forward, residual, layer norm.
Var transformer_block(Graph& g, Var h_prev, BlockParams& params, const ModelConfig& config,
                      const EncoderInput& input, const DropoutContext& ctx);

LayerStates encode(Graph& g, EncoderParams& params, const ModelConfig& config,
                   const EncoderInput& input, const DropoutContext& ctx);

}  // namespace gedlab
