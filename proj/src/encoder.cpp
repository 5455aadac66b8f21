#include "gedlab/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "gedlab/errors.hpp"

namespace gedlab {

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data) v = rng.normal(0.0, kInitStd);
  return t;
}

}  // namespace

LinearParams LinearParams::init(std::size_t in, std::size_t out, Rng& rng) {
  return {normal_tensor({in, out}, rng), Tensor::zeros({out}, true)};
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {Tensor::filled({width}, 1.0, true), Tensor::zeros({width}, true)};
}

EncoderParams EncoderParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t H = config.hidden;
  EncoderParams p;
  p.token_embedding = normal_tensor({config.vocab_size, H}, rng);
  p.position_embedding = normal_tensor({config.max_len, H}, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    BlockParams b;
    b.query = LinearParams::init(H, H, rng);
    b.key = LinearParams::init(H, H, rng);
    b.value = LinearParams::init(H, H, rng);
    b.output = LinearParams::init(H, H, rng);
    b.attn_norm = LayerNormParams::init(H);
    b.ffn_in = LinearParams::init(H, config.ffn_dim, rng);
    b.ffn_out = LinearParams::init(config.ffn_dim, H, rng);
    b.ffn_norm = LayerNormParams::init(H);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

void EncoderParams::visit(const ParamVisitor& visit) {
  visit("encoder.token_embedding", token_embedding);
  visit("encoder.position_embedding", position_embedding);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string prefix = "encoder.layer" + std::to_string(l + 1) + ".";
    BlockParams& b = blocks[l];
    auto lin = [&](const std::string& name, LinearParams& p) {
      visit(prefix + name + ".weight", p.weight);
      visit(prefix + name + ".bias", p.bias);
    };
    auto norm = [&](const std::string& name, LayerNormParams& p) {
      visit(prefix + name + ".gain", p.gain);
      visit(prefix + name + ".bias", p.bias);
    };
    lin("attn.query", b.query);
    lin("attn.key", b.key);
    lin("attn.value", b.value);
    lin("attn.output", b.output);
    norm("attn_norm", b.attn_norm);
    lin("ffn.in", b.ffn_in);
    lin("ffn.out", b.ffn_out);
    norm("ffn_norm", b.ffn_norm);
  }
}

EncoderInput EncoderInput::single(std::span<const std::size_t> ids) {
  return padded({std::vector<std::size_t>(ids.begin(), ids.end())});
}

EncoderInput EncoderInput::padded(const std::vector<std::vector<std::size_t>>& sequences,
                                  std::size_t pad_to) {
  EncoderInput in;
  in.batch = sequences.size();
  in.seq_len = pad_to;
  for (const auto& s : sequences) {
    if (s.empty()) throw std::invalid_argument("EncoderInput: empty sequence");
    in.seq_len = std::max(in.seq_len, s.size());
  }
  const std::size_t rows = in.batch * in.seq_len;
  in.token_ids.assign(rows, 0);
  in.positions.resize(rows);
  in.mask.assign(rows, 0);
  for (std::size_t b = 0; b < in.batch; ++b) {
    for (std::size_t t = 0; t < in.seq_len; ++t) {
      const std::size_t row = b * in.seq_len + t;
      in.positions[row] = t;
      if (t < sequences[b].size()) {
        in.token_ids[row] = sequences[b][t];
        in.mask[row] = 1;
      }
    }
  }
  return in;
}

Var linear(Graph& g, Var x, LinearParams& p) {
  return add_bias(matmul(x, g.parameter(p.weight)), g.parameter(p.bias));
}

Var embed_input(Graph& g, EncoderParams& params, const ModelConfig& config,
                const EncoderInput& input, const DropoutContext& ctx) {
  if (input.seq_len > config.max_len) {
    throw std::length_error("embed_input: sequence of " + std::to_string(input.seq_len) +
                            " tokens exceeds max_len " + std::to_string(config.max_len));
  }
  for (std::size_t id : input.token_ids) {
    if (id >= config.vocab_size) {
      throw std::out_of_range("embed_input: token id " + std::to_string(id) +
                              " >= vocab_size " + std::to_string(config.vocab_size));
    }
  }
  Var tokens = embedding(g.parameter(params.token_embedding), input.token_ids);
  Var positions = embedding(g.parameter(params.position_embedding), input.positions);
  return dropout(add(tokens, positions), config.dropout, ctx);
}

Var transformer_block(Graph& g, Var h_prev, BlockParams& p, const ModelConfig& config,
                      const EncoderInput& input, const DropoutContext& ctx) {
  const SelfAttentionShape shape{input.batch, input.seq_len, config.self_attn_heads};
  Var q = linear(g, h_prev, p.query);
  // A key bias adds the same q·b to every score of a query and cancels in the
  // softmax, so it is kept in the parameter set but left out of the scores.
  Var k = matmul(h_prev, g.parameter(p.key.weight));
  Var v = linear(g, h_prev, p.value);
  Var attended = masked_self_attention(q, k, v, shape, input.mask, config.attn_dropout, ctx);
  Var attn_out = dropout(linear(g, attended, p.output), config.dropout, ctx);
  Var h_mid = layer_norm(add(h_prev, attn_out), g.parameter(p.attn_norm.gain),
                         g.parameter(p.attn_norm.bias));
  Var ff = linear(g, relu(linear(g, h_mid, p.ffn_in)), p.ffn_out);
  ff = dropout(ff, config.dropout, ctx);
  return layer_norm(add(h_mid, ff), g.parameter(p.ffn_norm.gain), g.parameter(p.ffn_norm.bias));
}

LayerStates encode(Graph& g, EncoderParams& params, const ModelConfig& config,
                   const EncoderInput& input, const DropoutContext& ctx) {
  if (params.blocks.size() != config.n_layers) {
    throw DimensionError("encode: parameters hold " + std::to_string(params.blocks.size()) +
                         " layers, config expects " + std::to_string(config.n_layers));
  }
  LayerStates out;
  out.states.reserve(config.n_layers + 1);
  out.states.push_back(embed_input(g, params, config, input, ctx));
  for (BlockParams& block : params.blocks) {
    out.states.push_back(transformer_block(g, out.states.back(), block, config, input, ctx));
  }
  return out;
}

}  // namespace gedlab
