#pragma once

#include <string>
#include <vector>

#include "gedlab/autograd.hpp"
#include "gedlab/gradcheck.hpp"
#include "gedlab/model.hpp"
#include "gedlab/rng.hpp"

namespace gedlab::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

// Sentence with synthetic ids; labels alternate.
inline TokenizedSentence toy_sentence(const std::vector<std::size_t>& ids) {
  TokenizedSentence s;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    s.words.push_back("w" + std::to_string(ids[k]));
    s.labels.push_back(k % 2 ? Label::incorrect : Label::correct);
    s.sub_tokens.push_back(ids[k]);
    s.first_sub_index.push_back(k);
  }
  return s;
}

inline ModelConfig tiny_config(HeadType head = HeadType::mhmla) {
  ModelConfig c;
  c.n_layers = 2;
  c.hidden = 8;
  c.self_attn_heads = 2;
  c.ffn_dim = 16;
  c.layer_attn_heads = 2;
  c.vocab_size = 20;
  c.max_len = 16;
  c.dropout = 0.0;
  c.attn_dropout = 0.0;
  c.head_type = head;
  return c;
}

}  // namespace gedlab::testing
