#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "test_helpers.hpp"

namespace gedlab::testing {

inline LayerStates random_states(Graph& g, std::size_t layers, std::size_t rows, std::size_t width,
                          Rng& rng) {
  LayerStates s;
  for (std::size_t l = 0; l <= layers; ++l) s.states.push_back(g.constant(random_tensor({rows, width}, rng)));
  return s;
}

inline void randomize(MhmlaParams& p, Rng& rng, double stddev = 0.5) {
  p.visit([&](const std::string&, Tensor& t) {
    for (double& v : t.data) v = rng.normal(0.0, stddev);
  });
}

// One-hot attention on the top layer collapses the mhmla head into a single
// affine map of h^L: the block-diagonal concat of the top-layer value maps,
// followed by the output layer.
inline LinearParams compose_top_layer_head(const MhmlaParams& p, const ModelConfig& c) {
  const std::size_t H = c.hidden, width = c.head_width(), C = c.n_classes;
  const std::size_t top = c.n_layers - 1;
  LinearParams composed{Tensor::zeros({H, C}), Tensor::zeros({C})};
  const Tensor& wo = p.output.weight;
  for (std::size_t j = 0; j < c.layer_attn_heads; ++j) {
    const LinearParams& v = p.slots[top][j].value;
    for (std::size_t d = 0; d < width; ++d) {
      for (std::size_t k = 0; k < C; ++k) {
        const double w_out = wo.at(j * width + d, k);
        for (std::size_t i = 0; i < H; ++i) composed.weight.data[i * C + k] += v.weight.at(i, d) * w_out;
        composed.bias.data[k] += v.bias.data[d] * w_out;
      }
    }
  }
  for (std::size_t k = 0; k < C; ++k) composed.bias.data[k] += p.output.bias.data[k];
  return composed;
}

// Exhaustive oracle: enumerate every edit script turning source into
// corrected, keep the cheapest, read each one from the end of the sentences
// and take the lexicographically smallest under M < S < D < I.
struct EditScript {
  std::size_t cost = 0;
  std::string ops;  // last operation first
};

inline void enumerate_scripts(const std::vector<std::string>& s, const std::vector<std::string>& r, std::size_t i,
               std::size_t j, EditScript current, std::vector<EditScript>& out) {
  if (i == 0 && j == 0) {
    out.push_back(current);
    return;
  }
  if (i > 0 && j > 0) {
    EditScript next = current;
    const bool same = s[i - 1] == r[j - 1];
    next.ops.push_back(same ? 'M' : 'S');
    next.cost += same ? 0 : 1;
    enumerate_scripts(s, r, i - 1, j - 1, next, out);
  }
  if (i > 0) {
    EditScript next = current;
    next.ops.push_back('D');
    next.cost += 1;
    enumerate_scripts(s, r, i - 1, j, next, out);
  }
  if (j > 0) {
    EditScript next = current;
    next.ops.push_back('I');
    next.cost += 1;
    enumerate_scripts(s, r, i, j - 1, next, out);
  }
}

inline std::pair<std::size_t, Labels> edit_script_oracle(const SentencePair& pair) {
  std::vector<EditScript> scripts;
  enumerate_scripts(pair.source, pair.corrected, pair.source.size(), pair.corrected.size(), {}, scripts);
  std::size_t best_cost = SIZE_MAX;
  for (const auto& sc : scripts) best_cost = std::min(best_cost, sc.cost);
  auto rank = [](char op) { return std::string("MSDI").find(op); };
  const EditScript* best = nullptr;
  for (const auto& sc : scripts) {
    if (sc.cost != best_cost) continue;
    if (!best || std::lexicographical_compare(sc.ops.begin(), sc.ops.end(), best->ops.begin(),
                                              best->ops.end(), [&](char a, char b) {
                                                return rank(a) < rank(b);
                                              })) {
      best = &sc;
    }
  }
  // Replay forwards to turn the script into labels.
  Labels out(pair.source.size(), Label::correct);
  std::size_t i = 0;
  for (auto it = best->ops.rbegin(); it != best->ops.rend(); ++it) {
    switch (*it) {
      case 'M': ++i; break;
      case 'S':
      case 'D': out[i++] = Label::incorrect; break;
      case 'I': out[std::min(i, out.size() - 1)] = Label::incorrect; break;
    }
  }
  return {best_cost, out};
}

}  // namespace gedlab::testing
