#include "gedlab/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gedlab/errors.hpp"

namespace gedlab {

Var select_first_subtoken_states(Var states, std::span<const std::size_t> first_sub_index) {
  const std::size_t rows = states.shape().at(0);
  for (std::size_t w = 0; w < first_sub_index.size(); ++w) {
    if (first_sub_index[w] >= rows) {
      throw std::out_of_range("select_first_subtoken_states: index " +
                              std::to_string(first_sub_index[w]) + " out of " +
                              std::to_string(rows) + " rows");
    }
    if (w > 0 && first_sub_index[w] <= first_sub_index[w - 1]) {
      throw std::invalid_argument("select_first_subtoken_states: indices not strictly increasing");
    }
  }
  return gather_rows(states, first_sub_index);
}

void adam_step(const std::vector<NamedParam>& params, AdamState& state, std::size_t t,
               const TrainConfig& config) {
  if (t < 1) throw std::invalid_argument("adam_step: step must be >= 1");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor->numel(), 0.0);
      state.second_moment.emplace_back(p.tensor->numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks a different parameter list");
  }
  for (const auto& p : params) {
    const Tensor& t_ = *p.tensor;
    if (t_.grad.empty()) continue;
    for (double g : t_.grad) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + p.name);
    }
  }
  const double b1 = config.beta1, b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = *params[k].tensor;
    if (w.grad.empty()) continue;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != w.numel()) {
      throw DimensionError("adam_step: state shape mismatch for " + params[k].name);
    }
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double g = w.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w.data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

Var batch_loss(Graph& g, Model& model, const Batch& batch, const DropoutContext& ctx) {
  ModelOutput out = model.forward(g, batch, ctx);
  return cross_entropy(out.probs, batch.targets);
}

TrainResult train(const std::vector<TokenizedSentence>& corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
  train_config.validate();
  std::vector<const TokenizedSentence*> usable;
  for (const auto& s : corpus) {
    if (!s.words.empty()) usable.push_back(&s);
  }
  if (usable.empty()) throw std::invalid_argument("train: corpus has no labeled words");

  TrainResult result{Model(model_config, train_config.seed), {}};
  Model& model = result.model;
  Rng rng(train_config.seed ^ 0x9E3779B97F4A7C15ULL);
  const DropoutContext train_ctx{&rng};
  std::vector<NamedParam> params = model.parameters();
  AdamState adam;
  std::size_t step = 0;

  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    rng.shuffle(order);
    double weighted = 0.0;
    std::size_t words = 0;
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
      const std::size_t end = std::min(order.size(), start + train_config.batch_size);
      std::vector<const TokenizedSentence*> members;
      for (std::size_t k = start; k < end; ++k) members.push_back(usable[order[k]]);
      const Batch batch = make_batch(members);

      for (auto& p : params) p.tensor->zero_grad();
      Graph g;
      Var loss = batch_loss(g, model, batch, train_ctx);
      g.backward(loss);
      adam_step(params, adam, ++step, train_config);

      weighted += loss.item() * static_cast<double>(batch.n_words());
      words += batch.n_words();
      ++stats.batches;
    }
    stats.mean_loss = weighted / static_cast<double>(words);
    result.epoch_losses.push_back(stats.mean_loss);
    if (on_epoch) on_epoch(stats, model);
  }
  return result;
}

}  // namespace gedlab
