#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gedlab/model.hpp"

namespace gedlab {

// Row gather keeping one encoder state per word. Indices must be strictly
// increasing and in range.
Var select_first_subtoken_states(Var states, std::span<const std::size_t> first_sub_index);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update of every parameter from its .grad, at step
// t >= 1. Throws NumericError naming the parameter if a gradient is not finite.
void adam_step(const std::vector<NamedParam>& params, AdamState& state, std::size_t t,
               const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

using EpochCallback = std::function<void(const EpochStats&, Model&)>;

struct TrainResult {
  Model model;
  std::vector<double> epoch_losses;
};

// Mean token-level cross-entropy over the real words of a batch, in the
// given graph.
Var batch_loss(Graph& g, Model& model, const Batch& batch, const DropoutContext& ctx);

// Shuffles sentences every epoch with a generator seeded from config.seed,
// pads each batch to its longest sentence and runs Adam at a constant rate.
// Epoch loss is the word-weighted mean over the epoch's batches.
// Sentences with no words (e.g. after truncation) are skipped.
TrainResult train(const std::vector<TokenizedSentence>& corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

}  // namespace gedlab
