#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "gedlab/corpus.hpp"
#include "gedlab/gradcheck.hpp"
#include "gedlab/heads.hpp"

namespace gedlab {

// Sentences stacked for one encoder pass. Each sequence is
// [BOS] sub-tokens [EOS]; labels attach to each word's first sub-token row.
struct Batch {
  EncoderInput input;
  std::vector<std::size_t> word_rows;
  std::vector<std::size_t> targets;
  std::vector<std::size_t> words_per_sentence;

  std::size_t n_words() const { return word_rows.size(); }
};

// pad_to forces a minimum sequence length (used to test pad invariance).
Batch make_batch(std::span<const TokenizedSentence* const> sentences, std::size_t pad_to = 0);
Batch make_batch(const TokenizedSentence& sentence, std::size_t pad_to = 0);

struct ModelOutput {
  Var probs;  // [words×n_classes]
  std::optional<AttentionRecord> attention;
};

class Model {
 public:
  using Head = std::variant<FinalHeadParams, AvglParams, MhmlaParams>;

  // Weights ~ N(0, 0.02), biases 0, layer-norm gains 1.
  explicit Model(ModelConfig config, std::uint64_t init_seed = 0);

  const ModelConfig& config() const { return config_; }
  EncoderParams& encoder() { return encoder_; }
  Head& head() { return head_; }
  MhmlaParams* mhmla() { return std::get_if<MhmlaParams>(&head_); }
  AvglParams* avgl() { return std::get_if<AvglParams>(&head_); }
  FinalHeadParams* final_head() { return std::get_if<FinalHeadParams>(&head_); }

  // Every trainable tensor in a fixed order with a unique dotted name.
  std::vector<NamedParam> parameters();
  std::size_t parameter_count();

  ModelOutput forward(Graph& g, const Batch& batch, const DropoutContext& ctx,
                      const ForcedLayerWeights* forced = nullptr);

  // Rounds every parameter through float, matching checkpoint storage.
  void round_to_float32();

 private:
  ModelConfig config_;
  EncoderParams encoder_;
  Head head_;
};

}  // namespace gedlab
