#include "gedlab/model.hpp"

#include <stdexcept>

#include "gedlab/training.hpp"

namespace gedlab {

Batch make_batch(std::span<const TokenizedSentence* const> sentences, std::size_t pad_to) {
  if (sentences.empty()) throw std::invalid_argument("make_batch: no sentences");
  std::vector<std::vector<std::size_t>> sequences;
  sequences.reserve(sentences.size());
  for (const TokenizedSentence* s : sentences) {
    if (s->words.empty()) throw std::invalid_argument("make_batch: sentence without words");
    std::vector<std::size_t> seq;
    seq.reserve(s->sub_tokens.size() + 2);
    seq.push_back(SubwordVocab::kBos);
    seq.insert(seq.end(), s->sub_tokens.begin(), s->sub_tokens.end());
    seq.push_back(SubwordVocab::kEos);
    sequences.push_back(std::move(seq));
  }
  Batch batch;
  batch.input = EncoderInput::padded(sequences, pad_to);
  const std::size_t T = batch.input.seq_len;
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const TokenizedSentence& s = *sentences[b];
    if (s.first_sub_index.size() != s.labels.size()) {
      throw std::invalid_argument("make_batch: first_sub_index and labels differ in length");
    }
    for (std::size_t w = 0; w < s.first_sub_index.size(); ++w) {
      if (s.first_sub_index[w] >= s.sub_tokens.size()) {
        throw std::out_of_range("make_batch: first sub-token index out of range");
      }
      batch.word_rows.push_back(b * T + 1 + s.first_sub_index[w]);
      batch.targets.push_back(static_cast<std::size_t>(s.labels[w]));
    }
    batch.words_per_sentence.push_back(s.words.size());
  }
  return batch;
}

Batch make_batch(const TokenizedSentence& sentence, std::size_t pad_to) {
  const TokenizedSentence* one[] = {&sentence};
  return make_batch(std::span<const TokenizedSentence* const>(one), pad_to);
}

namespace {

Model::Head init_head(const ModelConfig& config, Rng& rng) {
  switch (config.head_type) {
    case HeadType::final_layer: return FinalHeadParams::init(config, rng);
    case HeadType::avgl: return AvglParams::init(config, rng);
    case HeadType::mhmla: return MhmlaParams::init(config, rng);
  }
  throw std::logic_error("unknown head type");
}

ModelConfig normalized(ModelConfig config) {
  config.validate();
  config.key_dim = config.resolved_key_dim();
  return config;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(normalized(config)) {
  Rng rng(init_seed);
  encoder_ = EncoderParams::init(config_, rng);
  head_ = init_head(config_, rng);
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  const ParamVisitor collect = [&](const std::string& name, Tensor& t) {
    out.push_back({name, &t});
  };
  encoder_.visit(collect);
  std::visit([&](auto& h) { h.visit(collect); }, head_);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->numel();
  return n;
}

ModelOutput Model::forward(Graph& g, const Batch& batch, const DropoutContext& ctx,
                           const ForcedLayerWeights* forced) {
  LayerStates all = encode(g, encoder_, config_, batch.input, ctx);
  LayerStates words;
  words.states.reserve(all.states.size());
  for (Var layer : all.states) {
    words.states.push_back(
        dropout(select_first_subtoken_states(layer, batch.word_rows), config_.dropout, ctx));
  }
  ModelOutput out;
  if (auto* p = std::get_if<MhmlaParams>(&head_)) {
    HeadOutput h = mhmla_forward(g, words, *p, config_, ctx, forced);
    out.probs = h.probs;
    out.attention = std::move(h.attention);
  } else if (auto* p = std::get_if<AvglParams>(&head_)) {
    out.probs = avgl_forward(g, words, *p);
  } else {
    out.probs = final_layer_forward(g, words, std::get<FinalHeadParams>(head_).output);
  }
  return out;
}

void Model::round_to_float32() {
  for (auto& p : parameters()) {
    for (double& v : p.tensor->data) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace gedlab
