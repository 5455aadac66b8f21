#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gedlab/model.hpp"

namespace gedlab {

// Positive class is the error label i.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion_counts(const Labels& predicted, const Labels& gold);

// (1+β²)·p·r / (β²·p + r); 0 when the denominator is 0.
double f_beta(double precision, double recall, double beta);

struct EvalReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;
  std::size_t n_sentences = 0;
  std::size_t n_tokens = 0;
  std::string config_fingerprint;
  std::uint64_t seed = 0;

  static EvalReport from_counts(const ConfusionCounts& counts);
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
// "P=68.87 R=43.45 F0.5=61.65"
std::string format_percent(const EvalReport& r);

// Argmax per word in eval mode; ties go to the lower class id (c).
std::vector<Labels> predict(Model& model, const std::vector<TokenizedSentence>& sentences,
                            std::size_t batch_size = 64);

EvalReport evaluate(Model& model, const std::vector<TokenizedSentence>& sentences,
                    std::uint64_t seed = 0);

// Mean layer-attention weight per (head, layer) over every word in the corpus.
struct AttentionSummary {
  std::size_t n_heads = 0;
  std::size_t n_layers = 0;
  std::size_t n_tokens = 0;
  std::vector<double> mean;  // [head][layer]

  double at(std::size_t head, std::size_t layer) const { return mean[head * n_layers + layer]; }
};

AttentionSummary summarize_attention(const std::vector<AttentionRecord>& records);
AttentionSummary attention_summary(Model& model, const std::vector<TokenizedSentence>& sentences,
                                   std::size_t batch_size = 64);
// Header "head,layer_1,...,layer_L"; one row per head, 6 significant digits.
std::string attention_summary_csv(const AttentionSummary& summary);

}  // namespace gedlab
