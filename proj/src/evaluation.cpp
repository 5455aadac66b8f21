#include "gedlab/evaluation.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gedlab {

namespace {

template <typename Fn>
void for_each_batch(const std::vector<TokenizedSentence>& sentences, std::size_t batch_size,
                    Fn&& fn) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<const TokenizedSentence*> members;
  auto flush = [&] {
    if (members.empty()) return;
    fn(make_batch(members), members);
    members.clear();
  };
  for (const auto& s : sentences) {
    if (s.words.empty()) continue;
    members.push_back(&s);
    if (members.size() == batch_size) flush();
  }
  flush();
}

}  // namespace

ConfusionCounts confusion_counts(const Labels& predicted, const Labels& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("confusion_counts: " + std::to_string(predicted.size()) +
                                " predictions for " + std::to_string(gold.size()) + " gold labels");
  }
  ConfusionCounts c;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const bool p = predicted[k] == Label::incorrect;
    const bool g = gold[k] == Label::incorrect;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f_beta(double precision, double recall, double beta) {
  if (!(precision >= 0.0 && precision <= 1.0) || !(recall >= 0.0 && recall <= 1.0)) {
    throw std::invalid_argument("f_beta: precision and recall must lie in [0, 1]");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("f_beta: beta must be > 0");
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

EvalReport EvalReport::from_counts(const ConfusionCounts& c) {
  EvalReport r;
  r.tp = c.tp, r.fp = c.fp, r.fn = c.fn, r.tn = c.tn;
  r.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.f_half = f_beta(r.precision, r.recall, 0.5);
  r.n_tokens = c.tp + c.fp + c.fn + c.tn;
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"tp", r.tp},
                     {"fp", r.fp},
                     {"fn", r.fn},
                     {"tn", r.tn},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f_half", r.f_half},
                     {"n_sentences", r.n_sentences},
                     {"n_tokens", r.n_tokens},
                     {"config_fingerprint", r.config_fingerprint},
                     {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  j.at("tp").get_to(r.tp);
  j.at("fp").get_to(r.fp);
  j.at("fn").get_to(r.fn);
  j.at("tn").get_to(r.tn);
  j.at("precision").get_to(r.precision);
  j.at("recall").get_to(r.recall);
  j.at("f_half").get_to(r.f_half);
  j.at("n_sentences").get_to(r.n_sentences);
  j.at("n_tokens").get_to(r.n_tokens);
  j.at("config_fingerprint").get_to(r.config_fingerprint);
  j.at("seed").get_to(r.seed);
}

std::string format_percent(const EvalReport& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "P=%.2f R=%.2f F0.5=%.2f", 100.0 * r.precision, 100.0 * r.recall,
                100.0 * r.f_half);
  return buf;
}

std::vector<Labels> predict(Model& model, const std::vector<TokenizedSentence>& sentences,
                            std::size_t batch_size) {
  std::vector<Labels> out;
  out.reserve(sentences.size());
  std::size_t next = 0;
  for_each_batch(sentences, batch_size, [&](const Batch& batch, const auto& members) {
    Graph g(false);
    const Tensor& probs = model.forward(g, batch, {}).probs.value();
    const std::size_t classes = probs.shape[1];
    std::size_t row = 0;
    for (const TokenizedSentence* s : members) {
      while (&sentences[next] != s) out.emplace_back(), ++next;
      Labels labels;
      for (std::size_t w = 0; w < s->words.size(); ++w, ++row) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
          if (probs.data[row * classes + c] > probs.data[row * classes + best]) best = c;
        }
        labels.push_back(best == 0 ? Label::correct : Label::incorrect);
      }
      out.push_back(std::move(labels));
      ++next;
    }
  });
  while (out.size() < sentences.size()) out.emplace_back();
  return out;
}

EvalReport evaluate(Model& model, const std::vector<TokenizedSentence>& sentences,
                    std::uint64_t seed) {
  const std::vector<Labels> predicted = predict(model, sentences);
  ConfusionCounts counts;
  std::size_t n_sentences = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (sentences[s].words.empty()) continue;
    counts += confusion_counts(predicted[s], sentences[s].labels);
    ++n_sentences;
  }
  EvalReport report = EvalReport::from_counts(counts);
  report.n_sentences = n_sentences;
  report.config_fingerprint = config_fingerprint(model.config());
  report.seed = seed;
  return report;
}

AttentionSummary summarize_attention(const std::vector<AttentionRecord>& records) {
  AttentionSummary s;
  for (const auto& r : records) {
    if (r.n_tokens == 0) continue;
    if (s.n_tokens == 0) {
      s.n_heads = r.n_heads;
      s.n_layers = r.n_layers;
      s.mean.assign(s.n_heads * s.n_layers, 0.0);
    } else if (r.n_heads != s.n_heads || r.n_layers != s.n_layers) {
      throw std::invalid_argument("summarize_attention: records disagree on heads/layers");
    }
    for (std::size_t n = 0; n < r.n_tokens; ++n) {
      for (std::size_t j = 0; j < r.n_heads; ++j) {
        for (std::size_t l = 0; l < r.n_layers; ++l) s.mean[j * s.n_layers + l] += r.at(n, j, l);
      }
    }
    s.n_tokens += r.n_tokens;
  }
  for (double& m : s.mean) m /= static_cast<double>(s.n_tokens);
  return s;
}

AttentionSummary attention_summary(Model& model, const std::vector<TokenizedSentence>& sentences,
                                   std::size_t batch_size) {
  if (!model.mhmla()) {
    throw std::invalid_argument("attention_summary: model head is " +
                                std::string(head_type_name(model.config().head_type)) +
                                ", not mhmla");
  }
  std::vector<AttentionRecord> records;
  for_each_batch(sentences, batch_size, [&](const Batch& batch, const auto&) {
    Graph g(false);
    records.push_back(*model.forward(g, batch, {}).attention);
  });
  if (records.empty()) throw std::invalid_argument("attention_summary: corpus has no words");
  return summarize_attention(records);
}

std::string attention_summary_csv(const AttentionSummary& summary) {
  std::ostringstream os;
  os << "head";
  for (std::size_t l = 0; l < summary.n_layers; ++l) os << ",layer_" << (l + 1);
  os << '\n';
  os.precision(6);
  for (std::size_t j = 0; j < summary.n_heads; ++j) {
    os << (j + 1);
    for (std::size_t l = 0; l < summary.n_layers; ++l) os << ',' << summary.at(j, l);
    os << '\n';
  }
  return os.str();
}

}  // namespace gedlab
