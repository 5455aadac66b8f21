#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gedlab/corpus.hpp"

namespace gedlab {

namespace {

constexpr std::string_view kContinuation = "##";

// Byte offsets where UTF-8 code points start, plus the end offset.
std::vector<std::size_t> char_boundaries(std::string_view word) {
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i < word.size(); ++i) {
    const auto byte = static_cast<unsigned char>(word[i]);
    if ((byte & 0xC0) != 0x80) cuts.push_back(i);
  }
  cuts.push_back(word.size());
  return cuts;
}

}  // namespace

SubwordVocab::SubwordVocab(std::vector<std::string> pieces) {
  std::sort(pieces.begin(), pieces.end());
  pieces.erase(std::unique(pieces.begin(), pieces.end()), pieces.end());
  pieces_ = {"[PAD]", "[UNK]", "[BOS]", "[EOS]"};
  for (auto& p : pieces) {
    if (p.empty()) throw std::invalid_argument("SubwordVocab: empty piece");
    if (std::find(pieces_.begin(), pieces_.begin() + kReserved, p) != pieces_.begin() + kReserved) {
      continue;
    }
    pieces_.push_back(std::move(p));
  }
  for (std::size_t id = 0; id < pieces_.size(); ++id) index_.emplace(pieces_[id], id);
}

SubwordVocab SubwordVocab::build(const LabeledCorpus& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  std::set<std::string> pieces;
  for (const auto& sent : corpus.sentences) {
    for (const auto& word : sent.words) {
      ++counts[word];
      const auto cuts = char_boundaries(word);
      for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const std::string ch = word.substr(cuts[c], cuts[c + 1] - cuts[c]);
        pieces.insert(ch);
        pieces.insert(std::string(kContinuation) + ch);
      }
    }
  }
  for (const auto& [word, n] : counts) {
    if (n >= min_count) pieces.insert(word);
  }
  return SubwordVocab(std::vector<std::string>(pieces.begin(), pieces.end()));
}

std::optional<std::size_t> SubwordVocab::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> subtokenize(std::string_view word, const SubwordVocab& vocab) {
  if (word.empty()) throw std::invalid_argument("subtokenize: empty word");
  const auto cuts = char_boundaries(word);
  std::vector<std::size_t> ids;
  std::size_t start = 0;  // index into cuts
  std::string candidate;
  while (start + 1 < cuts.size()) {
    std::optional<std::size_t> match;
    std::size_t end = cuts.size() - 1;
    for (; end > start; --end) {
      candidate.assign(start == 0 ? "" : kContinuation);
      candidate.append(word.substr(cuts[start], cuts[end] - cuts[start]));
      match = vocab.find(candidate);
      if (match) break;
    }
    if (!match) return {SubwordVocab::kUnk};
    ids.push_back(*match);
    start = end;
  }
  return ids;
}

TokenizedSentence tokenize(const LabeledSentence& sentence, const SubwordVocab& vocab,
                           std::size_t max_sub_tokens) {
  if (sentence.words.size() != sentence.labels.size()) {
    throw std::invalid_argument("tokenize: word and label counts differ");
  }
  TokenizedSentence out;
  for (std::size_t w = 0; w < sentence.words.size(); ++w) {
    const auto pieces = subtokenize(sentence.words[w], vocab);
    if (max_sub_tokens && out.sub_tokens.size() + pieces.size() > max_sub_tokens) {
      out.truncated = true;
      break;
    }
    out.words.push_back(sentence.words[w]);
    out.labels.push_back(sentence.labels[w]);
    out.first_sub_index.push_back(out.sub_tokens.size());
    out.sub_tokens.insert(out.sub_tokens.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::vector<TokenizedSentence> tokenize_corpus(const LabeledCorpus& corpus,
                                               const SubwordVocab& vocab,
                                               std::size_t max_sub_tokens) {
  std::vector<TokenizedSentence> out;
  out.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) out.push_back(tokenize(s, vocab, max_sub_tokens));
  return out;
}

}  // namespace gedlab
