#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "gedlab/corpus.hpp"

namespace gedlab {

namespace {

using Table = std::vector<std::vector<std::size_t>>;

Table distance_table(const std::vector<std::string>& src, const std::vector<std::string>& ref) {
  const std::size_t m = src.size(), n = ref.size();
  Table d(m + 1, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 0; i <= m; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= n; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t diag = d[i - 1][j - 1] + (src[i - 1] == ref[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d;
}

}  // namespace

char label_char(Label label) { return label == Label::incorrect ? 'i' : 'c'; }

Label parse_label(char c) {
  if (c == 'c') return Label::correct;
  if (c == 'i') return Label::incorrect;
  throw std::invalid_argument(std::string("label must be 'c' or 'i', got '") + c + "'");
}

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return distance_table(a, b)[a.size()][b.size()];
}

Labels dp_align_label(const SentencePair& pair) {
  const auto& src = pair.source;
  const auto& ref = pair.corrected;
  if (src.empty() || ref.empty()) throw std::invalid_argument("dp_align_label: empty sentence");
  const Table d = distance_table(src, ref);
  Labels labels(src.size(), Label::correct);

  std::size_t i = src.size(), j = ref.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = src[i - 1] == ref[j - 1];
      if (same && d[i][j] == d[i - 1][j - 1]) {
        --i, --j;
        continue;
      }
      if (!same && d[i][j] == d[i - 1][j - 1] + 1) {
        labels[i - 1] = Label::incorrect;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      labels[i - 1] = Label::incorrect;
      --i;
      continue;
    }
    // Insertion of ref[j-1] before source position i.
    labels[std::min(i, src.size() - 1)] = Label::incorrect;
    --j;
  }
  return labels;
}

Labels merge_annotator_labels(const std::vector<Labels>& label_sets) {
  if (label_sets.empty()) throw std::invalid_argument("merge_annotator_labels: no annotators");
  Labels merged = label_sets.front();
  for (const Labels& set : label_sets) {
    if (set.size() != merged.size()) {
      throw std::invalid_argument("merge_annotator_labels: annotators disagree on length (" +
                                  std::to_string(set.size()) + " vs " +
                                  std::to_string(merged.size()) + ")");
    }
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (set[k] == Label::incorrect) merged[k] = Label::incorrect;
    }
  }
  return merged;
}

LabeledCorpus label_pairs(const std::vector<std::vector<SentencePair>>& annotators) {
  if (annotators.empty()) throw std::invalid_argument("label_pairs: no pair sets");
  const std::size_t n = annotators.front().size();
  for (const auto& set : annotators) {
    if (set.size() != n) {
      throw std::invalid_argument("label_pairs: annotator files differ in sentence count");
    }
  }
  LabeledCorpus corpus;
  corpus.header.emplace_back(kInsertionConventionHeader);
  corpus.header.push_back("annotators=" + std::to_string(annotators.size()));
  corpus.sentences.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<Labels> sets;
    for (const auto& set : annotators) {
      if (set[s].source != annotators.front()[s].source) {
        throw std::invalid_argument("label_pairs: annotators disagree on source sentence " +
                                    std::to_string(s + 1));
      }
      sets.push_back(dp_align_label(set[s]));
    }
    corpus.sentences.push_back({annotators.front()[s].source, merge_annotator_labels(sets)});
  }
  return corpus;
}

}  // namespace gedlab
