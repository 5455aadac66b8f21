#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gedlab {

enum class Label : std::uint8_t { correct = 0, incorrect = 1 };
using Labels = std::vector<Label>;

char label_char(Label label);
Label parse_label(char c);  // throws std::invalid_argument for anything but c/i

struct SentencePair {
  std::vector<std::string> source;     // possibly errorful
  std::vector<std::string> corrected;  // reference

  bool operator==(const SentencePair&) const = default;
};

// Template sentences (determiner, subject, agreeing verb, determiner, object,
// optional prepositional phrase, period) over a fixed
// vocabulary. Each sentence is corrupted with probability error_rate by one
// edit: determiner deletion, agreement swap, preposition confusion,
// duplication of a token, or a swap of two adjacent tokens.
std::vector<SentencePair> generate_synthetic_pairs(std::size_t n, std::uint64_t seed,
                                                   double error_rate);

// Word list the generator draws from, sorted.
std::vector<std::string> synthetic_lexicon();

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Unit-cost Levenshtein alignment of source against corrected. Substituted
// and deleted source tokens are errors; a word missing from the source marks
// the source token that follows the gap (the last token when the gap is at the
// end). Backtrace prefers match, then substitution, deletion, insertion.
Labels dp_align_label(const SentencePair& pair);

// Token is an error if any annotator marks it.
Labels merge_annotator_labels(const std::vector<Labels>& label_sets);

// ---- files ----------------------------------------------------------------

inline constexpr std::string_view kInsertionConventionHeader = "insertion_convention=following";

struct LabeledSentence {
  std::vector<std::string> words;
  Labels labels;

  bool operator==(const LabeledSentence&) const = default;
};

struct LabeledCorpus {
  std::vector<std::string> header;  // comment lines without the leading '#'
  std::vector<LabeledSentence> sentences;

  bool operator==(const LabeledCorpus&) const = default;
};

// CoNLL-style: "word<TAB>label" per line, blank line between sentences,
// leading '#' lines (without a tab) are header comments.
LabeledCorpus read_corpus(const std::filesystem::path& path);
void write_corpus(const LabeledCorpus& corpus, const std::filesystem::path& path);

// One pair per line: "source tokens<TAB>corrected tokens", space-separated.
std::vector<SentencePair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::vector<SentencePair>& pairs, const std::filesystem::path& path);

// ---- sub-tokens -----------------------------------------------------------

// WordPiece-style vocabulary: whole words and "##"-prefixed continuation
// pieces. Ids 0-3 are reserved; the remaining pieces are in lexicographic order.
class SubwordVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kReserved = 4;

  SubwordVocab() : SubwordVocab(std::vector<std::string>{}) {}
  // pieces excludes the reserved entries; it is sorted and deduplicated.
  explicit SubwordVocab(std::vector<std::string> pieces);

  // Words seen at least min_count times, plus every character as both an
  // initial and a "##" continuation piece.
  static SubwordVocab build(const LabeledCorpus& corpus, std::size_t min_count = 2);

  std::size_t size() const { return pieces_.size(); }
  std::optional<std::size_t> find(std::string_view piece) const;
  const std::string& piece(std::size_t id) const { return pieces_.at(id); }
  // All pieces, reserved ones included, indexed by id.
  const std::vector<std::string>& pieces() const { return pieces_; }

  bool operator==(const SubwordVocab& other) const { return pieces_ == other.pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Greedy longest-prefix segmentation; [UNK] when no segmentation exists.
std::vector<std::size_t> subtokenize(std::string_view word, const SubwordVocab& vocab);

struct TokenizedSentence {
  std::vector<std::string> words;
  Labels labels;
  std::vector<std::size_t> sub_tokens;
  std::vector<std::size_t> first_sub_index;  // per word, index into sub_tokens
  bool truncated = false;
};

// Keeps whole words while their sub-tokens fit in max_sub_tokens (0 = no
// limit); sets `truncated` when words are dropped.
TokenizedSentence tokenize(const LabeledSentence& sentence, const SubwordVocab& vocab,
                           std::size_t max_sub_tokens = 0);

std::vector<TokenizedSentence> tokenize_corpus(const LabeledCorpus& corpus,
                                               const SubwordVocab& vocab,
                                               std::size_t max_sub_tokens = 0);

// Labels every pair with dp_align_label; multiple annotator files over the
// same sources are union-merged.
LabeledCorpus label_pairs(const std::vector<std::vector<SentencePair>>& annotators);

}  // namespace gedlab
