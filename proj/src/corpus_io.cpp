#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gedlab/corpus.hpp"
#include "gedlab/errors.hpp"

namespace gedlab {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

LabeledCorpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  LabeledCorpus corpus;
  LabeledSentence current;
  std::string line;
  std::size_t lineno = 0;
  bool seen_token = false;
  auto flush = [&] {
    if (!current.words.empty()) corpus.sentences.push_back(std::move(current));
    current = {};
  };
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) {
      flush();
      continue;
    }
    if (!seen_token && line.front() == '#' && line.find('\t') == std::string::npos) {
      corpus.header.push_back(line.substr(1));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path.string(), lineno, "expected 'word<TAB>label'");
    }
    const std::string word = line.substr(0, tab);
    const std::string label = line.substr(tab + 1);
    if (word.empty()) throw ParseError(path.string(), lineno, "empty word");
    if (label.size() != 1 || (label[0] != 'c' && label[0] != 'i')) {
      throw ParseError(path.string(), lineno, "label must be 'c' or 'i', got '" + label + "'");
    }
    seen_token = true;
    current.words.push_back(word);
    current.labels.push_back(parse_label(label[0]));
  }
  flush();
  return corpus;
}

void write_corpus(const LabeledCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& h : corpus.header) out << '#' << h << '\n';
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
    const LabeledSentence& sent = corpus.sentences[s];
    if (s) out << '\n';
    for (std::size_t w = 0; w < sent.words.size(); ++w) {
      out << sent.words[w] << '\t' << label_char(sent.labels[w]) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<SentencePair> read_pairs(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<SentencePair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path.string(), lineno, "expected 'source<TAB>corrected'");
    }
    SentencePair pair{split_tokens(line.substr(0, tab)), split_tokens(line.substr(tab + 1))};
    if (pair.source.empty() || pair.corrected.empty()) {
      throw ParseError(path.string(), lineno, "empty sentence");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void write_pairs(const std::vector<SentencePair>& pairs, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  auto join = [&](const std::vector<std::string>& toks) {
    for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? " " : "") << toks[i];
  };
  for (const auto& p : pairs) {
    join(p.source);
    out << '\t';
    join(p.corrected);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace gedlab
