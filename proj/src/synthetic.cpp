#include <algorithm>
#include <array>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gedlab/corpus.hpp"
#include "gedlab/rng.hpp"

namespace gedlab {

namespace {

struct NumberPair {
  const char* singular;
  const char* plural;
};

constexpr std::array<NumberPair, 15> kSubjects{{{"teacher", "teachers"},
                                                {"student", "students"},
                                                {"doctor", "doctors"},
                                                {"farmer", "farmers"},
                                                {"child", "children"},
                                                {"girl", "girls"},
                                                {"boy", "boys"},
                                                {"friend", "friends"},
                                                {"driver", "drivers"},
                                                {"artist", "artists"},
                                                {"worker", "workers"},
                                                {"singer", "singers"},
                                                {"nurse", "nurses"},
                                                {"pilot", "pilots"},
                                                {"cook", "cooks"}}};

constexpr std::array<NumberPair, 13> kObjects{{{"book", "books"},
                                               {"letter", "letters"},
                                               {"apple", "apples"},
                                               {"picture", "pictures"},
                                               {"ball", "balls"},
                                               {"cake", "cakes"},
                                               {"box", "boxes"},
                                               {"song", "songs"},
                                               {"bag", "bags"},
                                               {"flower", "flowers"},
                                               {"map", "maps"},
                                               {"cup", "cups"},
                                               {"key", "keys"}}};

// {third person singular, base form}
constexpr std::array<NumberPair, 12> kVerbs{{{"reads", "read"},
                                             {"writes", "write"},
                                             {"sees", "see"},
                                             {"likes", "like"},
                                             {"finds", "find"},
                                             {"buys", "buy"},
                                             {"takes", "take"},
                                             {"carries", "carry"},
                                             {"wants", "want"},
                                             {"opens", "open"},
                                             {"paints", "paint"},
                                             {"holds", "hold"}}};

constexpr std::array<const char*, 5> kSingularDeterminers{"a", "the", "this", "that", "every"};
constexpr std::array<const char*, 5> kPluralDeterminers{"the", "these", "those", "some", "many"};

// Every place takes exactly one preposition, so a substituted preposition is
// always an error.
struct Place {
  const char* preposition;
  const char* noun;
};

constexpr std::array<Place, 14> kPlaces{{{"in", "park"},
                                         {"in", "garden"},
                                         {"in", "kitchen"},
                                         {"in", "library"},
                                         {"at", "station"},
                                         {"at", "market"},
                                         {"at", "airport"},
                                         {"on", "street"},
                                         {"on", "bus"},
                                         {"on", "beach"},
                                         {"near", "river"},
                                         {"near", "bridge"},
                                         {"under", "tree"},
                                         {"behind", "wall"}}};

const std::vector<std::string>& confusion_set(const std::string& preposition) {
  static const std::vector<std::string> locative{"in", "at", "on"};
  static const std::vector<std::string> relative{"near", "under", "behind"};
  return std::find(locative.begin(), locative.end(), preposition) != locative.end() ? locative
                                                                                     : relative;
}

bool is_determiner(const std::string& w) {
  auto eq = [&](const char* d) { return w == d; };
  return std::any_of(kSingularDeterminers.begin(), kSingularDeterminers.end(), eq) ||
         std::any_of(kPluralDeterminers.begin(), kPluralDeterminers.end(), eq);
}

bool is_preposition(const std::string& w) {
  return std::any_of(kPlaces.begin(), kPlaces.end(),
                     [&](const Place& p) { return w == p.preposition; });
}

bool starts_with_vowel(const std::string& w) {
  return !w.empty() && std::string("aeiou").find(w.front()) != std::string::npos;
}

std::vector<std::string> noun_phrase(Rng& rng, const NumberPair& noun, bool plural) {
  std::vector<std::string> np;
  const auto& determiners = plural ? kPluralDeterminers : kSingularDeterminers;
  np.emplace_back(determiners[rng.below(determiners.size())]);
  np.emplace_back(plural ? noun.plural : noun.singular);
  if (np.front() == "a" && starts_with_vowel(np[1])) np.front() = "the";
  return np;
}

std::vector<std::string> make_sentence(Rng& rng) {
  std::vector<std::string> s;
  const bool plural_subject = rng.bernoulli(0.5);
  auto subject = noun_phrase(rng, kSubjects[rng.below(kSubjects.size())], plural_subject);
  s.insert(s.end(), subject.begin(), subject.end());
  const NumberPair& verb = kVerbs[rng.below(kVerbs.size())];
  s.emplace_back(plural_subject ? verb.plural : verb.singular);
  auto object = noun_phrase(rng, kObjects[rng.below(kObjects.size())], rng.bernoulli(0.5));
  s.insert(s.end(), object.begin(), object.end());
  if (rng.bernoulli(0.6)) {
    const Place& place = kPlaces[rng.below(kPlaces.size())];
    s.emplace_back(place.preposition);
    s.emplace_back("the");
    s.emplace_back(place.noun);
  }
  s.emplace_back(".");
  return s;
}

enum class Injector { delete_determiner, agreement, preposition, duplicate, swap };

std::vector<std::string> inject(Rng& rng, const std::vector<std::string>& clean) {
  std::vector<std::size_t> determiners, prepositions;
  std::size_t verb = clean.size();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (is_determiner(clean[i])) determiners.push_back(i);
    if (is_preposition(clean[i])) prepositions.push_back(i);
    for (const auto& v : kVerbs) {
      if (clean[i] == v.singular || clean[i] == v.plural) verb = i;
    }
  }
  // Positions eligible for duplication / swapping exclude the final period.
  const std::size_t body = clean.size() - 1;

  std::vector<Injector> options{Injector::delete_determiner, Injector::agreement,
                                Injector::duplicate, Injector::swap};
  if (!prepositions.empty()) options.push_back(Injector::preposition);

  std::vector<std::string> out = clean;
  switch (rng.pick(options)) {
    case Injector::delete_determiner:
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(rng.pick(determiners)));
      break;
    case Injector::agreement:
      for (const auto& v : kVerbs) {
        if (out[verb] == v.singular) {
          out[verb] = v.plural;
          break;
        }
        if (out[verb] == v.plural) {
          out[verb] = v.singular;
          break;
        }
      }
      break;
    case Injector::preposition: {
      const std::size_t at = rng.pick(prepositions);
      std::vector<std::string> alternatives;
      for (const auto& p : confusion_set(out[at])) {
        if (p != out[at]) alternatives.push_back(p);
      }
      out[at] = rng.pick(alternatives);
      break;
    }
    case Injector::duplicate: {
      const std::size_t at = rng.below(body);
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), out[at]);
      break;
    }
    case Injector::swap: {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i + 1 < body; ++i) {
        if (out[i] != out[i + 1]) candidates.push_back(i);
      }
      const std::size_t at = rng.pick(candidates);
      std::swap(out[at], out[at + 1]);
      break;
    }
  }
  return out;
}

}  // namespace

std::vector<SentencePair> generate_synthetic_pairs(std::size_t n, std::uint64_t seed,
                                                   double error_rate) {
  if (n < 1) throw std::invalid_argument("generate_synthetic_pairs: n must be >= 1");
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
    throw std::invalid_argument("generate_synthetic_pairs: error_rate must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<SentencePair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SentencePair pair;
    pair.corrected = make_sentence(rng);
    pair.source = rng.bernoulli(error_rate) ? inject(rng, pair.corrected) : pair.corrected;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<std::string> synthetic_lexicon() {
  std::set<std::string> words{"."};
  for (const auto& p : kSubjects) words.insert({p.singular, p.plural});
  for (const auto& p : kObjects) words.insert({p.singular, p.plural});
  for (const auto& p : kVerbs) words.insert({p.singular, p.plural});
  for (const char* w : kSingularDeterminers) words.insert(w);
  for (const char* w : kPluralDeterminers) words.insert(w);
  for (const auto& p : kPlaces) words.insert({p.preposition, p.noun});
  return {words.begin(), words.end()};
}

}  // namespace gedlab
