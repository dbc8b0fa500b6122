#ifndef XNER_SYNTHETIC_HPP_
#define XNER_SYNTHETIC_HPP_

// Synthetic tagged text for two toy languages. Both languages mark entity
// types with the same orthographic cues (capitalized stems with
// type-specific endings: persons in -son, locations in -ia, ...), while their
// ordinary vocabulary is disjoint. Entity names are freshly generated, so
// unseen names can only be recognized from their spelling.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xner/corpus.hpp"
#include "xner/random.hpp"

namespace xner::synthetic {

struct LanguageStyle {
  std::string name;
  std::vector<std::string> fillers;          // lowercase common words
  std::vector<std::string> openers;          // capitalized sentence-initial non-entities
  std::array<std::vector<std::string>, 4> cues;  // words that tend to precede each entity type
};

inline LanguageStyle alpha() {
  return {"alpha",
          {"the", "a", "of", "and", "was", "is", "to", "from", "with", "after", "before", "report", "media",
           "magic", "reason", "season", "people", "city", "talks", "market", "team", "week", "new", "old", "said",
           "will", "has", "been", "late", "early", "strong", "match", "plan", "deal", "vote", "trial", "area"},
          {"The", "Yesterday", "Today", "Meanwhile", "However", "Officials", "Sources"},
          {{{"mr", "said", "met", "coach"}, {"in", "near", "to", "across"}, {"at", "for", "joined", "by"},
            {"the", "a", "some", "many"}}}};
}

inline LanguageStyle beta() {
  return {"beta",
          {"el", "la", "de", "y", "fue", "es", "al", "desde", "con", "tras", "antes", "informe", "materia",
           "logica", "razon", "temporada", "gente", "ciudad", "charla", "mercado", "equipo", "semana", "nuevo",
           "viejo", "dijo", "sera", "tiene", "sido", "tarde", "pronto", "fuerte", "partido", "plan", "trato", "voto",
           "juicio", "zona"},
          {"El", "Ayer", "Hoy", "Mientras", "Sin", "Fuentes", "Ademas"},
          {{{"senor", "dijo", "vio", "tecnico"}, {"en", "cerca", "hacia", "por"}, {"para", "con", "unio", "segun"},
            {"lo", "un", "unos", "muchos"}}}};
}

inline const std::array<std::vector<std::string>, 4>& entity_endings() {
  static const std::array<std::vector<std::string>, 4> e{{{"son", "sen", "sson"},
                                                         {"ia", "land", "burg"},
                                                         {"corp", "tek", "ware"},
                                                         {"ish", "ese", "ic"}}};
  return e;
}

inline const std::vector<std::string>& syllables() {
  static const std::vector<std::string> s{"ka", "lo", "mi", "ran", "te", "vo", "dal", "bru", "si", "nor",
                                          "pe", "gal", "tu", "ber", "ma", "zo", "fen", "ri", "ho", "wen"};
  return s;
}

namespace detail {

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 32);
  return s;
}

inline std::string stem(Rng& rng) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += pick(syllables(), rng);
  return capitalize(s);
}

}  // namespace detail

/// Tokens of one entity of type `t`.
inline std::vector<std::string> entity(EntityType t, Rng& rng) {
  const auto ti = static_cast<std::size_t>(t);
  std::vector<std::string> toks;
  if (t == EntityType::PER && std::bernoulli_distribution(0.4)(rng)) toks.push_back(detail::stem(rng));
  toks.push_back(detail::stem(rng) + detail::pick(entity_endings()[ti], rng));
  return toks;
}

/// One sentence of 1–3 entities embedded in filler text, tagged in `scheme`.
inline Sentence sentence(const LanguageStyle& lang, TagScheme scheme, Rng& rng) {
  std::vector<std::string> words;
  std::vector<EntitySpan> spans;
  if (std::bernoulli_distribution(0.5)(rng)) words.push_back(detail::pick(lang.openers, rng));
  const std::size_t n_ent = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  for (std::size_t e = 0; e < n_ent; ++e) {
    const std::size_t n_fill = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    for (std::size_t k = 0; k < n_fill; ++k) words.push_back(detail::pick(lang.fillers, rng));
    const auto t = kEntityTypes[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
    if (std::bernoulli_distribution(0.6)(rng)) words.push_back(detail::pick(lang.cues[static_cast<std::size_t>(t)], rng));
    const auto toks = entity(t, rng);
    spans.push_back({words.size(), words.size() + toks.size() - 1, t});
    words.insert(words.end(), toks.begin(), toks.end());
  }
  const std::size_t n_tail = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  for (std::size_t k = 0; k < n_tail; ++k) words.push_back(detail::pick(lang.fillers, rng));
  const auto tags = encode_spans(spans, words.size(), scheme);
  Sentence s;
  for (std::size_t i = 0; i < words.size(); ++i) s.tokens.push_back({words[i], tags[i], {words[i], tags[i]}});
  return s;
}

inline Corpus corpus(const LanguageStyle& lang, std::size_t n, TagScheme scheme, std::uint64_t seed,
                     std::string_view stream = "corpus") {
  Rng rng = substream(seed, std::string(stream) + ":" + lang.name);
  Corpus c;
  c.language = lang.name;
  c.scheme = scheme;
  for (std::size_t i = 0; i < n; ++i) c.sentences.push_back(sentence(lang, scheme, rng));
  return c;
}

}  // namespace xner::synthetic

#endif  // XNER_SYNTHETIC_HPP_
