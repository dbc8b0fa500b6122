#ifndef XNER_CORPUS_HPP_
#define XNER_CORPUS_HPP_

// CoNLL reading/writing, tag-scheme conversion, entity spans, and the
// entity-level scorer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "xner/error.hpp"
#include "xner/random.hpp"

namespace xner {

enum class TagScheme { IOB1, IOBES, IO };

inline std::string to_string(TagScheme s) {
  switch (s) {
    case TagScheme::IOB1: return "IOB1";
    case TagScheme::IOBES: return "IOBES";
    case TagScheme::IO: return "IO";
  }
  return "?";
}

inline TagScheme parse_scheme(std::string_view s) {
  if (s == "IOB1" || s == "iob1") return TagScheme::IOB1;
  if (s == "IOBES" || s == "iobes") return TagScheme::IOBES;
  if (s == "IO" || s == "io") return TagScheme::IO;
  throw ConfigError("unknown tag scheme '" + std::string(s) + "' (expected IOB1, IOBES or IO)");
}

enum class EntityType : std::uint8_t { PER = 0, LOC = 1, ORG = 2, MISC = 3 };
inline constexpr std::array<EntityType, 4> kEntityTypes{EntityType::PER, EntityType::LOC, EntityType::ORG,
                                                        EntityType::MISC};

inline std::string_view to_string(EntityType t) {
  static constexpr std::array<std::string_view, 4> names{"PER", "LOC", "ORG", "MISC"};
  return names[static_cast<std::size_t>(t)];
}

inline std::optional<EntityType> parse_entity_type(std::string_view s) {
  for (EntityType t : kEntityTypes)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

/// Prefixes a scheme admits, in tag-set order.
inline std::string_view scheme_prefixes(TagScheme s) {
  switch (s) {
    case TagScheme::IOB1: return "IB";
    case TagScheme::IOBES: return "BIES";
    case TagScheme::IO: return "I";
  }
  return "";
}

struct TagParts {
  char prefix = 'O';  // 'O', 'B', 'I', 'E' or 'S'
  EntityType type = EntityType::PER;
};

inline std::optional<TagParts> parse_tag(std::string_view tag, TagScheme scheme) {
  if (tag == "O") return TagParts{};
  if (tag.size() < 3 || tag[1] != '-') return std::nullopt;
  if (scheme_prefixes(scheme).find(tag[0]) == std::string_view::npos) return std::nullopt;
  auto type = parse_entity_type(tag.substr(2));
  if (!type) return std::nullopt;
  return TagParts{tag[0], *type};
}

inline std::string format_tag(TagParts p) {
  if (p.prefix == 'O') return "O";
  return std::string(1, p.prefix) + "-" + std::string(to_string(p.type));
}

struct Token {
  std::string surface;
  std::string tag;
  std::vector<std::string> fields;  // all columns of the source line
};

struct Sentence {
  std::vector<Token> tokens;
  std::size_t size() const noexcept { return tokens.size(); }
};

struct Corpus {
  std::string language;
  TagScheme scheme = TagScheme::IOB1;
  std::vector<Sentence> sentences;
  std::size_t repairs = 0;  // sentences whose tags were rewritten to a valid sequence

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }
};

/// Which whitespace-separated column holds what. CoNLL-2003 English is
/// {4, 0, 3}; CoNLL-2002 Spanish is {2, 0, 1}.
struct ColumnLayout {
  std::size_t columns = 4;
  std::size_t word = 0;
  std::optional<std::size_t> tag = 3;
};

struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  EntityType type = EntityType::PER;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

/// Chunks in a tag sequence, conlleval-style: a chunk starts at B/S, or at
/// I/E unless the previous token continues the same type (prefix B or I);
/// it ends at E/S or before anything that does not continue it.
inline std::vector<EntitySpan> extract_spans(std::span<const TagParts> tags) {
  std::vector<EntitySpan> spans;
  std::optional<EntitySpan> open;
  auto close = [&] {
    if (open) spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const TagParts t = tags[i];
    if (t.prefix == 'O') {
      close();
      continue;
    }
    const bool continues = open && open->type == t.type && (t.prefix == 'I' || t.prefix == 'E');
    if (!continues) {
      close();
      open = EntitySpan{i, i, t.type};
    } else {
      open->end = i;
    }
    if (t.prefix == 'E' || t.prefix == 'S') close();
  }
  close();
  return spans;
}

/// Parses every tag; labels are accepted leniently (any of B/I/E/S prefixes).
inline std::vector<TagParts> tag_parts(const Sentence& s) {
  std::vector<TagParts> out;
  out.reserve(s.size());
  for (const auto& tok : s.tokens) {
    const auto p = parse_tag(tok.tag, TagScheme::IOBES);
    if (!p) throw DataError("unknown tag label '" + tok.tag + "'");
    out.push_back(*p);
  }
  return out;
}

inline std::vector<EntitySpan> extract_spans(const Sentence& s) {
  const auto parts = tag_parts(s);
  return extract_spans(std::span<const TagParts>(parts));
}

/// Canonical tags for non-overlapping, sorted spans over `n` tokens.
inline std::vector<std::string> encode_spans(std::span<const EntitySpan> spans, std::size_t n, TagScheme scheme) {
  std::vector<std::string> tags(n, "O");
  std::optional<EntitySpan> prev;
  for (const EntitySpan& sp : spans) {
    for (std::size_t i = sp.start; i <= sp.end; ++i) {
      char prefix = 'I';
      if (scheme == TagScheme::IOBES) {
        if (sp.start == sp.end)
          prefix = 'S';
        else if (i == sp.start)
          prefix = 'B';
        else if (i == sp.end)
          prefix = 'E';
      } else if (scheme == TagScheme::IOB1) {
        if (i == sp.start && prev && prev->end + 1 == sp.start && prev->type == sp.type) prefix = 'B';
      }
      tags[i] = format_tag({prefix, sp.type});
    }
    prev = sp;
  }
  return tags;
}

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Rewrites a sentence's tags into the canonical form of `scheme`. Returns
// true if anything changed.
inline bool canonicalize(Sentence& s, TagScheme scheme, std::optional<std::size_t> tag_col) {
  const auto spans = extract_spans(s);
  const auto tags = encode_spans(spans, s.size(), scheme);
  bool changed = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.tokens[i].tag == tags[i]) continue;
    changed = true;
    s.tokens[i].tag = tags[i];
    if (tag_col && *tag_col < s.tokens[i].fields.size()) s.tokens[i].fields[*tag_col] = tags[i];
  }
  return changed;
}

}  // namespace detail

/// Parses CoNLL text. Blank lines separate sentences; a sentence containing a
/// -DOCSTART- line is dropped. Invalid tag sequences are repaired (a token
/// that cannot continue a chunk starts a new one) and counted in
/// Corpus::repairs.
inline Corpus parse_conll(std::string_view text, const ColumnLayout& layout, TagScheme scheme,
                          std::string language = "") {
  if (layout.word >= layout.columns || (layout.tag && *layout.tag >= layout.columns))
    throw ConfigError("column layout refers to a column beyond the declared count");
  Corpus corpus;
  corpus.language = std::move(language);
  corpus.scheme = scheme;
  Sentence current;
  bool docstart = false;
  auto flush = [&] {
    if (!current.tokens.empty() && !docstart) {
      if (layout.tag && detail::canonicalize(current, scheme, layout.tag)) ++corpus.repairs;
      corpus.sentences.push_back(std::move(current));
    }
    current = Sentence{};
    docstart = false;
  };
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fields = detail::split_ws(line);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields[0] == "-DOCSTART-") {
      docstart = true;
      continue;
    }
    if (fields.size() != layout.columns)
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(layout.columns) +
                      " columns, got " + std::to_string(fields.size()));
    Token tok;
    tok.surface = fields[layout.word];
    if (layout.tag) {
      tok.tag = fields[*layout.tag];
      if (!parse_tag(tok.tag, scheme))
        throw DataError("line " + std::to_string(line_no) + ": tag '" + tok.tag + "' is not a " + to_string(scheme) +
                        " label");
    } else {
      tok.tag = "O";
    }
    tok.fields = std::move(fields);
    current.tokens.push_back(std::move(tok));
  }
  flush();
  return corpus;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Corpus read_conll(const std::string& path, const ColumnLayout& layout, TagScheme scheme,
                         std::string language = "") {
  const std::string text = read_file(path);
  try {
    return parse_conll(text, layout, scheme, std::move(language));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// One token per line with its original columns (tag column rewritten),
/// single-space separated, blank line after each sentence.
inline void write_conll(std::ostream& os, const Corpus& c, const ColumnLayout& layout) {
  for (const auto& s : c.sentences) {
    for (const auto& tok : s.tokens) {
      for (std::size_t i = 0; i < tok.fields.size(); ++i) {
        if (i) os << ' ';
        os << ((layout.tag && i == *layout.tag) ? tok.tag : tok.fields[i]);
      }
      os << '\n';
    }
    os << '\n';
  }
}

/// IOB1 <-> IOBES preserve spans exactly; conversion to IO merges adjacent
/// same-type entities and cannot be undone.
inline Corpus convert_scheme(const Corpus& c, TagScheme target, std::optional<std::size_t> tag_col = std::nullopt) {
  if (c.scheme == TagScheme::IO && target != TagScheme::IO)
    throw ConfigError("cannot convert from IO to " + to_string(target) + ": entity boundaries are not recoverable");
  Corpus out = c;
  out.scheme = target;
  for (auto& s : out.sentences) {
    const auto spans = extract_spans(s);
    const auto tags = encode_spans(spans, s.size(), target);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.tokens[i].tag = tags[i];
      if (tag_col && *tag_col < s.tokens[i].fields.size()) s.tokens[i].fields[*tag_col] = tags[i];
    }
  }
  return out;
}

struct Score {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
  double precision = 0;  // percentages
  double recall = 0;
  double f1 = 0;

  void finalize() {
    precision = predicted ? 100.0 * static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
    recall = gold ? 100.0 * static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
    f1 = (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
};

struct F1Report {
  Score overall;
  std::array<Score, 4> per_type{};
  std::size_t tokens = 0;
};

/// Span-exact matching; one entry per sentence in each list.
inline F1Report score_spans(std::span<const std::vector<EntitySpan>> gold,
                            std::span<const std::vector<EntitySpan>> pred) {
  if (gold.size() != pred.size()) throw DataError("scorer: sentence count mismatch");
  F1Report r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    for (const auto& g : gold[s]) {
      ++r.overall.gold;
      ++r.per_type[static_cast<std::size_t>(g.type)].gold;
    }
    for (const auto& p : pred[s]) {
      ++r.overall.predicted;
      ++r.per_type[static_cast<std::size_t>(p.type)].predicted;
      if (std::find(gold[s].begin(), gold[s].end(), p) != gold[s].end()) {
        ++r.overall.correct;
        ++r.per_type[static_cast<std::size_t>(p.type)].correct;
      }
    }
  }
  r.overall.finalize();
  for (auto& t : r.per_type) t.finalize();
  return r;
}

inline F1Report evaluate_f1(const Corpus& gold, const Corpus& pred) {
  if (gold.scheme != pred.scheme)
    throw DataError("scorer: scheme mismatch (" + to_string(gold.scheme) + " vs " + to_string(pred.scheme) + ")");
  if (gold.sentences.size() != pred.sentences.size())
    throw DataError("scorer: " + std::to_string(gold.sentences.size()) + " gold sentences vs " +
                    std::to_string(pred.sentences.size()) + " predicted");
  std::vector<std::vector<EntitySpan>> g, p;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    if (gold.sentences[i].size() != pred.sentences[i].size())
      throw DataError("scorer: sentence " + std::to_string(i + 1) + " has " +
                      std::to_string(gold.sentences[i].size()) + " gold tokens vs " +
                      std::to_string(pred.sentences[i].size()) + " predicted");
    tokens += gold.sentences[i].size();
    g.push_back(extract_spans(gold.sentences[i]));
    p.push_back(extract_spans(pred.sentences[i]));
  }
  F1Report r = score_spans(g, p);
  r.tokens = tokens;
  return r;
}

/// conlleval-like fixed-format report.
inline std::string format_report(const F1Report& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "processed " << r.tokens << " tokens with " << r.overall.gold << " phrases; found: " << r.overall.predicted
     << " phrases; correct: " << r.overall.correct << ".\n";
  auto line = [&](std::string_view label, const Score& s) {
    os << std::setw(8) << label << "  precision: " << std::setw(6) << s.precision << "%; recall: " << std::setw(6)
       << s.recall << "%; FB1: " << std::setw(6) << s.f1 << "  " << s.predicted << '\n';
  };
  line("overall", r.overall);
  for (EntityType t : kEntityTypes) line(to_string(t), r.per_type[static_cast<std::size_t>(t)]);
  return os.str();
}

inline std::string format_report_kv(const F1Report& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto emit = [&](std::string_view label, const Score& s) {
    os << label << ".precision=" << s.precision << '\n'
       << label << ".recall=" << s.recall << '\n'
       << label << ".f1=" << s.f1 << '\n'
       << label << ".gold=" << s.gold << '\n'
       << label << ".predicted=" << s.predicted << '\n'
       << label << ".correct=" << s.correct << '\n';
  };
  emit("overall", r.overall);
  for (EntityType t : kEntityTypes) emit(to_string(t), r.per_type[static_cast<std::size_t>(t)]);
  return os.str();
}

struct JointSentence {
  std::string language;
  Sentence sentence;
};

/// Sentences of one or two languages in training order.
struct JointCorpus {
  TagScheme scheme = TagScheme::IOBES;
  std::vector<JointSentence> sentences;

  std::size_t size() const noexcept { return sentences.size(); }
  bool empty() const noexcept { return sentences.empty(); }
};

inline JointCorpus merge_shuffle(const Corpus& a, const Corpus& b, std::uint64_t seed) {
  if (a.scheme != b.scheme && !b.sentences.empty() && !a.sentences.empty())
    throw ConfigError("merge: scheme mismatch (" + to_string(a.scheme) + " vs " + to_string(b.scheme) + ")");
  JointCorpus j;
  j.scheme = a.sentences.empty() ? b.scheme : a.scheme;
  for (const auto& s : a.sentences) j.sentences.push_back({a.language, s});
  for (const auto& s : b.sentences) j.sentences.push_back({b.language, s});
  Rng rng = substream(seed, "merge");
  std::shuffle(j.sentences.begin(), j.sentences.end(), rng);
  return j;
}

inline JointCorpus merge_shuffle(const Corpus& a, std::uint64_t seed) {
  Corpus empty;
  empty.language = "";
  empty.scheme = a.scheme;
  return merge_shuffle(a, empty, seed);
}

/// round(fraction·N) sentences chosen as a prefix of a seeded permutation,
/// kept in original order. Smaller fractions under one seed give subsets.
inline Corpus subsample(const Corpus& c, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("subsample: fraction must lie in (0, 1], got " + std::to_string(fraction));
  if (fraction == 1.0) return c;
  std::vector<std::size_t> idx(c.sentences.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = substream(seed, "subsample");
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Corpus out;
  out.language = c.language;
  out.scheme = c.scheme;
  for (std::size_t i : idx) out.sentences.push_back(c.sentences[i]);
  return out;
}

}  // namespace xner

#endif  // XNER_CORPUS_HPP_
