#ifndef XNER_LEXICON_HPP_
#define XNER_LEXICON_HPP_

// Word-level input: lowercased embedding lookup, per-language projection, and
// the [embedding, char-CNN] input vector.

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "xner/autodiff.hpp"
#include "xner/charcnn.hpp"
#include "xner/corpus.hpp"
#include "xner/random.hpp"
#include "xner/utf8.hpp"

namespace xner {

/// Lowercased word -> row. Row 0 is UNK.
class WordVocab {
 public:
  static constexpr std::size_t kUnk = 0;

  std::size_t size() const noexcept { return words_.size() + 1; }

  /// Adds the lowercased key if absent; returns its row.
  std::size_t add(std::string_view word) {
    std::string key = utf8::lowercase(word);
    if (auto it = index_.find(key); it != index_.end()) return it->second;
    words_.push_back(key);
    index_.emplace(std::move(key), words_.size());
    return words_.size();
  }

  bool contains(std::string_view word) const { return index_.count(utf8::lowercase(word)) > 0; }

  std::size_t lookup(std::string_view word) const {
    auto it = index_.find(utf8::lowercase(word));
    return it == index_.end() ? kUnk : it->second;
  }

  /// Words in row order, UNK excluded.
  const std::vector<std::string>& words() const noexcept { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Result of reading an embedding file: vocab plus a [|V| × d] table whose
/// row 0 is the UNK vector.
struct Embeddings {
  WordVocab vocab;
  ad::Tensor table;

  std::size_t dim() const noexcept { return table.cols(); }
};

inline double unk_init_bound(std::size_t dim) { return 0.25 / std::sqrt(static_cast<double>(dim)); }

namespace detail {

inline bool is_integer(std::string_view s) {
  if (s.empty()) return false;
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

inline ad::Real parse_real(std::string_view s, std::size_t line_no) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError("embeddings line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  return static_cast<ad::Real>(v);
}

}  // namespace detail

/// Text embeddings: optional "count dim" header, then "word v1 ... vd" per
/// line. Keys are lowercased; the first occurrence of a key wins. The UNK row
/// is drawn from uniform(±0.25/√d) using `seed`.
inline Embeddings load_embeddings(std::string_view text, std::uint64_t seed) {
  std::vector<std::pair<std::string, std::vector<ad::Real>>> rows;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first = true;
  WordVocab vocab;
  std::vector<ad::Real> values;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (fields.size() == 2 && detail::is_integer(fields[0]) && detail::is_integer(fields[1])) continue;
    }
    const std::size_t d = fields.size() - 1;
    if (d == 0) throw DataError("embeddings line " + std::to_string(line_no) + ": no vector values");
    if (dim == 0) dim = d;
    if (d != dim)
      throw DataError("embeddings line " + std::to_string(line_no) + ": dimension " + std::to_string(d) +
                      ", expected " + std::to_string(dim));
    if (vocab.contains(fields[0])) continue;
    vocab.add(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(detail::parse_real(fields[i], line_no));
  }
  if (dim == 0) throw DataError("embeddings file is empty");
  Embeddings e;
  e.vocab = std::move(vocab);
  e.table = ad::Tensor({e.vocab.size(), dim});
  Rng rng = substream(seed, "unk");
  const double a = unk_init_bound(dim);
  std::uniform_real_distribution<double> u(-a, a);
  for (auto& v : e.table.row(WordVocab::kUnk)) v = static_cast<ad::Real>(u(rng));
  std::copy(values.begin(), values.end(), e.table.data() + dim);
  return e;
}

/// Writes "count dim" and one line per non-UNK word with shortest
/// round-trip number formatting.
inline void save_embeddings(std::ostream& os, const WordVocab& vocab, const ad::Tensor& table) {
  os << vocab.words().size() << ' ' << table.cols() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < vocab.words().size(); ++i) {
    os << vocab.words()[i];
    for (ad::Real v : table.row(i + 1)) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<double>(v));
      os << ' ' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    os << '\n';
  }
}

/// Trainable embedding table for one vocabulary.
struct EmbeddingTable {
  WordVocab vocab;
  ad::Param table;

  EmbeddingTable(std::string name, WordVocab v, std::size_t dim)
      : vocab(std::move(v)), table(std::move(name), ad::Tensor({vocab.size(), dim})) {}

  std::size_t dim() const noexcept { return table.value.cols(); }
};

enum class ProjectionMode { identity, learned };

/// Per-language affine map d_emb -> d_emb, identity-initialized.
struct LanguageProjection {
  ProjectionMode mode = ProjectionMode::identity;
  std::optional<ad::Param> matrix;
  std::optional<ad::Param> bias;

  LanguageProjection() = default;
  LanguageProjection(const std::string& prefix, ProjectionMode m, std::size_t dim) : mode(m) {
    if (mode == ProjectionMode::learned) {
      ad::Tensor eye({dim, dim});
      for (std::size_t i = 0; i < dim; ++i) eye.at(i, i) = 1;
      matrix.emplace(prefix + ".matrix", std::move(eye));
      bias.emplace(prefix + ".bias", ad::Tensor({dim}));
    }
  }

  ad::Var apply(ad::Tape& tape, ad::Var x) {
    if (mode == ProjectionMode::identity) return x;
    return ad::add(ad::matmul(tape.param(*matrix), x), tape.param(*bias));
  }
};

/// Embedding of lowercase(word) (UNK row on a miss), projected.
inline ad::Var embed(ad::Tape& tape, std::string_view word, EmbeddingTable& table, LanguageProjection& proj) {
  const ad::Var row = tape.param_row(table.table, table.vocab.lookup(word));
  return proj.apply(tape, row);
}

/// h(x) = [embedding, char features]; the embedding half is case-insensitive,
/// the character half sees the original casing.
inline ad::Var input_vector(ad::Tape& tape, std::string_view word, EmbeddingTable& table, LanguageProjection& proj,
                            FilterBank& bank, const CharVocab& chars) {
  const ad::Var e = embed(tape, word, table, proj);
  const ad::Var c = encode_word(tape, word, bank, chars);
  return ad::concat({e, c});
}

}  // namespace xner

#endif  // XNER_LEXICON_HPP_
