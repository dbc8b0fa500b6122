#ifndef XNER_MODEL_HPP_
#define XNER_MODEL_HPP_

// Full tagger: char-CNN + embeddings -> BiLSTM -> decoder, for one or two
// languages. Components shared between languages are one object referenced
// from both language slots.

#include <algorithm>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xner/autodiff.hpp"
#include "xner/bilstm.hpp"
#include "xner/charcnn.hpp"
#include "xner/corpus.hpp"
#include "xner/decoder.hpp"
#include "xner/lexicon.hpp"

namespace xner {

struct SharingConfig {
  bool share_filters = true;
  bool share_decoder = true;
  bool share_lstm = true;  // always true in joint models
  bool shared_embedding_space = false;

  friend bool operator==(const SharingConfig&, const SharingConfig&) = default;
};

struct Hyperparams {
  std::size_t lstm_size = 100;
  std::size_t max_filter_width = 4;
  std::size_t filters_per_width = 10;
  double learning_rate = 0.05;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  std::size_t emb_dim = 200;  // used when no pre-trained embeddings are given
  double clip_norm = 5.0;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Everything needed to rebuild a model's structure (but not its values).
struct ModelSpec {
  std::size_t lstm_size = 100;
  std::size_t max_filter_width = 4;
  std::size_t filters_per_width = 10;
  std::size_t emb_dim = 200;
  SharingConfig sharing;
  TagScheme scheme = TagScheme::IOBES;
  std::vector<std::string> languages;
  ProjectionMode projection = ProjectionMode::identity;
  std::vector<char32_t> chars;
  std::vector<std::vector<std::string>> tables;  // words per embedding table, UNK excluded
  std::vector<std::size_t> table_of;             // language -> table

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LanguageSlot {
  std::string name;
  std::shared_ptr<FilterBank> filters;
  std::shared_ptr<EmbeddingTable> table;
  std::shared_ptr<LanguageProjection> projection;
  std::shared_ptr<BiLstm> lstm;
  std::shared_ptr<Decoder> decoder;
};

class Model {
 public:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)), chars_(spec_.chars), tags_(TagSet::for_scheme(spec_.scheme)) {
    const std::size_t L = spec_.languages.size();
    if (L == 0 || L > 2) throw ConfigError("a model covers one or two languages, got " + std::to_string(L));
    if (spec_.table_of.size() != L) throw ConfigError("model spec: table assignment does not match languages");
    if (L == 2 && !spec_.sharing.share_lstm) throw ConfigError("joint models always share the LSTM");
    for (std::size_t t = 0; t < spec_.tables.size(); ++t) {
      WordVocab v;
      for (const auto& w : spec_.tables[t]) v.add(w);
      if (v.words().size() != spec_.tables[t].size()) throw ConfigError("model spec: duplicate word in table");
      const std::string name = spec_.tables.size() == 1 ? "emb" : spec_.languages[t] + "/emb";
      tables_.push_back(std::make_shared<EmbeddingTable>(name, std::move(v), spec_.emb_dim));
    }
    const std::vector<std::size_t> counts(spec_.max_filter_width, spec_.filters_per_width);
    for (std::size_t i = 0; i < L; ++i) {
      LanguageSlot s;
      s.name = spec_.languages[i];
      if (spec_.table_of[i] >= tables_.size()) throw ConfigError("model spec: table index out of range");
      s.table = tables_[spec_.table_of[i]];
      const bool share_f = L == 1 || spec_.sharing.share_filters;
      const bool share_d = L == 1 || spec_.sharing.share_decoder;
      if (i > 0 && share_f)
        s.filters = slots_[0].filters;
      else
        s.filters = std::make_shared<FilterBank>(qualify("filters", i, share_f), counts, chars_.size());
      s.projection = std::make_shared<LanguageProjection>(qualify("proj", i, false), spec_.projection, spec_.emb_dim);
      const std::size_t d_in = spec_.emb_dim + s.filters->output_dim();
      if (i > 0)
        s.lstm = slots_[0].lstm;
      else
        s.lstm = std::make_shared<BiLstm>("lstm", d_in, spec_.lstm_size);
      if (i > 0 && share_d)
        s.decoder = slots_[0].decoder;
      else
        s.decoder = std::make_shared<Decoder>(qualify("decoder", i, share_d), tags_.size(), 2 * spec_.lstm_size);
      slots_.push_back(std::move(s));
    }
    if (std::set<std::string>(spec_.languages.begin(), spec_.languages.end()).size() != L)
      throw ConfigError("model spec: duplicate language name");
    rebuild_registry();
  }

  // Copies would alias every component with the original.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// Seeded initialization. Every component draws from its own substream,
  /// keyed by component kind and owning language slot, so adding a second
  /// language never changes the first language's initial values.
  void initialize(std::uint64_t seed) {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      auto& s = slots_[i];
      if (i == 0 || s.filters != slots_[0].filters) {
        Rng r = substream(seed, "filters", i);
        s.filters->initialize(r);
      }
      if (i == 0) {
        Rng r = substream(seed, "lstm", 0);
        s.lstm->forward.initialize(r);
        s.lstm->backward.initialize(r);
      }
      if (i == 0 || s.decoder != slots_[0].decoder) {
        Rng r = substream(seed, "decoder", i);
        s.decoder->initialize(r);
      }
    }
    for (std::size_t t = 0; t < tables_.size(); ++t) {
      Rng r = substream(seed, "emb", t);
      const double a = unk_init_bound(spec_.emb_dim);
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& v : tables_[t]->table.value.values()) v = static_cast<ad::Real>(u(r));
    }
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  const TagSet& tags() const noexcept { return tags_; }
  const CharVocab& chars() const noexcept { return chars_; }
  std::size_t num_languages() const noexcept { return slots_.size(); }

  std::size_t language_index(const std::string& lang) const {
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].name == lang) return i;
    throw ConfigError("unknown language '" + lang + "'");
  }
  LanguageSlot& slot(const std::string& lang) { return slots_[language_index(lang)]; }
  const LanguageSlot& slot(const std::string& lang) const { return slots_[language_index(lang)]; }
  LanguageSlot& slot(std::size_t i) { return slots_.at(i); }
  const LanguageSlot& slot(std::size_t i) const { return slots_.at(i); }
  std::vector<std::shared_ptr<EmbeddingTable>>& tables() noexcept { return tables_; }

  /// Every parameter exactly once, in a fixed order.
  const std::vector<ad::Param*>& params() const noexcept { return registry_; }

  ad::Param* find(const std::string& name) const {
    for (ad::Param* p : registry_)
      if (p->name == name) return p;
    return nullptr;
  }

  /// Parameters a sentence of `lang` can reach.
  std::vector<ad::Param*> params_of(const std::string& lang) {
    std::vector<ad::Param*> out;
    collect(slot(lang), out);
    return out;
  }

  std::vector<ad::Var> inputs(ad::Tape& tape, const Sentence& s, const std::string& lang) {
    LanguageSlot& sl = slot(lang);
    std::vector<ad::Var> xs;
    xs.reserve(s.size());
    for (const auto& tok : s.tokens)
      xs.push_back(input_vector(tape, tok.surface, *sl.table, *sl.projection, *sl.filters, chars_));
    return xs;
  }

  /// BiLSTM outputs g_1..g_n.
  std::vector<ad::Var> encode(ad::Tape& tape, const Sentence& s, const std::string& lang) {
    const auto xs = inputs(tape, s, lang);
    return encode_sentence(tape, *slot(lang).lstm, xs);
  }

  std::vector<std::size_t> tag_indices(const Sentence& s) const {
    std::vector<std::size_t> y;
    y.reserve(s.size());
    for (const auto& tok : s.tokens) y.push_back(tags_.index(tok.tag));
    return y;
  }

  ad::Var nll(ad::Tape& tape, const Sentence& s, const std::string& lang) {
    const auto g = encode(tape, s, lang);
    const auto y = tag_indices(s);
    return sentence_nll(tape, *slot(lang).decoder, g, y);
  }

  /// Forward pass without gradients; only reads parameter values.
  std::vector<ad::Tensor> features(const Sentence& s, const std::string& lang) const {
    ad::Tape tape;
    const auto g = const_cast<Model*>(this)->encode(tape, s, lang);
    std::vector<ad::Tensor> out;
    out.reserve(g.size());
    for (const auto& v : g) out.push_back(v.value());
    return out;
  }

  Decoded predict(const Sentence& s, const std::string& lang, bool greedy = false) const {
    if (s.tokens.empty()) return {};
    const auto g = features(s, lang);
    const Decoder& d = *slot(lang).decoder;
    return greedy ? decode_greedy(d, g) : decode(d, g);
  }

  std::vector<std::string> predict_labels(const Sentence& s, const std::string& lang) const {
    std::vector<std::string> out;
    for (std::size_t t : predict(s, lang).tags) out.push_back(tags_.label(t));
    return out;
  }

 private:
  std::string qualify(const std::string& component, std::size_t lang, bool shared) const {
    if (shared || spec_.languages.size() == 1) return component;
    return spec_.languages[lang] + "/" + component;
  }

  static void collect(LanguageSlot& s, std::vector<ad::Param*>& out) {
    auto push = [&](ad::Param* p) {
      if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    };
    for (auto* p : s.filters->params()) push(p);
    push(&s.table->table);
    if (s.projection->matrix) {
      push(&*s.projection->matrix);
      push(&*s.projection->bias);
    }
    for (auto* p : s.lstm->params()) push(p);
    for (auto* p : s.decoder->params()) push(p);
  }

  void rebuild_registry() {
    registry_.clear();
    for (auto& s : slots_) collect(s, registry_);
    for (auto& t : tables_) {
      if (std::find(registry_.begin(), registry_.end(), &t->table) == registry_.end()) registry_.push_back(&t->table);
    }
  }

  ModelSpec spec_;
  CharVocab chars_;
  TagSet tags_;
  std::vector<std::shared_ptr<EmbeddingTable>> tables_;
  std::vector<LanguageSlot> slots_;
  std::vector<ad::Param*> registry_;
};

/// One language's inputs to build_model.
struct LanguageData {
  std::string name;
  const Corpus* train = nullptr;
  const Embeddings* embeddings = nullptr;  // per-language pre-trained vectors
};

/// Assembles and initializes a model. With two languages the LSTM is always
/// shared; learned projections are used only when both languages have
/// training data and separate embedding spaces.
inline Model build_model(const Hyperparams& hp, std::span<const LanguageData> langs, SharingConfig sharing,
                         TagScheme scheme, const Embeddings* shared_embeddings = nullptr) {
  if (langs.empty() || langs.size() > 2)
    throw ConfigError("build_model: need one or two languages, got " + std::to_string(langs.size()));
  for (const auto& l : langs) {
    if (!l.train) throw ConfigError("build_model: language '" + l.name + "' has no training corpus");
    if (l.train->scheme != scheme && !l.train->sentences.empty())
      throw ConfigError("build_model: corpus '" + l.name + "' is " + to_string(l.train->scheme) + ", model is " +
                        to_string(scheme));
  }
  const bool two = langs.size() == 2;
  if (two) sharing.share_lstm = true;
  if (sharing.shared_embedding_space && two) {
    if (langs[0].embeddings || langs[1].embeddings)
      throw ConfigError("build_model: a shared embedding space takes one bilingual embedding file, not per-language files");
  } else if (shared_embeddings && two) {
    throw ConfigError("build_model: bilingual embeddings given but shared_embedding_space is off");
  }

  ModelSpec spec;
  spec.lstm_size = hp.lstm_size;
  spec.max_filter_width = hp.max_filter_width;
  spec.filters_per_width = hp.filters_per_width;
  spec.sharing = sharing;
  spec.scheme = scheme;
  for (const auto& l : langs) spec.languages.push_back(l.name);

  const bool one_table = !two || sharing.shared_embedding_space;
  std::vector<const Embeddings*> sources;
  if (one_table) {
    sources.push_back(shared_embeddings ? shared_embeddings : langs[0].embeddings);
    spec.table_of.assign(langs.size(), 0);
  } else {
    sources = {langs[0].embeddings, langs[1].embeddings};
    spec.table_of = {0, 1};
  }
  std::size_t dim = 0;
  for (const auto* e : sources) {
    if (!e) continue;
    if (dim && e->dim() != dim)
      throw ConfigError("build_model: embedding dimensions differ (" + std::to_string(dim) + " vs " +
                        std::to_string(e->dim()) + ")");
    dim = e->dim();
  }
  spec.emb_dim = dim ? dim : hp.emb_dim;

  const bool both_have_data = two && !langs[0].train->sentences.empty() && !langs[1].train->sentences.empty();
  spec.projection = both_have_data && !sharing.shared_embedding_space ? ProjectionMode::learned
                                                                       : ProjectionMode::identity;

  std::set<char32_t> chars;
  for (const auto& l : langs)
    for (const auto& s : l.train->sentences)
      for (const auto& tok : s.tokens)
        for (char32_t c : utf8::decode(tok.surface)) chars.insert(c);
  spec.chars.assign(chars.begin(), chars.end());

  for (std::size_t t = 0; t < sources.size(); ++t) {
    WordVocab v;
    if (sources[t]) v = sources[t]->vocab;
    std::set<std::string> extra;
    for (std::size_t i = 0; i < langs.size(); ++i) {
      if (spec.table_of[i] != t) continue;
      for (const auto& s : langs[i].train->sentences)
        for (const auto& tok : s.tokens)
          if (!v.contains(tok.surface)) extra.insert(utf8::lowercase(tok.surface));
    }
    for (const auto& w : extra) v.add(w);
    spec.tables.push_back(v.words());
  }

  Model m(std::move(spec));
  m.initialize(hp.seed);
  for (std::size_t t = 0; t < sources.size(); ++t) {
    if (!sources[t]) continue;
    auto& dst = m.tables()[t]->table.value;
    const auto& src = sources[t]->table;
    std::copy(src.data(), src.data() + src.size(), dst.data());
  }
  return m;
}

inline Model build_model(const Hyperparams& hp, std::initializer_list<LanguageData> langs, SharingConfig sharing,
                         TagScheme scheme, const Embeddings* shared_embeddings = nullptr) {
  return build_model(hp, std::span<const LanguageData>(langs.begin(), langs.size()), sharing, scheme,
                     shared_embeddings);
}

}  // namespace xner

#endif  // XNER_MODEL_HPP_
