#ifndef XNER_CHARCNN_HPP_
#define XNER_CHARCNN_HPP_

// Character-level word features: one-hot character matrix, convolution with
// filters of width 1..n, tanh, max over positions.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "xner/autodiff.hpp"
#include "xner/random.hpp"
#include "xner/utf8.hpp"

namespace xner {

/// Case-sensitive character inventory with reserved PAD (0) and UNK (1).
class CharVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  CharVocab() = default;
  explicit CharVocab(const std::set<char32_t>& chars) : chars_(chars.begin(), chars.end()) { reindex(); }
  explicit CharVocab(std::vector<char32_t> sorted_chars) : chars_(std::move(sorted_chars)) { reindex(); }

  template <typename Words>
  static CharVocab from_words(const Words& words) {
    std::set<char32_t> s;
    for (const auto& w : words)
      for (char32_t c : utf8::decode(w)) s.insert(c);
    return CharVocab(s);
  }

  std::size_t size() const noexcept { return chars_.size() + 2; }
  std::size_t index(char32_t c) const {
    auto it = index_.find(c);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::vector<char32_t>& chars() const noexcept { return chars_; }

  friend bool operator==(const CharVocab& a, const CharVocab& b) { return a.chars_ == b.chars_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < chars_.size(); ++i) index_[chars_[i]] = i + 2;
  }

  std::vector<char32_t> chars_;
  std::map<char32_t, std::size_t> index_;
};

/// k×|C| matrix with one 1.0 per row. Unseen characters map to UNK.
inline ad::Tensor one_hot(std::string_view word, const CharVocab& vocab) {
  const auto cps = utf8::decode(word);
  if (cps.empty()) throw ConfigError("one_hot: empty word");
  ad::Tensor m({cps.size(), vocab.size()});
  for (std::size_t r = 0; r < cps.size(); ++r) m.at(r, vocab.index(cps[r])) = 1;
  return m;
}

/// Filters of widths 1..max_width; width w has counts[w-1] filters, stored as
/// one [count × w·|C|] weight matrix plus a bias vector.
class FilterBank {
 public:
  FilterBank(std::string prefix, std::vector<std::size_t> counts, std::size_t alphabet) : alphabet_(alphabet) {
    if (counts.empty()) throw ConfigError("filter bank needs at least width 1");
    for (std::size_t w = 1; w <= counts.size(); ++w) {
      const std::size_t k = counts[w - 1];
      if (k == 0) throw ConfigError("filter bank: width " + std::to_string(w) + " has no filters");
      weights_.emplace_back(prefix + ".w" + std::to_string(w) + ".weight", ad::Tensor({k, w * alphabet}));
      biases_.emplace_back(prefix + ".w" + std::to_string(w) + ".bias", ad::Tensor({k}));
    }
  }

  std::size_t max_width() const noexcept { return weights_.size(); }
  std::size_t alphabet() const noexcept { return alphabet_; }
  std::size_t count(std::size_t width) const { return weights_.at(width - 1).value.rows(); }
  std::size_t output_dim() const {
    std::size_t d = 0;
    for (const auto& w : weights_) d += w.value.rows();
    return d;
  }

  ad::Param& weight(std::size_t width) { return weights_.at(width - 1); }
  ad::Param& bias(std::size_t width) { return biases_.at(width - 1); }
  const ad::Param& weight(std::size_t width) const { return weights_.at(width - 1); }
  const ad::Param& bias(std::size_t width) const { return biases_.at(width - 1); }

  /// Weights uniform in ±sqrt(6 / (w + k_w)) (a one-hot window has w active
  /// inputs); biases zero.
  void initialize(Rng& rng) {
    for (std::size_t w = 1; w <= max_width(); ++w) {
      auto& W = weight(w).value;
      const double a = std::sqrt(6.0 / static_cast<double>(w + W.rows()));
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& v : W.values()) v = static_cast<ad::Real>(u(rng));
      bias(w).value.fill(0);
    }
  }

  std::vector<ad::Param*> params() {
    std::vector<ad::Param*> out;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      out.push_back(&weights_[i]);
      out.push_back(&biases_[i]);
    }
    return out;
  }

 private:
  std::size_t alphabet_;
  std::vector<ad::Param> weights_;
  std::vector<ad::Param> biases_;
};

/// Pooled convolution features of one word, [d₁]. Width-w filters see w−1
/// PAD positions on each side; PAD rows are zero, so only real characters
/// contribute to dot products. Output order is width-major, filter-minor.
inline ad::Var encode_word(ad::Tape& tape, std::string_view word, FilterBank& bank, const CharVocab& vocab) {
  if (bank.alphabet() != vocab.size())
    throw ConfigError("filter bank alphabet " + std::to_string(bank.alphabet()) + " != char vocab size " +
                      std::to_string(vocab.size()));
  const ad::Var m = tape.constant(one_hot(word, vocab));
  std::vector<ad::Var> pooled;
  pooled.reserve(bank.max_width());
  for (std::size_t w = 1; w <= bank.max_width(); ++w) {
    const ad::Var conv = ad::conv1d(m, tape.param(bank.weight(w)), tape.param(bank.bias(w)), w, w - 1);
    pooled.push_back(ad::max_over_rows(ad::tanh(conv)));
  }
  return ad::concat(pooled);
}

}  // namespace xner

#endif  // XNER_CHARCNN_HPP_
