#ifndef XNER_DECODER_HPP_
#define XNER_DECODER_HPP_

// Locally normalized tag decoder: at each position a softmax over tags of
// W·g_i + A[prev], where prev is the previous tag or a synthetic START.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "xner/autodiff.hpp"
#include "xner/corpus.hpp"
#include "xner/random.hpp"

namespace xner {

/// Ordered tag labels; index size() denotes START.
class TagSet {
 public:
  TagSet() = default;
  explicit TagSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (!index_.emplace(labels_[i], i).second) throw ConfigError("duplicate tag label '" + labels_[i] + "'");
  }

  /// "O" first, then every prefix of the scheme for PER, LOC, ORG, MISC.
  static TagSet for_scheme(TagScheme scheme) {
    std::vector<std::string> labels{"O"};
    for (EntityType t : kEntityTypes)
      for (char p : scheme_prefixes(scheme)) labels.push_back(format_tag({p, t}));
    return TagSet(std::move(labels));
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t start() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::size_t index(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw DataError("tag '" + label + "' is not in the tag set");
    return it->second;
  }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> index_;
};

struct Decoder {
  std::size_t tags;
  ad::Param W;  // [|T| × 2H]
  ad::Param A;  // [(|T|+1) × |T|], row = previous tag (last row START), column = current tag

  Decoder(const std::string& prefix, std::size_t num_tags, std::size_t input_dim)
      : tags(num_tags),
        W(prefix + ".W", ad::Tensor({num_tags, input_dim})),
        A(prefix + ".A", ad::Tensor({num_tags + 1, num_tags})) {}

  std::size_t start() const noexcept { return tags; }
  std::size_t input_dim() const noexcept { return W.value.cols(); }

  void initialize(Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(W.value.rows() + W.value.cols()));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : W.value.values()) v = static_cast<ad::Real>(u(rng));
    A.value.fill(0);
  }

  std::vector<ad::Param*> params() { return {&W, &A}; }
};

namespace detail {
inline void check_prev(const Decoder& d, std::size_t prev) {
  if (prev > d.tags)
    throw ConfigError("previous tag " + std::to_string(prev) + " out of range [0, " + std::to_string(d.tags) + "]");
}
}  // namespace detail

/// log P(· | g_i, prev) as a taped op.
inline ad::Var step_log_probs(ad::Tape& tape, Decoder& d, ad::Var g, std::size_t prev) {
  detail::check_prev(d, prev);
  return ad::log_softmax(ad::add(ad::matmul(tape.param(d.W), g), tape.param_row(d.A, prev)));
}

/// Tape-free version; bit-identical to the taped op.
inline ad::Tensor step_log_probs(const Decoder& d, const ad::Tensor& g, std::size_t prev) {
  detail::check_prev(d, prev);
  if (g.size() != d.input_dim())
    throw ConfigError("decoder input " + ad::shape_str(g.shape()) + ", expected [" + std::to_string(d.input_dim()) + "]");
  ad::Tensor s({d.tags});
  ad::kernels::matvec(d.W.value, g.values(), s.values());
  const auto a = d.A.value.row(prev);
  for (std::size_t t = 0; t < d.tags; ++t) s[t] = s[t] + a[t];
  ad::Tensor out({d.tags});
  ad::kernels::log_softmax(s.values(), out.values());
  return out;
}

/// −Σ_i log P(y_i | g_i, y_{i−1}) with y_0 = START.
inline ad::Var sentence_nll(ad::Tape& tape, Decoder& d, std::span<const ad::Var> g, std::span<const std::size_t> y) {
  if (g.size() != y.size())
    throw ConfigError("sentence_nll: " + std::to_string(g.size()) + " positions vs " + std::to_string(y.size()) +
                      " tags");
  if (g.empty()) throw ConfigError("sentence_nll: empty sentence");
  std::vector<ad::Var> terms;
  terms.reserve(g.size());
  std::size_t prev = d.start();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (y[i] >= d.tags) throw ConfigError("sentence_nll: tag index " + std::to_string(y[i]) + " out of range");
    terms.push_back(ad::pick(step_log_probs(tape, d, g[i], prev), y[i]));
    prev = y[i];
  }
  return ad::scale(ad::add_n(terms), -1);
}

/// Σ_i log P(y_i | g_i, y_{i−1}), accumulated left to right.
inline ad::Real sequence_log_prob(const Decoder& d, std::span<const ad::Tensor> g, std::span<const std::size_t> y) {
  ad::Real s = 0;
  std::size_t prev = d.start();
  for (std::size_t i = 0; i < g.size(); ++i) {
    s += step_log_probs(d, g[i], prev)[y[i]];
    prev = y[i];
  }
  return s;
}

struct Decoded {
  std::vector<std::size_t> tags;
  ad::Real score = 0;
};

/// Scores closer than this are ties; exact real-number ties otherwise come out
/// an ulp apart depending on summation order.
inline constexpr ad::Real kTieTolerance = 1e-12;

/// Exact Viterbi argmax. Ties go to the smallest index, both for the final
/// tag and at every backpointer, i.e. among equally scored sequences the one
/// that is smallest when compared from the last position backwards.
inline Decoded decode(const Decoder& d, std::span<const ad::Tensor> g) {
  if (g.empty()) return {};
  const std::size_t n = g.size(), T = d.tags;
  std::vector<ad::Real> delta = step_log_probs(d, g[0], d.start()).storage();
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(T, 0));
  std::vector<ad::Real> next(T);
  for (std::size_t i = 1; i < n; ++i) {
    std::vector<ad::Tensor> lp;
    lp.reserve(T);
    for (std::size_t p = 0; p < T; ++p) lp.push_back(step_log_probs(d, g[i], p));
    for (std::size_t t = 0; t < T; ++t) {
      std::size_t best_p = 0;
      ad::Real best = delta[0] + lp[0][t];
      for (std::size_t p = 1; p < T; ++p) {
        const ad::Real v = delta[p] + lp[p][t];
        if (v > best + kTieTolerance) {
          best = v;
          best_p = p;
        }
      }
      next[t] = best;
      back[i][t] = best_p;
    }
    delta.swap(next);
  }
  Decoded out;
  out.tags.assign(n, 0);
  std::size_t last = 0;
  for (std::size_t t = 1; t < T; ++t)
    if (delta[t] > delta[last] + kTieTolerance) last = t;
  out.score = delta[last];
  out.tags[n - 1] = last;
  for (std::size_t i = n - 1; i > 0; --i) out.tags[i - 1] = back[i][out.tags[i]];
  return out;
}

/// Left-to-right argmax of each local distribution; debugging aid only.
inline Decoded decode_greedy(const Decoder& d, std::span<const ad::Tensor> g) {
  Decoded out;
  std::size_t prev = d.start();
  for (const auto& gi : g) {
    const ad::Tensor lp = step_log_probs(d, gi, prev);
    std::size_t best = 0;
    for (std::size_t t = 1; t < d.tags; ++t)
      if (lp[t] > lp[best]) best = t;
    out.tags.push_back(best);
    out.score += lp[best];
    prev = best;
  }
  return out;
}

}  // namespace xner

#endif  // XNER_DECODER_HPP_
