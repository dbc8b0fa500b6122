#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "xner/decoder.hpp"

namespace {

using namespace xner;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Decoder random_decoder(std::size_t T, std::size_t D, std::mt19937_64& rng, double scale = 1.0) {
  Decoder d("d", T, D);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : d.W.value.values()) v = u(rng);
  for (auto& v : d.A.value.values()) v = u(rng);
  return d;
}

std::vector<Tensor> random_inputs(std::size_t n, std::size_t D, std::mt19937_64& rng) {
  std::vector<Tensor> g;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t({D});
    for (auto& v : t.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    g.push_back(t);
  }
  return g;
}

std::vector<std::vector<double>> raw(const std::vector<Tensor>& g) {
  std::vector<std::vector<double>> out;
  for (const auto& t : g) out.emplace_back(t.storage().begin(), t.storage().end());
  return out;
}

TEST(TagSet, SchemeOrder) {
  const TagSet io = TagSet::for_scheme(TagScheme::IO);
  EXPECT_EQ(io.labels(), (std::vector<std::string>{"O", "I-PER", "I-LOC", "I-ORG", "I-MISC"}));
  EXPECT_EQ(TagSet::for_scheme(TagScheme::IOBES).size(), 17u);
  EXPECT_EQ(TagSet::for_scheme(TagScheme::IOB1).size(), 9u);
  EXPECT_EQ(io.start(), 5u);
  EXPECT_EQ(io.index("I-ORG"), 3u);
  EXPECT_THROW(io.index("B-ORG"), DataError);
}

TEST(StepLogProbs, ZeroParamsAreUniform) {
  Decoder d("d", 5, 4);
  const Tensor lp = step_log_probs(d, Tensor::vector({1, 2, 3, 4}), d.start());
  for (double v : lp.values()) EXPECT_DOUBLE_EQ(v, -std::log(5.0));
}

TEST(StepLogProbs, ShiftInvariantInTransitionRow) {
  std::mt19937_64 rng(1);
  Decoder d = random_decoder(4, 3, rng);
  const Tensor g = random_inputs(1, 3, rng)[0];
  const Tensor before = step_log_probs(d, g, 2);
  for (auto& v : d.A.value.row(2)) v += 3.25;
  const Tensor after = step_log_probs(d, g, 2);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(after[t], before[t], 1e-12);
}

TEST(StepLogProbs, NormalizedAndMatchesOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Decoder d = random_decoder(5, 4, rng, 3.0);
    const Tensor g = random_inputs(1, 4, rng)[0];
    for (std::size_t prev = 0; prev <= d.tags; ++prev) {
      const Tensor lp = step_log_probs(d, g, prev);
      double s = 0;
      for (double v : lp.values()) s += std::exp(v);
      EXPECT_NEAR(s, 1.0, 1e-12);
      const auto ref = oracle::local_log_probs(d, raw({g})[0], prev);
      for (std::size_t t = 0; t < d.tags; ++t) EXPECT_NEAR(lp[t], ref[t], 1e-12);
    }
  }
}

TEST(StepLogProbs, TapedAndTapeFreeAgreeBitwise) {
  std::mt19937_64 rng(3);
  Decoder d = random_decoder(6, 5, rng);
  const Tensor g = random_inputs(1, 5, rng)[0];
  Tape t;
  EXPECT_EQ(step_log_probs(t, d, t.constant(g), 3).value(), step_log_probs(d, g, 3));
}

TEST(StepLogProbs, PrevOutOfRangeRejected) {
  Decoder d("d", 3, 2);
  EXPECT_THROW(step_log_probs(d, Tensor({2}), 4), ConfigError);
}

TEST(SentenceNll, ZeroParamsGiveNLogT) {
  Decoder d("d", 7, 2);
  Tape t;
  std::vector<Var> g(4, t.constant(Tensor({2})));
  const std::vector<std::size_t> y{0, 3, 6, 1};
  EXPECT_NEAR(sentence_nll(t, d, g, y).value()[0], 4 * std::log(7.0), 1e-12);
}

TEST(SentenceNll, LengthMismatchRejected) {
  Decoder d("d", 3, 2);
  Tape t;
  std::vector<Var> g(2, t.constant(Tensor({2})));
  EXPECT_THROW(sentence_nll(t, d, g, std::vector<std::size_t>{0}), ConfigError);
}

TEST(SentenceNll, MatchesEnumerationAndIsNonNegative) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t T = 1 + rng() % 4, n = 1 + rng() % 5, D = 3;
    Decoder d = random_decoder(T, D, rng, 2.0);
    const auto g = random_inputs(n, D, rng);
    const auto all = oracle::enumerate(d, raw(g));
    double total = 0;
    for (const auto& e : all) total += std::exp(e.log_prob);
    EXPECT_NEAR(total, 1.0, 1e-9);
    const auto& pick = all[rng() % all.size()];
    Tape t;
    std::vector<Var> gv;
    for (const auto& x : g) gv.push_back(t.constant(x));
    const double nll = sentence_nll(t, d, gv, pick.seq).value()[0];
    EXPECT_GE(nll, 0.0);
    EXPECT_NEAR(nll, -pick.log_prob, 1e-10);
  }
}

TEST(SentenceNll, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Decoder d = random_decoder(4, 3, rng);
  ad::Param g("g", Tensor({3, 3}));
  for (auto& v : g.value.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::vector<ad::Param*> ps{&d.W, &d.A, &g};
  const std::vector<std::size_t> y{2, 2, 0};
  auto loss = [&](Tape& t) {
    std::vector<Var> gv;
    for (std::size_t i = 0; i < 3; ++i) gv.push_back(t.param_row(g, i));
    return sentence_nll(t, d, gv, y);
  };
  EXPECT_LT(ad::gradient_check(loss, ps, 1e-5), 1e-4);
}

TEST(Decode, SingleTagScoresZero) {
  std::mt19937_64 rng(6);
  Decoder d = random_decoder(1, 2, rng);
  const auto r = decode(d, random_inputs(4, 2, rng));
  EXPECT_EQ(r.tags, std::vector<std::size_t>(4, 0));
  EXPECT_EQ(r.score, 0.0);
}

TEST(Decode, ZeroParamsTieToIndexZero) {
  Decoder d("d", 5, 2);
  std::mt19937_64 rng(7);
  EXPECT_EQ(decode(d, random_inputs(6, 2, rng)).tags, std::vector<std::size_t>(6, 0));
}

TEST(Decode, MatchesExhaustiveArgmax) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 5, n = 1 + rng() % 6, D = 3;
    Decoder d = random_decoder(T, D, rng, 2.0);
    const auto g = random_inputs(n, D, rng);
    const auto best = oracle::brute_force_argmax(d, raw(g));
    const auto got = decode(d, g);
    EXPECT_EQ(got.tags, best.seq) << "trial " << trial;
    EXPECT_NEAR(got.score, best.log_prob, 1e-9);
    EXPECT_NEAR(got.score, sequence_log_prob(d, g, got.tags), 1e-9);
  }
}

TEST(Decode, TiesResolvedLikeOracle) {
  // Quantized parameters create many exact ties.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 2 + rng() % 3, n = 1 + rng() % 4;
    Decoder d("d", T, 1);
    for (auto& v : d.A.value.values()) v = static_cast<double>(rng() % 2);
    std::vector<Tensor> g(n, Tensor::vector({0.0}));
    EXPECT_EQ(decode(d, g).tags, oracle::brute_force_argmax(d, raw(g), 1e-12).seq) << "trial " << trial;
  }
}

TEST(Decode, ScoreDominatesAnyLabeling) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    Decoder d = random_decoder(5, 4, rng);
    const auto g = random_inputs(7, 4, rng);
    const auto best = decode(d, g);
    std::vector<std::size_t> y(7);
    for (auto& v : y) v = rng() % 5;
    EXPECT_GE(best.score, sequence_log_prob(d, g, y));
    EXPECT_GE(best.score, decode_greedy(d, g).score - 1e-12);
  }
}

}  // namespace
