#include <gtest/gtest.h>

#include <random>

#include "xner/bilstm.hpp"
#include "xner/charcnn.hpp"
#include "xner/decoder.hpp"
#include "xner/lexicon.hpp"

namespace {

using namespace xner;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor random_vec(std::size_t n, std::mt19937_64& rng) {
  Tensor t({n});
  for (auto& v : t.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  return t;
}

std::vector<Var> constants(Tape& t, const std::vector<Tensor>& xs) {
  std::vector<Var> out;
  for (const auto& x : xs) out.push_back(t.constant(x));
  return out;
}

Tensor half(const Tensor& g, std::size_t which, std::size_t H) {
  return Tensor({H}, std::vector<double>(g.data() + which * H, g.data() + (which + 1) * H));
}

TEST(CellStep, ZeroParamsGiveZeroHidden) {
  LstmCell cell("c", 3, 4);
  Tape t;
  const auto s = cell_step(t, cell, t.constant(Tensor::vector({1, -2, 3})), zero_state(t, 4));
  EXPECT_EQ(s.h.value(), Tensor({4}));
}

TEST(CellStep, ForgetBiasInitializedToOne) {
  LstmCell cell("c", 3, 2);
  Rng rng(1);
  cell.initialize(rng);
  EXPECT_EQ(cell.b.value, Tensor::vector({0, 0, 1, 1, 0, 0, 0, 0}));
  const double a = std::sqrt(6.0 / 5.0);
  for (double v : cell.W.value.values()) EXPECT_LE(std::abs(v), a);
}

TEST(CellStep, HiddenStrictlyInsideUnitInterval) {
  LstmCell cell("c", 2, 3);
  std::mt19937_64 rng(4);
  for (auto* p : cell.params())
    for (auto& v : p->value.values()) v = std::uniform_real_distribution<double>(-5, 5)(rng);
  Tape t;
  LstmState s = zero_state(t, 3);
  for (int i = 0; i < 20; ++i) {
    s = cell_step(t, cell, t.constant(random_vec(2, rng)), s);
    for (double v : s.h.value().values()) EXPECT_LT(std::abs(v), 1.0);
    EXPECT_TRUE(s.c.value().all_finite());
  }
}

TEST(CellStep, ShapeMismatchRejected) {
  LstmCell cell("c", 3, 2);
  Tape t;
  EXPECT_THROW(cell_step(t, cell, t.constant(Tensor({4})), zero_state(t, 2)), ConfigError);
  EXPECT_THROW(cell_step(t, cell, t.constant(Tensor({3})), zero_state(t, 3)), ConfigError);
}

TEST(CellStep, ThreeChainedStepsPassGradientCheck) {
  LstmCell cell("c", 3, 2);
  Rng rng(7);
  cell.initialize(rng);
  std::mt19937_64 r2(7);
  for (auto& v : cell.b.value.values()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(r2);
  ad::Param x("x", Tensor({3, 3}));
  for (auto& v : x.value.values()) v = std::uniform_real_distribution<double>(-1, 1)(r2);
  std::vector<ad::Param*> ps{&cell.W, &cell.U, &cell.b, &x};
  auto loss = [&](Tape& t) {
    LstmState s = zero_state(t, 2);
    for (std::size_t i = 0; i < 3; ++i) s = cell_step(t, cell, t.param_row(x, i), s);
    return ad::sum(ad::mul(s.h, t.constant(Tensor::vector({0.7, -1.3}))));
  };
  EXPECT_LT(ad::gradient_check(loss, ps, 1e-5), 1e-4);
}

TEST(EncodeSentence, LengthOneSeesOneInputBothWays) {
  BiLstm net("l", 2, 3);
  Rng rng(2);
  net.forward.initialize(rng);
  net.backward.initialize(rng);
  Tape t;
  const Var x = t.constant(Tensor::vector({0.5, -0.5}));
  const auto g = encode_sentence(t, net, std::vector<Var>{x});
  ASSERT_EQ(g.size(), 1u);
  const Tensor f = cell_step(t, net.forward, x, zero_state(t, 3)).h.value();
  const Tensor b = cell_step(t, net.backward, x, zero_state(t, 3)).h.value();
  EXPECT_EQ(half(g[0].value(), 0, 3), f);
  EXPECT_EQ(half(g[0].value(), 1, 3), b);
}

TEST(EncodeSentence, ReversalSwapsHalvesWithTiedCells) {
  const std::size_t H = 3;
  BiLstm net("l", 4, H);
  Rng rng(3);
  net.forward.initialize(rng);
  net.backward.W.value = net.forward.W.value;
  net.backward.U.value = net.forward.U.value;
  net.backward.b.value = net.forward.b.value;
  std::mt19937_64 r(5);
  std::vector<Tensor> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_vec(4, r));
  std::vector<Tensor> rev(xs.rbegin(), xs.rend());
  Tape t;
  const auto g = encode_sentence(t, net, constants(t, xs));
  const auto gr = encode_sentence(t, net, constants(t, rev));
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(half(gr[i].value(), 0, H), half(g[n - 1 - i].value(), 1, H));
    EXPECT_EQ(half(gr[i].value(), 1, H), half(g[n - 1 - i].value(), 0, H));
  }
}

TEST(EncodeSentence, Causality) {
  const std::size_t H = 2;
  BiLstm net("l", 3, H);
  Rng rng(9);
  net.forward.initialize(rng);
  net.backward.initialize(rng);
  std::mt19937_64 r(1);
  std::vector<Tensor> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_vec(3, r));
  Tape t;
  const auto base = encode_sentence(t, net, constants(t, xs));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    auto ys = xs;
    ys[k][0] += 0.5;
    const auto pert = encode_sentence(t, net, constants(t, ys));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i < k) {
        EXPECT_EQ(half(pert[i].value(), 0, H), half(base[i].value(), 0, H));
      }
      if (i > k) {
        EXPECT_EQ(half(pert[i].value(), 1, H), half(base[i].value(), 1, H));
      }
    }
    EXPECT_NE(pert[k].value(), base[k].value());
  }
}

TEST(EncodeSentence, ShapeAndEmptyInput) {
  BiLstm net("l", 2, 5);
  Tape t;
  const auto g = encode_sentence(t, net, constants(t, {Tensor({2}), Tensor({2}), Tensor({2})}));
  EXPECT_EQ(g.size(), 3u);
  for (const auto& v : g) EXPECT_EQ(v.shape(), ad::Shape{10});
  EXPECT_THROW(encode_sentence(t, net, std::vector<Var>{}), ConfigError);
}

// CNN -> BiLSTM -> decoder on a 4-token sentence with H=3, d_emb=5, d1=4.
TEST(EndToEnd, FullStackGradientCheck) {
  const std::vector<std::string> words{"Ana", "saw", "Bo", "x"};
  const CharVocab chars = CharVocab::from_words(words);
  WordVocab vocab;
  for (const auto& w : words) vocab.add(w);
  EmbeddingTable table("emb", vocab, 5);
  FilterBank bank("f", {2, 2}, chars.size());
  LanguageProjection proj("p", ProjectionMode::learned, 5);
  BiLstm net("l", 5 + 4, 3);
  Decoder dec("d", 5, 6);
  Rng rng(11);
  bank.initialize(rng);
  net.forward.initialize(rng);
  net.backward.initialize(rng);
  dec.initialize(rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : table.table.value.values()) v = u(rng);
  for (auto& v : dec.A.value.values()) v = u(rng);
  for (std::size_t w = 1; w <= 2; ++w)
    for (auto& v : bank.bias(w).value.values()) v = u(rng);
  std::vector<ad::Param*> ps{&table.table, &*proj.matrix, &*proj.bias, &dec.W, &dec.A};
  for (auto* p : bank.params()) ps.push_back(p);
  for (auto* p : net.params()) ps.push_back(p);
  const std::vector<std::size_t> y{1, 0, 3, 4};
  auto loss = [&](Tape& t) {
    std::vector<Var> xs;
    for (const auto& w : words) xs.push_back(input_vector(t, w, table, proj, bank, chars));
    const auto g = encode_sentence(t, net, xs);
    return sentence_nll(t, dec, g, y);
  };
  const auto res = ad::gradient_check_detailed(loss, ps, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "]";
}

}  // namespace
