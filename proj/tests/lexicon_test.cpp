#include <gtest/gtest.h>

#include <sstream>

#include "xner/lexicon.hpp"

namespace {

using namespace xner;
using ad::Tape;
using ad::Tensor;

const char* kThreeWords = "madrid 0.1 0.2 0.3 0.4\nparis 1 2 3 4\nberlin -1 -2 -3 -4\n";

TEST(LoadEmbeddings, ThreeLinesDimFour) {
  const Embeddings e = load_embeddings(kThreeWords, 1);
  EXPECT_EQ(e.table.shape(), (ad::Shape{4, 4}));
  EXPECT_EQ(e.vocab.size(), 4u);
  EXPECT_EQ(e.table.at(e.vocab.lookup("paris"), 2), 3.0);
}

TEST(LoadEmbeddings, HeaderDetected) {
  const Embeddings e = load_embeddings(std::string("3 4\n") + kThreeWords, 1);
  EXPECT_EQ(e.vocab.size(), 4u);
  EXPECT_EQ(e.table.rows(), 4u);
}

TEST(LoadEmbeddings, FirstOccurrenceWins) {
  std::string text = "x 1 1\n";
  text += "dup 2 2\n";
  for (int i = 0; i < 6; ++i) text += "w" + std::to_string(i) + " 0 0\n";
  text += "DUP 9 9\n";  // line 9, same lowercased key
  const Embeddings e = load_embeddings(text, 1);
  EXPECT_EQ(e.table.at(e.vocab.lookup("dup"), 0), 2.0);
  EXPECT_EQ(e.vocab.size(), 9u);
}

TEST(LoadEmbeddings, UnkRowWithinBoundAndSeeded) {
  const Embeddings a = load_embeddings(kThreeWords, 7), b = load_embeddings(kThreeWords, 7);
  const Embeddings c = load_embeddings(kThreeWords, 8);
  EXPECT_EQ(a.table, b.table);
  EXPECT_NE(a.table, c.table);
  for (double v : a.table.row(WordVocab::kUnk)) EXPECT_LE(std::abs(v), unk_init_bound(4));
}

TEST(LoadEmbeddings, RaggedRejectedWithLineNumber) {
  try {
    load_embeddings("a 1 2\nb 1 2\nc 1\n", 1);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadEmbeddings, EmptyRejected) {
  EXPECT_THROW(load_embeddings("", 1), DataError);
  EXPECT_THROW(load_embeddings("\n\n", 1), DataError);
}

TEST(SaveEmbeddings, RoundTripIsBitIdentical) {
  Embeddings e = load_embeddings(kThreeWords, 3);
  e.table.at(1, 0) = 0.1 + 0.2;  // not exactly representable in short decimal
  e.table.at(2, 3) = -1e-300;
  std::ostringstream os;
  save_embeddings(os, e.vocab, e.table);
  const Embeddings back = load_embeddings(os.str(), 3);
  EXPECT_EQ(back.table, e.table);
  EXPECT_EQ(back.vocab.words(), e.vocab.words());
}

struct Fixture {
  EmbeddingTable table;
  LanguageProjection identity;
  CharVocab chars;
  FilterBank bank;

  Fixture()
      : table("emb", make_vocab(), 3),
        chars(CharVocab::from_words(std::vector<std::string>{"IBMibmMadrid"})),
        bank("f", {1}, chars.size()) {
    Rng rng(1);
    for (auto& v : table.table.value.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    for (char32_t c : chars.chars())
      if (c >= U'A' && c <= U'Z') bank.weight(1).value.at(0, chars.index(c)) = 1;
  }

  static WordVocab make_vocab() {
    WordVocab v;
    v.add("Madrid");
    v.add("ibm");
    return v;
  }
};

TEST(Embed, CasingInvariant) {
  Fixture f;
  Tape t;
  for (const char* w : {"madrid", "MADRID", "MaDrId"})
    EXPECT_EQ(embed(t, w, f.table, f.identity).value(), embed(t, "Madrid", f.table, f.identity).value());
}

TEST(Embed, IdentityProjectionReturnsRawRow) {
  Fixture f;
  Tape t;
  const auto row = f.table.table.value.row(f.table.vocab.lookup("madrid"));
  EXPECT_EQ(embed(t, "Madrid", f.table, f.identity).value(), Tensor({3}, std::vector<double>(row.begin(), row.end())));
}

TEST(Embed, OovUsesUnkRow) {
  Fixture f;
  Tape t;
  const auto row = f.table.table.value.row(WordVocab::kUnk);
  EXPECT_EQ(embed(t, "Lisbon", f.table, f.identity).value(), Tensor({3}, std::vector<double>(row.begin(), row.end())));
}

TEST(Embed, LearnedProjectionStartsAsIdentity) {
  Fixture f;
  LanguageProjection learned("proj", ProjectionMode::learned, 3);
  Tape t;
  EXPECT_EQ(embed(t, "ibm", f.table, learned).value(), embed(t, "ibm", f.table, f.identity).value());
}

TEST(InputVector, LengthAndHalves) {
  Fixture f;
  Tape t;
  const Tensor upper = input_vector(t, "IBM", f.table, f.identity, f.bank, f.chars).value();
  const Tensor lower = input_vector(t, "ibm", f.table, f.identity, f.bank, f.chars).value();
  ASSERT_EQ(upper.size(), 3u + f.bank.output_dim());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(upper[i], lower[i]);
  EXPECT_NE(upper[3], lower[3]);
}

TEST(InputVector, ZeroFilterBankGivesZeroCharHalf) {
  Fixture f;
  FilterBank zero("z", {2, 2}, f.chars.size());
  Tape t;
  const Tensor v = input_vector(t, "Madrid", f.table, f.identity, zero, f.chars).value();
  for (std::size_t i = 3; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(Embed, GradientsTouchOnlySentenceRows) {
  WordVocab vocab;
  for (const char* w : {"a", "b", "c", "d", "e"}) vocab.add(w);
  EmbeddingTable table("emb", vocab, 2);
  Rng rng(3);
  for (auto& v : table.table.value.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  LanguageProjection proj("p", ProjectionMode::learned, 2);
  Tape t;
  std::vector<ad::Var> xs;
  for (const char* w : {"B", "d", "b", "zzz"}) xs.push_back(embed(t, w, table, proj));
  t.backward(ad::sum(ad::tanh(ad::add_n(xs))));
  const std::set<std::size_t> used{vocab.lookup("b"), vocab.lookup("d"), WordVocab::kUnk};
  for (std::size_t r = 0; r < table.table.value.rows(); ++r) {
    const auto g = table.table.grad.row(r);
    const bool nonzero = g[0] != 0 || g[1] != 0;
    EXPECT_EQ(nonzero, used.count(r) > 0) << "row " << r;
  }
}

TEST(Embed, ProjectionGradientMatchesFiniteDifferences) {
  WordVocab vocab;
  vocab.add("x");
  EmbeddingTable table("emb", vocab, 3);
  Rng rng(6);
  for (auto& v : table.table.value.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  LanguageProjection proj("p", ProjectionMode::learned, 3);
  for (auto& v : proj.matrix->value.values()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  std::vector<ad::Param*> ps{&table.table, &*proj.matrix, &*proj.bias};
  auto loss = [&](Tape& t) {
    return ad::scale(ad::pick(ad::log_softmax(embed(t, "X", table, proj)), 1), -1);
  };
  EXPECT_LT(ad::gradient_check(loss, ps, 1e-5), 1e-6);
}

}  // namespace
