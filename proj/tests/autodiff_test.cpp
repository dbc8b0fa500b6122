#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "xner/autodiff.hpp"

namespace {

using namespace xner;
using ad::Param;
using ad::Real;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Weighted sum with fixed random weights, so every output coordinate matters.
Var weighted_sum(Tape& t, Var v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(v, t.constant(random_tensor(v.shape(), rng))));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape t;
  std::mt19937_64 rng(1);
  const Tensor m = random_tensor({3, 5}, rng);
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1;
  EXPECT_EQ(ad::matmul(t.constant(eye), t.constant(m)).value(), m);
}

TEST(Matmul, HandArithmetic) {
  Tape t;
  const Var r = ad::matmul(t.constant(Tensor::matrix({{1, 2}, {3, 4}})), t.constant(Tensor::matrix({{1}, {1}})));
  EXPECT_EQ(r.value(), Tensor::matrix({{3}, {7}}));
}

TEST(Matmul, ShapeMismatchReportsBothShapes) {
  Tape t;
  const Var a = t.constant(Tensor({2, 3}));
  const Var b = t.constant(Tensor({2, 2}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[2x2]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Param a("a", random_tensor({4, 3}, rng));
  Param b("b", random_tensor({3, 2}, rng));
  std::vector<Param*> ps{&a, &b};
  const Real err = ad::gradient_check(
      [&](Tape& t) { return weighted_sum(t, ad::matmul(t.param(a), t.param(b)), 11); }, ps, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Elementwise, SigmoidAndTanhAtZero) {
  Tape t;
  const Var z = t.constant(Tensor({1}));
  EXPECT_EQ(ad::sigmoid(z).value()[0], 0.5);
  EXPECT_EQ(ad::tanh(z).value()[0], 0.0);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  Param x("x", random_tensor({10}, rng, 2.0));
  Param y("y", random_tensor({10}, rng, 2.0));
  std::vector<Param*> ps{&x, &y};
  auto loss = [&](Tape& t) {
    const Var a = t.param(x), b = t.param(y);
    return weighted_sum(t, ad::add(ad::mul(ad::sigmoid(a), ad::tanh(b)), ad::scale(a, 0.3)), 5);
  };
  EXPECT_LT(ad::gradient_check(loss, ps, 1e-5), 1e-6);
}

TEST(Elementwise, ShapeMismatchRejected) {
  Tape t;
  EXPECT_THROW(ad::add(t.constant(Tensor({3})), t.constant(Tensor({4}))), ConfigError);
  EXPECT_THROW(ad::mul(t.constant(Tensor({3})), t.constant(Tensor({3, 1}))), ConfigError);
}

TEST(Concat, Cases) {
  Tape t;
  const Var a = t.constant(Tensor::vector({1, 2}));
  EXPECT_EQ(ad::concat({a}).value(), a.value());
  EXPECT_EQ(ad::concat({a, t.constant(Tensor::vector({3}))}).value(), Tensor::vector({1, 2, 3}));
  EXPECT_THROW(ad::concat(std::span<const Var>{}), ConfigError);
}

TEST(Concat, BackwardOfSumIsAllOnes) {
  Param a("a", Tensor::vector({1, 2}));
  Param b("b", Tensor::vector({3, 4, 5}));
  Tape t;
  t.backward(ad::sum(ad::concat({t.param(a), t.param(b)})));
  EXPECT_EQ(a.grad, Tensor::vector({1, 1}));
  EXPECT_EQ(b.grad, Tensor::vector({1, 1, 1}));
}

TEST(MaxOverRows, Cases) {
  Tape t;
  EXPECT_EQ(ad::max_over_rows(t.constant(Tensor::matrix({{4, -1}}))).value(), Tensor::vector({4, -1}));
  EXPECT_EQ(ad::max_over_rows(t.constant(Tensor::matrix({{1, 5}, {3, 2}}))).value(), Tensor::vector({3, 5}));
}

TEST(MaxOverRows, TieRoutesGradientToFirstRow) {
  Param m("m", Tensor::matrix({{2}, {2}}));
  Tape t;
  t.backward(ad::sum(ad::max_over_rows(t.param(m))));
  EXPECT_EQ(m.grad, Tensor::matrix({{1}, {0}}));
}

TEST(LogSoftmax, Symmetric) {
  Tape t;
  const Var r = ad::log_softmax(t.constant(Tensor::vector({0, 0})));
  EXPECT_DOUBLE_EQ(r.value()[0], -std::log(2.0));
  EXPECT_DOUBLE_EQ(r.value()[1], -std::log(2.0));
}

TEST(LogSoftmax, LargeInputsStayFinite) {
  Tape t;
  const Var r = ad::log_softmax(t.constant(Tensor::vector({1000, 0})));
  EXPECT_TRUE(r.value().all_finite());
  EXPECT_NEAR(r.value()[0], 0.0, 1e-12);
}

TEST(LogSoftmax, NllGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  Param s("s", random_tensor({5}, rng, 3.0));
  std::vector<Param*> ps{&s};
  const Real err =
      ad::gradient_check([&](Tape& t) { return ad::scale(ad::pick(ad::log_softmax(t.param(s)), 2), -1); }, ps, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(LogSoftmax, AlwaysNormalizes) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    Tape t;
    const Var r = ad::log_softmax(t.constant(random_tensor({n}, rng, 1e3)));
    EXPECT_LE(std::abs(ad::kernels::logsumexp(r.value().values())), 1e-9);
  }
}

TEST(Conv1d, OneHotConvolutionByHand) {
  // Width 2, pad 1 over a 2-row one-hot input with alphabet 3.
  Tape t;
  const Var in = t.constant(Tensor::matrix({{0, 1, 0}, {0, 0, 1}}));
  const Var w = t.constant(Tensor::matrix({{1, 2, 3, 10, 20, 30}}));
  const Var b = t.constant(Tensor::vector({0.5}));
  const Var out = ad::conv1d(in, w, b, 2, 1);
  // positions: [PAD,r0], [r0,r1], [r1,PAD]
  EXPECT_EQ(out.value(), Tensor::matrix({{20.5}, {2 + 30 + 0.5}, {3.5}}));
}

TEST(Conv1d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  Param in("in", random_tensor({4, 3}, rng));
  Param w("w", random_tensor({2, 9}, rng));
  Param b("b", random_tensor({2}, rng));
  std::vector<Param*> ps{&in, &w, &b};
  auto loss = [&](Tape& t) {
    return weighted_sum(t, ad::conv1d(t.param(in), t.param(w), t.param(b), 3, 2), 17);
  };
  EXPECT_LT(ad::gradient_check(loss, ps, 1e-5), 1e-6);
}

TEST(GradientCheck, QuadraticLoss) {
  std::mt19937_64 rng(2);
  Param p("p", random_tensor({6}, rng));
  std::vector<Param*> ps{&p};
  auto loss = [&](Tape& t) {
    const Var v = t.param(p);
    return ad::scale(ad::sum(ad::mul(v, v)), 0.5);
  };
  EXPECT_LT(ad::gradient_check(loss, ps, 1e-5), 1e-8);
  EXPECT_EQ(p.grad, p.value);
}

TEST(GradientCheck, UnusedParamHasExactlyZeroGradient) {
  std::mt19937_64 rng(2);
  Param used("used", random_tensor({3}, rng));
  Param unused("unused", random_tensor({3}, rng));
  std::vector<Param*> ps{&used, &unused};
  ad::gradient_check([&](Tape& t) { return ad::sum(ad::tanh(t.param(used))); }, ps, 1e-5);
  for (Real g : unused.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(GradientCheck, NonFiniteLossRejected) {
  Param p("p", Tensor::vector({0.0}));
  std::vector<Param*> ps{&p};
  auto loss = [&](Tape& t) { return ad::pick(ad::log_softmax(ad::scale(t.param(p), 1.0 / 0.0)), 0); };
  EXPECT_THROW(ad::gradient_check(loss, ps, 1e-5), NumericError);
}

TEST(Backward, TwiceWithoutZeroGradExactlyDoubles) {
  std::mt19937_64 rng(8);
  Param a("a", random_tensor({3, 4}, rng));
  Param x("x", random_tensor({4}, rng));
  Tape t;
  const Var h = ad::tanh(ad::matmul(t.param(a), t.param(x)));
  const Var loss = ad::sum(ad::mul(h, ad::sigmoid(h)));
  t.backward(loss);
  const Tensor ga = a.grad, gx = x.grad;
  t.backward(loss);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_EQ(a.grad[i], 2 * ga[i]);
  for (std::size_t i = 0; i < gx.size(); ++i) EXPECT_EQ(x.grad[i], 2 * gx[i]);
}

TEST(Backward, ParamRowGradientLandsInThatRowOnly) {
  Param table("table", Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  Tape t;
  const Var r = t.param_row(table, 1);
  EXPECT_EQ(r.value(), Tensor::vector({3, 4}));
  t.backward(ad::sum(ad::add(r, t.param_row(table, 1))));
  EXPECT_EQ(table.grad, Tensor::matrix({{0, 0}, {2, 2}, {0, 0}}));
  ASSERT_EQ(t.touched().size(), 1u);
  EXPECT_EQ(t.touched()[0].row, 1);
}

// Randomized property: every differentiable op agrees with central
// differences to 1e-4 over 100 trials.
TEST(Property, AllOpsPassFiniteDifferenceChecks) {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng() % 4, k = 1 + rng() % 4, w = 1 + rng() % 3;
    Param a("a", random_tensor({m, k}, rng));
    Param x("x", random_tensor({k}, rng));
    Param y("y", random_tensor({m}, rng));
    Param cw("cw", random_tensor({2, w * k}, rng));
    Param cb("cb", random_tensor({2}, rng));
    std::vector<Param*> ps{&a, &x, &y, &cw, &cb};
    const std::uint64_t wseed = rng();
    const std::size_t target = rng() % (m + 2);
    auto loss = [&](Tape& t) {
      const Var av = t.param(a);
      const Var h = ad::add(ad::matmul(av, t.param(x)), t.param(y));
      const Var gate = ad::mul(ad::sigmoid(h), ad::tanh(ad::slice(ad::concat({h, t.param(y)}), 0, m)));
      const Var conv = ad::tanh(ad::conv1d(av, t.param(cw), t.param(cb), w, w - 1));
      const Var pooled = ad::max_over_rows(conv);
      const Var feats = ad::concat({gate, pooled});
      const Var lp = ad::log_softmax(feats);
      return ad::add(ad::scale(ad::pick(lp, target), -1), weighted_sum(t, feats, wseed));
    };
    const auto res = ad::gradient_check_detailed(loss, ps, 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "trial " << trial << " worst " << res.worst_param << "[" << res.worst_index
                                       << "] analytic " << res.analytic << " numeric " << res.numeric;
  }
}

}  // namespace
