#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bp6/autodiff.hpp"

namespace {

using namespace bp6::ad;

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (double& v : t.data) v = u(rng);
  return t;
}

// Values bounded away from zero so relu's kink is never straddled.
Tensor away_from_zero(Shape s, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(s), seed);
  for (double& v : t.data) v = std::copysign(0.1 + std::abs(v), v);
  return t;
}

// Reduces an arbitrary output to a scalar with fixed random weights, so every
// output element contributes a distinct gradient.
Var probe(Var out, std::uint64_t seed = 99) {
  Tape& t = *out.tape;
  return sum(mul(out, t.constant(random_tensor(out.shape(), seed))));
}

template <class F>
double check(F&& f, std::vector<Parameter*> params) {
  return grad_check(std::forward<F>(f), params).max_rel_error;
}

TEST(Primitives, ElementwiseGradients) {
  Parameter a("a", away_from_zero({3, 4}, 1)), b("b", away_from_zero({3, 4}, 2));
  std::vector<Parameter*> ps{&a, &b};
  EXPECT_LT(check([&](Tape& t) { return probe(add(t.param(a), t.param(b))); }, ps), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(sub(t.param(a), t.param(b))); }, ps), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(mul(t.param(a), t.param(b))); }, ps), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(div(t.param(a), t.param(b))); }, ps), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(scale(t.param(a), -2.5)); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(relu(t.param(a))); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(sigmoid(t.param(a))); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(exp(t.param(a))); }, {&a}), 1e-6);
  Parameter pos("pos", random_tensor({3, 4}, 3, 0.5, 2.0));
  EXPECT_LT(check([&](Tape& t) { return probe(log(t.param(pos))); }, {&pos}), 1e-6);
}

TEST(Primitives, ReductionGradients) {
  Parameter a("a", random_tensor({2, 3, 4}, 4)), b("b", random_tensor({2, 3, 4}, 5));
  EXPECT_LT(check([&](Tape& t) { return scale(sum(t.param(a)), 3.0); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return mean(square(t.param(a))); }, {&a}), 1e-6);
  for (std::size_t axis : {0u, 1u, 2u})
    EXPECT_LT(check([&](Tape& t) { return probe(sum(t.param(a), axis)); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(dot(t.param(a), t.param(b))); }, {&a, &b}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(l2_norm(t.param(a))); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(cosine_similarity(t.param(a), t.param(b))); }, {&a, &b}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(global_avg_pool(t.param(a))); }, {&a}), 1e-6);
}

TEST(Primitives, StructuralGradients) {
  Parameter a("a", random_tensor({2, 3, 4}, 6)), b("b", random_tensor({2, 2, 4}, 7));
  Parameter s("s", random_tensor({2, 3}, 8));
  EXPECT_LT(check([&](Tape& t) { return probe(flatten(t.param(a))); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(reshape(t.param(a), {4, 6})); }, {&a}), 1e-6);
  EXPECT_LT(check([&](Tape& t) {
              const std::array vs{t.param(a), t.param(b)};
              return probe(concat(vs, 1));
            },
            {&a, &b}),
            1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(broadcast_mul(t.param(a), t.param(s))); }, {&a, &s}), 1e-6);
  for (std::size_t axis : {0u, 1u, 2u})
    EXPECT_LT(check([&](Tape& t) { return probe(softmax(t.param(a), axis)); }, {&a}), 1e-6);
  Parameter m("m", random_tensor({5, 3}, 9));
  EXPECT_LT(check([&](Tape& t) { return probe(gather_rows(t.param(m), {4, 0, 0, 2})); }, {&m}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(column(t.param(m), 1)); }, {&m}), 1e-6);
}

TEST(Primitives, LinearConvPoolGradients) {
  Parameter x("x", random_tensor({3, 5}, 10)), w("w", random_tensor({4, 5}, 11)), b("b", random_tensor({4}, 12));
  EXPECT_LT(check([&](Tape& t) { return probe(linear(t.param(x), t.param(w), t.param(b))); }, {&x, &w, &b}), 1e-6);

  Parameter cx("cx", random_tensor({2, 3, 20}, 13)), cw("cw", random_tensor({4, 3, 3}, 14)),
      cb("cb", random_tensor({4}, 15));
  for (Conv1dOptions opt : {Conv1dOptions{1, 1, 0}, Conv1dOptions{1, 4, 8}, Conv1dOptions{2, 2, 3}}) {
    EXPECT_LT(check([&](Tape& t) { return probe(conv1d(t.param(cx), t.param(cw), t.param(cb), opt)); },
                    {&cx, &cw, &cb}),
              1e-6);
  }

  // Distinct, well-separated values so no pooling window has a tie.
  Tensor px({2, 2, 11});
  std::vector<double> vals(px.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.05 * static_cast<double>(i);
  std::shuffle(vals.begin(), vals.end(), std::mt19937_64(16));
  px.data = vals;
  Parameter p("p", px);
  EXPECT_LT(check([&](Tape& t) { return probe(maxpool1d(t.param(p), 3, 3)); }, {&p}), 1e-6);
  EXPECT_LT(check([&](Tape& t) { return probe(maxpool1d(t.param(p), 2, 1)); }, {&p}), 1e-6);
}

TEST(Primitives, BatchNormAndDropoutGradients) {
  Parameter x("x", random_tensor({4, 3, 6}, 17)), g("g", random_tensor({3}, 18, 0.5, 1.5)),
      be("be", random_tensor({3}, 19));
  Tensor rm({3}, 0.0), rv({3}, 1.0);
  for (Mode mode : {Mode::train, Mode::eval}) {
    EXPECT_LT(check([&](Tape& t) {
                return probe(batchnorm1d(t.param(x), t.param(g), t.param(be), {&rm, &rv}, mode));
              },
              {&x, &g, &be}),
              1e-6);
  }
  Parameter x2("x2", random_tensor({5, 3}, 20));
  EXPECT_LT(check([&](Tape& t) {
              return probe(batchnorm1d(t.param(x2), t.param(g), t.param(be), {&rm, &rv}, Mode::train));
            },
            {&x2, &g, &be}),
            1e-6);

  EXPECT_LT(check([&](Tape& t) {
              std::mt19937_64 rng(21);
              return probe(dropout(t.param(x), 0.3, Mode::train, rng));
            },
            {&x}),
            1e-6);
}

TEST(Primitives, ComposedToyModel) {
  // linear -> relu -> linear -> mse against a constant target
  Parameter w1("w1", random_tensor({6, 4}, 30)), b1("b1", random_tensor({6}, 31));
  Parameter w2("w2", random_tensor({2, 6}, 32)), b2("b2", random_tensor({2}, 33));
  const Tensor x = random_tensor({5, 4}, 34), y = random_tensor({5, 2}, 35);
  const double err = check(
      [&](Tape& t) {
        Var h = relu(linear(t.constant(x), t.param(w1), t.param(b1)));
        Var out = linear(h, t.param(w2), t.param(b2));
        return mean(square(sub(out, t.constant(y))));
      },
      {&w1, &b1, &w2, &b2});
  EXPECT_LT(err, 1e-6);
}

TEST(Backward, LinearMapGradientIsOuterProduct) {
  Parameter w("w", random_tensor({3, 4}, 40)), b("b", Tensor({3}, 0.0));
  const Tensor x = random_tensor({2, 4}, 41);
  Tape t;
  t.backward(sum(linear(t.constant(x), t.param(w), t.param(b))));
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w.grad[o * 4 + i], x[i] + x[4 + i]);
  for (std::size_t o = 0; o < 3; ++o) EXPECT_DOUBLE_EQ(b.grad[o], 2.0);
}

TEST(Backward, MseGradientClosedForm) {
  const Tensor yv = random_tensor({7}, 42), target = random_tensor({7}, 43);
  Tape t;
  Var y = t.leaf(yv);
  t.backward(mean(square(sub(y, t.constant(target)))));
  const Tensor g = t.grad(y);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(g[i], 2.0 * (yv[i] - target[i]) / 7.0, 1e-15);
}

TEST(Backward, AccumulatesAndIsSingleUse) {
  Parameter w("w", Tensor({2}, std::vector<double>{1.0, 2.0}));
  for (int pass = 0; pass < 2; ++pass) {
    Tape t;
    t.backward(sum(t.param(w)));
  }
  EXPECT_EQ(w.grad[0], 2.0);
  EXPECT_EQ(w.grad[1], 2.0);

  Tape t;
  Var l = sum(t.param(w));
  t.backward(l);
  EXPECT_THROW(t.backward(l), bp6::ContractError);
}

TEST(Backward, NonScalarLossIsContractError) {
  Parameter w("w", Tensor({2}, 1.0));
  Tape t;
  EXPECT_THROW(t.backward(t.param(w)), bp6::ContractError);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  Parameter w("w", random_tensor({4}, 44));
  const auto r = grad_check([&](Tape& t) { return sum(t.constant(Tensor({3}, 2.0))); },
                            std::vector<Parameter*>{&w});
  EXPECT_EQ(r.max_rel_error, 0.0);
  for (double g : w.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Shapes, ConvAndPoolLengths) {
  EXPECT_EQ(conv1d_output_length(1000, 3, 1, 4, 8), 1000u);
  EXPECT_EQ(conv1d_output_length(1000, 3, 1, 1, 2), 1000u);
  EXPECT_EQ(maxpool1d_output_length(983, 3, 3), 327u);

  Tape t;
  Var x = t.constant(random_tensor({1, 1, 1000}, 45));
  Var y = conv1d(x, t.constant(random_tensor({2, 1, 3}, 46)), t.constant(Tensor({2}, 0.0)), {1, 4, 8});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 1000}));
  Var p = maxpool1d(t.constant(random_tensor({1, 2, 983}, 47)), 3, 3);
  EXPECT_EQ(p.shape(), (Shape{1, 2, 327}));
}

TEST(Shapes, MismatchNamesPrimitive) {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({3, 2}));
  try {
    add(a, b);
    FAIL();
  } catch (const bp6::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
  EXPECT_THROW(linear(a, t.constant(Tensor({4, 2})), t.constant(Tensor({4}))), bp6::ShapeError);
  EXPECT_THROW(conv1d(t.constant(Tensor({1, 2, 10})), t.constant(Tensor({3, 1, 3})), t.constant(Tensor({3}))),
               bp6::ShapeError);
  EXPECT_THROW(conv1d(t.constant(Tensor({1, 1, 2})), t.constant(Tensor({1, 1, 3})), t.constant(Tensor({1}))),
               bp6::ShapeError);
  std::mt19937_64 rng(1);
  EXPECT_THROW(dropout(a, 1.0, Mode::train, rng), bp6::ShapeError);
}

TEST(Properties, SoftmaxRowsSumToOne) {
  Tape t;
  Var s0 = softmax(t.constant(Tensor({1, 3}, 0.0)), 1);
  for (double v : s0.value().data) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);

  Var s = softmax(t.constant(random_tensor({50, 7}, 48, -30.0, 30.0)), 1);
  for (std::size_t r = 0; r < 50; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 7; ++k) {
      EXPECT_GT(s.value()[r * 7 + k], 0.0);
      acc += s.value()[r * 7 + k];
    }
    EXPECT_NEAR(acc, 1.0, 1e-9);
  }
}

TEST(Properties, DropoutStatistics) {
  const Tensor x = random_tensor({10}, 49, 1.0, 2.0);
  Tape t;
  Var xv = t.constant(x);
  std::mt19937_64 rng(50);
  EXPECT_EQ(dropout(xv, 0.2, Mode::eval, rng).value().data, x.data);

  const double p = 0.2;
  const int masks = 10000;
  // Pooled over elements, y/x is the mask value with mean 1 and variance p/(1-p).
  double ratio_mean = 0.0;
  std::size_t zeros = 0;
  for (int m = 0; m < masks; ++m) {
    Tape tm;
    const auto& y = dropout(tm.constant(x), p, Mode::train, rng).value();
    for (std::size_t i = 0; i < 10; ++i) {
      ratio_mean += y[i] / x[i] / (10.0 * masks);
      zeros += y[i] == 0.0;
    }
  }
  EXPECT_NEAR(ratio_mean, 1.0, 3 * std::sqrt(p / (1 - p) / (10.0 * masks)));
  const double n = 10.0 * masks;
  EXPECT_NEAR(static_cast<double>(zeros) / n, p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Properties, BatchNormTrainMoments) {
  Tensor rm({4}, 0.0), rv({4}, 1.0);
  Tape t;
  const Tensor x = random_tensor({8, 4, 25}, 51, -3.0, 7.0);
  Var y = batchnorm1d(t.constant(x), t.constant(Tensor({4}, 1.0)), t.constant(Tensor({4}, 0.0)), {&rm, &rv},
                      Mode::train);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t l = 0; l < 25; ++l) m += y.value()[(n * 4 + c) * 25 + l] / 200.0;
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t l = 0; l < 25; ++l) v += std::pow(y.value()[(n * 4 + c) * 25 + l] - m, 2) / 200.0;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-5 + 1e-4);  // eps inflates the denominator slightly for small variances
  }
  // Running stats moved 10% toward the batch statistics.
  double m0 = 0.0;
  for (std::size_t n = 0; n < 8; ++n)
    for (std::size_t l = 0; l < 25; ++l) m0 += x[(n * 4) * 25 + l] / 200.0;
  EXPECT_NEAR(rm[0], 0.1 * m0, 1e-12);
}

TEST(Properties, IdentityConvIsIdentity) {
  Tape t;
  const Tensor x = random_tensor({2, 1, 30}, 52);
  Var y = conv1d(t.constant(x), t.constant(Tensor({1, 1, 1}, 1.0)), t.constant(Tensor({1}, 0.0)));
  EXPECT_EQ(y.value().data, x.data);
}

TEST(Properties, CausalConvIgnoresFuture) {
  Tensor x = random_tensor({1, 1, 40}, 53);
  const Tensor w = random_tensor({2, 1, 3}, 54);
  Tape t1;
  const auto a = conv1d(t1.constant(x), t1.constant(w), t1.constant(Tensor({2}, 0.0)), {1, 2, 4}).value();
  for (std::size_t i = 21; i < 40; ++i) x[i] = 0.0;
  Tape t2;
  const auto b = conv1d(t2.constant(x), t2.constant(w), t2.constant(Tensor({2}, 0.0)), {1, 2, 4}).value();
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i <= 20; ++i) EXPECT_EQ(a[c * 40 + i], b[c * 40 + i]);
}

TEST(Properties, MaxpoolTieRoutesToFirst) {
  Tape t;
  Var x = t.leaf(Tensor({1, 1, 3}, std::vector<double>{2.0, 2.0, 1.0}));
  t.backward(sum(maxpool1d(x, 3, 3)));
  EXPECT_EQ(t.grad(x).data, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Properties, CosineZeroNormIsZeroAndCounted) {
  Tape t;
  std::size_t degenerate = 0;
  Var a = t.leaf(Tensor({2, 3}, std::vector<double>{0, 0, 0, 1, 0, 0}));
  Var b = t.constant(Tensor({2, 3}, std::vector<double>{1, 1, 1, 1, 1, 0}));
  Var c = cosine_similarity(a, b, &degenerate);
  EXPECT_EQ(degenerate, 1u);
  EXPECT_EQ(c.value()[0], 0.0);
  EXPECT_NEAR(c.value()[1], 1.0 / std::sqrt(2.0), 1e-15);
  t.backward(sum(c));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(t.grad(a)[k], 0.0);
}

}  // namespace
