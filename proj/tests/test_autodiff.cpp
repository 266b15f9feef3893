#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "docnmt/autodiff.hpp"
#include "docnmt/errors.hpp"
#include "test_util.hpp"

namespace docnmt {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
  Tensor t = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(t.at(1, 0), 3.0);
  EXPECT_EQ(t.row(1), Tensor::vector({3, 4}));
  EXPECT_EQ(shape_str({2, 3}), "(2x3)");
}

TEST(Autodiff, MatmulByIdentityIsNoOp) {
  std::mt19937_64 rng(3);
  Tape tape;
  Tensor a = random_tensor({3, 3}, rng);
  Var out = ad::matmul(tape.constant(Tensor::identity(3)), tape.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(Autodiff, SoftmaxOfZerosIsUniform) {
  Tape tape;
  Var p = ad::softmax(tape.constant(Tensor::vector({0, 0, 0, 0})));
  for (double v : p.value().values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(4);
  Tape tape;
  Var p = ad::softmax(tape.constant(random_tensor({3, 5}, rng, 20.0)));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += p.value().at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Autodiff, TanhAtZero) {
  Tape tape;
  EXPECT_EQ(ad::tanh(tape.constant(Tensor::vector({0}))).value()[0], 0.0);
}

TEST(Autodiff, ProductRule) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({2}));
  Var y = tape.constant(Tensor::vector({3}));
  auto g = tape.backward(ad::dot(x, y));
  EXPECT_DOUBLE_EQ(g[x][0], 3.0);
  EXPECT_DOUBLE_EQ(g[y][0], 2.0);
}

TEST(Autodiff, TanhSlopeAtZero) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({0}));
  EXPECT_DOUBLE_EQ(tape.backward(ad::sum(ad::tanh(x)))[x][0], 1.0);
}

TEST(Autodiff, CrossEntropyGradientClosedForm) {
  Tape tape;
  Var logits = tape.constant(Tensor::vector({1, 2}));
  auto g = tape.backward(ad::pick_neg_log_softmax(logits, 1));
  // d/dz_k = softmax(z)_k - [k == gold]; with gold 1 that is [s, (1 - s) - 1].
  const double s = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
  EXPECT_NEAR(g[logits][0], s, 1e-15);
  EXPECT_NEAR(g[logits][1], -s, 1e-15);
}

TEST(Autodiff, UnreachableNodesGetZeroGradient) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1, 2}));
  Var unused = tape.constant(Tensor::vector({5, 6, 7}));
  auto g = tape.backward(ad::sum(x));
  EXPECT_EQ(g[unused], Tensor::zeros({3}));
}

TEST(Autodiff, ShapeErrorsNameTheShapes) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2x3)"), std::string::npos);
  }
  EXPECT_THROW(ad::add(a, tape.constant(Tensor::zeros({4}))), ShapeError);
  EXPECT_THROW(ad::slice(tape.constant(Tensor::zeros({3})), 2, 2), ShapeError);
  EXPECT_THROW(ad::lookup(a, 2), ShapeError);
}

TEST(Autodiff, NonFiniteOutputNamesTheOp) {
  Tape tape;
  Var big = tape.constant(Tensor::vector({1e300}));
  try {
    ad::mul(big, big);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos);
  }
}

TEST(Autodiff, BackwardRejectsNonScalar) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Autodiff, MaskedSoftmaxZeroesExcludedEntry) {
  Tape tape;
  Var p = ad::masked_softmax(tape.constant(Tensor::vector({3, 1, 2})), 0);
  EXPECT_EQ(p.value()[0], 0.0);
  EXPECT_NEAR(p.value()[1] + p.value()[2], 1.0, 1e-15);
  EXPECT_THROW(ad::masked_softmax(tape.constant(Tensor::vector({1})), 0), ShapeError);
}

TEST(Autodiff, DropoutIsReplayableAndScaled) {
  std::mt19937_64 r1(9), r2(9);
  Tape t1, t2;
  Tensor ones({100});
  for (double& v : ones.values()) v = 1.0;
  Var a = ad::dropout(t1.constant(ones), 0.5, r1);
  Var b = ad::dropout(t2.constant(ones), 0.5, r2);
  EXPECT_EQ(a.value(), b.value());
  for (double v : a.value().values()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

// Every op against an independent central-difference oracle on a random
// input, through a random linear read-out so all output coordinates matter.
using UnaryBuilder = std::function<Var(Tape&, Var)>;

void check_op(const UnaryBuilder& build, Shape in_shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  Tensor x0 = random_tensor(in_shape, rng, scale);
  Tensor w;
  auto eval = [&](const Tensor& x, Tape& tape, Var& xv) {
    xv = tape.constant(x);
    Var y = build(tape, xv);
    if (w.size() == 0) w = random_tensor(y.shape(), rng);
    return ad::sum(ad::mul(y, tape.constant(w)));
  };
  Tape tape;
  Var xv;
  Var loss = eval(x0, tape, xv);
  const Tensor analytic = tape.backward(loss)[xv];
  const double eps = 1e-6;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Tensor xp = x0, xm = x0;
    xp[i] += eps;
    xm[i] -= eps;
    Tape tp, tm;
    Var dummy;
    const double fp = eval(xp, tp, dummy).value()[0];
    const double fm = eval(xm, tm, dummy).value()[0];
    EXPECT_NEAR(analytic[i], (fp - fm) / (2 * eps), 1e-7) << "coordinate " << i;
  }
}

TEST(AutodiffGradients, EveryOpMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  const Tensor m = random_tensor({3, 4}, rng);
  const Tensor v4 = random_tensor({4}, rng);
  const Tensor table = random_tensor({5, 4}, rng);
  check_op([&](Tape& t, Var x) { return ad::matmul(t.constant(m), x); }, {4}, 1);
  check_op([&](Tape& t, Var x) { return ad::matmul(x, t.constant(v4)); }, {2, 4}, 2);
  check_op([&](Tape& t, Var x) { return ad::matmul(x, ad::transpose(x)); }, {2, 3}, 3);
  check_op([&](Tape& t, Var x) { return ad::add(x, t.constant(v4)); }, {3, 4}, 4);
  check_op([&](Tape& t, Var x) { return ad::sub(t.constant(v4), x); }, {4}, 5);
  check_op([](Tape&, Var x) { return ad::mul(x, x); }, {4}, 6);
  check_op([](Tape&, Var x) { return ad::tanh(x); }, {4}, 7);
  check_op([](Tape&, Var x) { return ad::sigmoid(x); }, {4}, 8);
  check_op([](Tape&, Var x) { return ad::softmax(x); }, {2, 4}, 9);
  check_op([](Tape&, Var x) { return ad::masked_softmax(x, 2); }, {4}, 10);
  check_op([&](Tape& t, Var x) { return ad::concat({x, t.constant(v4), x}); }, {3}, 11);
  check_op([](Tape&, Var x) { return ad::stack(std::vector<Var>{x, ad::tanh(x)}); }, {3}, 12);
  check_op([](Tape&, Var x) { return ad::slice(x, 1, 2); }, {4}, 13);
  check_op([](Tape&, Var x) { return ad::lookup(x, 3); }, {5, 4}, 14);
  check_op([](Tape&, Var x) { return ad::sum(x); }, {2, 3}, 15);
  check_op([](Tape&, Var x) { return ad::scalar_mul(x, -2.5); }, {4}, 16);
  check_op([](Tape&, Var x) { return ad::pick_neg_log_softmax(x, 1); }, {5}, 17);
  check_op([&](Tape& t, Var x) { return ad::lookup(ad::add(t.constant(table), x), 0); }, {4}, 18);
}

TEST(GradCheck, QuadraticIsExact) {
  ParamSet ps;
  ParamId x = ps.add("x", Tensor::vector({5}));
  auto f = [&](Tape& tape) { Var v = tape.param(x); return ad::sum(ad::mul(v, v)); };
  auto r = ad::grad_check(f, ps, {}, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.coords_checked, 1u);
  EXPECT_EQ(ps.value(x)[0], 5.0) << "parameters must be restored";
}

TEST(GradCheck, FlagsAWrongGradient) {
  // tanh's backward is correct, so fake a mismatch by making the loss depend
  // on the parameter through a constant snapshot the tape cannot see.
  ParamSet ps;
  ParamId x = ps.add("x", Tensor::vector({0.3}));
  auto f = [&](Tape& tape) {
    Var v = tape.param(x);
    Var hidden = tape.constant(ps.value(x));
    return ad::sum(ad::add(v, ad::mul(hidden, hidden)));
  };
  EXPECT_GT(ad::grad_check(f, ps, {}, 1e-5).max_rel_error, 0.1);
}

TEST(GradCheck, RejectsNondeterministicLoss) {
  ParamSet ps;
  ps.add("x", Tensor::vector({1}));
  int calls = 0;
  auto f = [&](Tape& tape) { return tape.constant(Tensor::scalar(++calls)); };
  EXPECT_THROW(ad::grad_check(f, ps, {}, 1e-5), UsageError);
}

}  // namespace
}  // namespace docnmt
