#include <gtest/gtest.h>

#include <cmath>

#include "stackcast/error.hpp"
#include "stackcast/grad_check.hpp"
#include "stackcast/model.hpp"
#include "stackcast/tensor.hpp"

using namespace stackcast;
using namespace stackcast::diff;

namespace {
Matrix random(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}
}  // namespace

TEST(Ops, SigmoidAtZero) {
  Graph g;
  EXPECT_EQ(sigmoid(g.constant(Matrix::Zero(1, 1))).scalar(), 0.5);
}

TEST(Ops, SoftmaxUniformAndShiftInvariant) {
  Graph g;
  const auto u = softmax(g.constant(Matrix::Constant(1, 3, 2.5)), Axis::Rows).value();
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(u(0, j), 1.0 / 3.0, 1e-15);

  const Matrix x = random(4, 6, 1);
  const auto a = softmax(g.constant(x), Axis::Rows).value();
  const auto b = softmax(g.constant((x.array() + 17.0).matrix()), Axis::Rows).value();
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  const auto c = softmax(g.constant(x), Axis::Cols).value();
  for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(c.col(j).sum(), 1.0, 1e-12);
}

TEST(Ops, MatmulMatchesTripleLoop) {
  const Matrix a = random(2, 3, 2), b = random(3, 1, 3);
  Graph g;
  const auto got = matmul(g.constant(a), g.constant(b)).value();
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, 0);
    EXPECT_NEAR(got(i, 0), s, 1e-12);
  }
}

TEST(Ops, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(matmul(g.constant(Matrix::Zero(2, 3)), g.constant(Matrix::Zero(2, 3))), ValidationError);
  EXPECT_THROW(add(g.constant(Matrix::Zero(2, 3)), g.constant(Matrix::Zero(3, 2))), ValidationError);
}

TEST(Ops, NonFiniteTrips) {
  Graph g;
  Matrix m = Matrix::Ones(1, 2);
  m(0, 1) = 1e308;
  EXPECT_THROW(scale(g.constant(m), 1e10), NumericError);
}

TEST(Ops, CausalSoftmaxIsLowerTriangular) {
  Graph g;
  const auto w = causal_softmax(g.constant(random(5, 5, 4))).value();
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
    for (int j = i + 1; j < 5; ++j) EXPECT_EQ(w(i, j), 0.0);
  }
}

TEST(Backward, SigmoidSlope) {
  Graph g;
  const Var x = g.input(Matrix::Zero(1, 1));
  g.backward(sigmoid(x));
  EXPECT_DOUBLE_EQ(g.grad(x)(0, 0), 0.25);
}

TEST(Backward, Quadratic) {
  Graph g;
  Matrix v(1, 3);
  v << 1, 2, 3;
  const Var x = g.input(v);
  g.backward(sum(mul(x, x)));
  EXPECT_EQ(g.grad(x)(0, 0), 2);
  EXPECT_EQ(g.grad(x)(0, 1), 4);
  EXPECT_EQ(g.grad(x)(0, 2), 6);
}

TEST(Backward, NonScalarRejected) {
  Graph g;
  const Var x = g.input(Matrix::Ones(2, 2));
  EXPECT_THROW(g.backward(x), ValidationError);
}

TEST(Backward, AddPassesAdjointAndConcatSplitsIt) {
  Graph g;
  const Var a = g.input(random(3, 2, 5)), b = g.input(random(3, 4, 6));
  const Matrix w = random(3, 6, 7);
  const Var parts[] = {a, b};
  g.backward(sum(mul(concat_cols(parts), g.constant(w))));
  EXPECT_EQ(g.grad(a), w.leftCols(2));
  EXPECT_EQ(g.grad(b), w.rightCols(4));

  Graph h;
  const Var x = h.input(random(2, 2, 8)), y = h.input(random(2, 2, 9));
  h.backward(sum(add(x, y)));
  EXPECT_EQ(h.grad(x), Matrix::Ones(2, 2));
  EXPECT_EQ(h.grad(y), Matrix::Ones(2, 2));
}

TEST(Dropout, InvertedPreservesMean) {
  Graph g(Mode::Training);
  CounterRng rng(3);
  const auto out = dropout(g.constant(Matrix::Constant(1, 100000, 2.0)), 0.2, rng).value();
  EXPECT_NEAR(out.mean(), 2.0, 0.04);
  Graph inf;
  const auto same = dropout(inf.constant(Matrix::Constant(1, 10, 2.0)), 0.2, rng).value();
  EXPECT_EQ(same, Matrix::Constant(1, 10, 2.0));
}

TEST(GradCheck, LinearIsExact) {
  Parameter w("w", random(1, 4, 10));
  const Matrix x = random(4, 1, 11);
  Parameter* ps[] = {&w};
  const auto r = grad_check([&](Graph& g) { return matmul(g.param(w), g.constant(x)); }, ps);
  EXPECT_LT(r.max_rel_error, 1e-10);
  EXPECT_EQ(r.coordinates, 4u);
}

TEST(GradCheck, EveryOpComposite) {
  Parameter a("a", random(3, 4, 12)), b("b", random(4, 3, 13)), r("r", random(1, 3, 14));
  Parameter* ps[] = {&a, &b, &r};
  const Matrix mask = (random(3, 3, 15).array() > -0.5).cast<double>();
  auto f = [&](Graph& g) {
    const Var A = g.param(a), B = g.param(b), R = g.param(r);
    Var m = matmul(A, B);                               // 3x3
    m = add_bias(elu(m), R);
    m = mul(tanh(m), sigmoid(transpose(m)));
    m = dropout(m, mask, 0.25);
    const Var s = softmax(m, Axis::Rows);
    const Var c = causal_softmax(scale(m, 0.7));
    const Var parts[] = {s, c};
    const Var cat = concat_rows(parts);                 // 6x3
    const std::vector<Eigen::Index> rows{0, 4, 2};
    const Var gath = gather_rows(cat, rows);
    const Var cols = mul_col(slice_cols(cat, 1, 2), slice_cols(slice_rows(cat, 0, 6), 0, 1));
    const Var terms[] = {sum(gath), mean(mul_row(cols, slice_cols(R, 0, 2))), sum(sub(s, c))};
    return add(add_n(terms), mse(slice_rows(m, 0, 1), Matrix::Constant(1, 3, 0.3)));
  };
  EXPECT_LT(grad_check(f, ps).max_rel_error, 1e-4);
}

TEST(GradCheck, FlagsWrongAdjoint) {
  Parameter w("w", random(2, 2, 30));
  Parameter* ps[] = {&w};
  // square with the adjoint off by 1%
  auto bad_square = [](Graph& g, Var a) {
    const Matrix v = a.value().array().square();
    return g.push("bad_square", v, {a.id}, [](Graph& gr, int id) {
      const int in = gr.inputs_of(id)[0];
      gr.grad_ref(in).array() += 2.02 * gr.value_of(in).array() * gr.grad_ref(id).array();
    });
  };
  const auto r = grad_check([&](Graph& g) { return sum(bad_square(g, g.param(w))); }, ps);
  EXPECT_GT(r.max_rel_error, 1e-3);
}

TEST(GradCheck, StructurallyZeroGradientPasses) {
  // Softmax is shift invariant, so the bias gets an exactly zero gradient.
  Parameter b("b", Matrix::Constant(1, 1, 0.3));
  const Matrix x = random(2, 3, 31);
  Parameter* ps[] = {&b};
  const auto r = grad_check(
      [&](Graph& g) {
        const Var shifted = add(g.constant(x), matmul(g.constant(Matrix::Ones(2, 1)), matmul(g.param(b), g.constant(Matrix::Ones(1, 3)))));
        return sum(mul(softmax(shifted), g.constant(random(2, 3, 32))));
      },
      ps);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Determinism, SameSeedSameResults) {
  auto run = [] {
    Parameter w("w", random(5, 5, 20));
    Graph g(Mode::Training);
    CounterRng rng(77);
    const Var y = dropout(tanh(matmul(g.param(w), g.constant(random(5, 5, 21)))), 0.3, rng);
    g.backward(sum(y));
    return std::pair{y.value(), w.grad};
  };
  const auto [v1, g1] = run();
  const auto [v2, g2] = run();
  EXPECT_EQ(v1, v2);
  EXPECT_EQ(g1, g2);
}
