#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "stackcast/error.hpp"
#include "stackcast/grad_check.hpp"
#include "stackcast/tft_model.hpp"

using namespace stackcast;
using diff::Matrix;

namespace {

double sig(double x) { return 1 / (1 + std::exp(-x)); }
double elu(double x) { return x > 0 ? x : std::expm1(x); }

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

TftArchitecture tiny_arch() {
  TftArchitecture a;
  a.lookback = 3;
  a.d_model = 4;
  a.dropout = 0.0;
  return a;
}

void set_dense(Dense& d, double w, double b) {
  d.w.value.setConstant(w);
  d.b.value.setConstant(b);
}

}  // namespace

TEST(Grn, ScalarMatchesHandComputation) {
  Grn grn("g", 1);
  set_dense(grn.fc1, 0.5, -0.2);
  set_dense(grn.fc2, -1.5, 0.1);
  set_dense(grn.value, 2.0, 0.3);
  set_dense(grn.gate, 0.7, -0.4);
  diff::Graph g;
  for (double x : {-2.0, 0.0, 1.3}) {
    const double u = -1.5 * elu(0.5 * x - 0.2) + 0.1;
    const double expect = x + (2.0 * u + 0.3) * sig(0.7 * u - 0.4);
    EXPECT_NEAR(grn.apply(g, g.constant(Matrix::Constant(1, 1, x))).scalar(), expect, 1e-15);
  }
}

TEST(Grn, ZeroValueBranchIsIdentity) {
  CounterRng rng(1);
  Grn grn("g", 5);
  grn.init(rng);
  set_dense(grn.value, 0, 0);
  diff::Graph g;
  const auto x = random_matrix(3, 5, 2);
  EXPECT_EQ(grn.apply(g, g.constant(x)).value(), x);
}

TEST(VariableSelection, WeightsAreSoftmaxOfScoresAndBlendEmbeddings) {
  CounterRng rng(3);
  VariableSelection vs(4, 3);
  vs.init(rng);
  diff::Graph g;
  const auto x = random_matrix(5, 4, 4);
  const auto out = vs.apply(g, g.constant(x));
  ASSERT_EQ(out.weights.rows(), 5);
  ASSERT_EQ(out.weights.cols(), 4);
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_NEAR(out.weights.value().row(r).sum(), 1.0, 1e-15);
    // Independent recomputation of row r.
    Matrix emb(4, 3);
    Eigen::VectorXd score(4);
    for (Eigen::Index j = 0; j < 4; ++j) {
      emb.row(j) = x(r, j) * vs.embed_w.value.row(j) + vs.embed_b.value.row(j);
      diff::Graph h;
      score(j) = vs.score.apply(h, vs.grn.apply(h, h.constant(emb.row(j)))).scalar();
    }
    const Eigen::VectorXd w = (score.array() - score.maxCoeff()).exp() / (score.array() - score.maxCoeff()).exp().sum();
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(out.weights.value()(r, j), w(j), 1e-14);
    const Eigen::RowVectorXd blended = w.transpose() * emb;
    EXPECT_TRUE(out.blended.value().row(r).isApprox(blended, 1e-13));
  }
}

TEST(LstmEncoder, ScalarRecurrenceWithForgetBiasOne) {
  CounterRng rng(0);
  LstmEncoder lstm("l", 1, 1);
  lstm.init(rng);
  EXPECT_EQ(lstm.b.value, (Matrix(1, 4) << 0, 1, 0, 0).finished());
  lstm.w.value << 0.2, -0.3, 0.4, 0.5,
                  0.6, 0.1, -0.7, 0.8;
  diff::Graph g;
  std::vector<diff::Var> xs{g.constant(Matrix::Constant(1, 1, 1.0)), g.constant(Matrix::Constant(1, 1, -0.5))};
  const auto hs = lstm.apply(g, xs);
  double h = 0, c = 0;
  for (int t = 0; t < 2; ++t) {
    const double x = t == 0 ? 1.0 : -0.5;
    const double i = sig(0.2 * h + 0.6 * x), f = sig(-0.3 * h + 0.1 * x + 1), z = std::tanh(0.4 * h - 0.7 * x),
                 o = sig(0.5 * h + 0.8 * x);
    c = f * c + i * z;
    h = o * std::tanh(c);
    EXPECT_NEAR(hs[std::size_t(t)].scalar(), h, 1e-15);
  }
}

TEST(TemporalAttention, CausalWeightsAndLastRowEquivalence) {
  CounterRng rng(5);
  TemporalAttention att("a", 4);
  att.init(rng);
  diff::Graph g;
  const auto seq = g.constant(random_matrix(6, 4, 6));
  const auto full = att.self_attend(g, seq);
  const auto& w = full.weights.value();
  for (Eigen::Index i = 0; i < 6; ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-15);
    for (Eigen::Index j = i + 1; j < 6; ++j) EXPECT_EQ(w(i, j), 0.0);
  }
  EXPECT_EQ(w(0, 0), 1.0);
  const auto last = att.attend_last(g, seq);
  EXPECT_TRUE(last.weights.value().isApprox(w.bottomRows(1), 1e-14));
  EXPECT_TRUE(last.out.value().isApprox(full.out.value().bottomRows(1), 1e-14));
}

TEST(TemporalAttention, EarlierOutputsIgnoreLaterSteps) {
  CounterRng rng(7);
  TemporalAttention att("a", 3);
  att.init(rng);
  auto x = random_matrix(5, 3, 8);
  diff::Graph g;
  const Matrix before = att.self_attend(g, g.constant(x)).out.value();
  x.row(4).setConstant(9.0);
  const Matrix after = att.self_attend(g, g.constant(x)).out.value();
  EXPECT_EQ(before.topRows(4), after.topRows(4));
  EXPECT_NE(before.row(4), after.row(4));
}

TEST(TftModel, ForwardMatchesFullSequencePath) {
  TftModel m(tiny_arch(), 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto w = random_matrix(3, 24, 10 + s);
    EXPECT_NEAR(m.predict_one(w), m.predict_full_path(w), 1e-12);
  }
}

TEST(TftModel, BatchedForwardMatchesPerWindow) {
  TftModel m(tiny_arch(), 4);
  auto rows = std::make_shared<const Matrix>(random_matrix(10, 24, 2));
  const auto samples = make_windows(rows, 3);
  const auto batched = m.predict(samples, 4);
  ASSERT_EQ(batched.size(), samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) EXPECT_NEAR(batched[k], m.predict_one(samples.window(k)), 1e-13);
}

TEST(TftModel, GradientsMatchFiniteDifferences) {
  TftModel m(tiny_arch(), 9);
  const auto w1 = random_matrix(3, 24, 1), w2 = random_matrix(3, 24, 2);
  WindowBatch b{Matrix(6, 24), 2, 3};
  for (int t = 0; t < 3; ++t) {
    b.steps.row(2 * t) = w1.row(t);
    b.steps.row(2 * t + 1) = w2.row(t);
  }
  const Matrix target = (Matrix(2, 1) << 0.4, -0.2).finished();
  auto params = m.parameters();
  const auto res = diff::grad_check(
      [&](diff::Graph& g) {
        CounterRng rng(0);
        return diff::mse(m.forward(g, b, rng), target);
      },
      params, /*eps=*/1e-5);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
  EXPECT_EQ(res.coordinates, m.parameter_count());
}

TEST(TftModel, AuditRowsAtBothWidths) {
  auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
  for (std::size_t d : {32u, 64u}) {
    TftArchitecture arch;
    arch.d_model = d;
    TftModel m(arch, 1);
    const auto a = m.audit();
    ASSERT_EQ(a.rows.size(), 7u);
    EXPECT_EQ(a.rows[0].audited, 2 * 24 * d);
    EXPECT_EQ(a.rows[1].audited, 4 * dense(d, d));
    EXPECT_EQ(a.rows[2].audited, dense(d, 1));
    EXPECT_EQ(a.rows[3].audited, dense(2 * d, 4 * d));
    EXPECT_EQ(a.rows[4].audited, 4 * dense(d, d));
    EXPECT_EQ(a.rows[5].audited, 2 * dense(d, d));
    EXPECT_EQ(a.rows[6].audited, dense(d, 1));
    EXPECT_EQ(a.total, m.parameter_count());
    for (std::size_t r = 1; r < 7; ++r) {
      // The published wide-model encoder row counts a 5-wide input, not the d-wide selection output.
      if (d == 64 && r == 3) {
        EXPECT_EQ(a.rows[r].published, 4 * 64 * (64 + 5 + 1));
        continue;
      }
      if (a.rows[r].published) EXPECT_EQ(a.rows[r].published, a.rows[r].audited) << a.rows[r].component;
    }
  }
  TftModel custom;
  EXPECT_EQ(custom.audit().total, 20'482u);
  EXPECT_EQ(custom.audit().published_total, kTftPublishedTotal);
}

TEST(TftModel, InterpretShapesAndNormalization) {
  TftModel m(tiny_arch(), 5);
  const auto w = random_matrix(3, 24, 3);
  const auto info = m.interpret(w);
  ASSERT_EQ(info.variable_weights.rows(), 3);
  ASSERT_EQ(info.variable_weights.cols(), 24);
  ASSERT_EQ(info.attention.rows(), 3);
  ASSERT_EQ(info.attention.cols(), 3);
  for (Eigen::Index t = 0; t < 3; ++t) {
    EXPECT_NEAR(info.variable_weights.row(t).sum(), 1.0, 1e-14);
    EXPECT_NEAR(info.attention.row(t).sum(), 1.0, 1e-14);
  }
  EXPECT_EQ(info.attention(0, 1), 0.0);
  const auto names = tft_variable_names();
  const auto csv = m.interpretability_csv(w, names);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 + 1 + 3);
  const std::vector<std::string> short_names(3, "x");
  EXPECT_THROW(m.interpretability_csv(w, short_names), ValidationError);
}

TEST(TftModel, VariableNames) {
  const auto names = tft_variable_names();
  ASSERT_EQ(names.size(), 24u);
  EXPECT_EQ(names[3], "close");
  EXPECT_EQ(names[5], "dow_mon");
  EXPECT_EQ(names[23], "month_12");
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), 24u);
}

TEST(TftModel, RejectsWrongWindowShape) {
  TftModel m(tiny_arch(), 1);
  EXPECT_THROW(m.predict_one(random_matrix(4, 24, 1)), ValidationError);
  EXPECT_THROW(m.predict_one(random_matrix(3, 5, 1)), ValidationError);
}

TEST(TftModel, DropoutOnlyInTraining) {
  auto arch = tiny_arch();
  arch.dropout = 0.5;
  TftModel m(arch, 2);
  const auto b = make_batch(random_matrix(3, 24, 4));
  diff::Graph i1, i2, t1(diff::Mode::Training), t2(diff::Mode::Training);
  CounterRng r1(1), r2(2), r3(1), r4(2);
  EXPECT_EQ(m.forward(i1, b, r1).scalar(), m.forward(i2, b, r2).scalar());
  EXPECT_NE(m.forward(t1, b, r3).scalar(), m.forward(t2, b, r4).scalar());
}

TEST(TftModel, SaveLoadIsBitExact) {
  TftModel m(tiny_arch(), 6);
  std::stringstream buf;
  m.save(buf);
  auto back = TftModel::load(buf);
  EXPECT_EQ(back.architecture(), m.architecture());
  const auto pa = m.parameters(), pb = back.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  const auto w = random_matrix(3, 24, 5);
  EXPECT_EQ(m.predict_one(w), back.predict_one(w));
}

TEST(TftArchitecture, DescriptorRoundTripAndValidation) {
  auto a = tiny_arch();
  EXPECT_EQ(TftArchitecture::from_descriptor(a.descriptor()), a);
  EXPECT_THROW(TftArchitecture::from_descriptor("acb lookback=3"), ValidationError);
  EXPECT_THROW(TftArchitecture::from_descriptor("tft colour=3"), ValidationError);
  a.d_model = 0;
  EXPECT_THROW(a.validate(), ValidationError);
  EXPECT_EQ(TftArchitecture::full().d_model, 64u);
}
