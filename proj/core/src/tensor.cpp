#include "stackcast/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "stackcast/error.hpp"

namespace stackcast::diff {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
  throw ValidationError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ValidationError("diff: use of an unbound Var");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ValidationError("diff: operands belong to different graphs");
  return graph_of(a);
}

// Adds `delta` into the adjoint of input `id` if that input needs a gradient.
template <typename Expr>
void accumulate(Graph& g, int id, const Expr& delta) {
  if (g.needs_grad(id)) g.grad_ref(id) += delta;
}

}  // namespace

const Matrix& Var::value() const { return graph_of(*this).value(*this); }

Var Graph::leaf(std::string_view op, Matrix value, bool needs_grad, Parameter* p) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": non-finite leaf value");
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.param = p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) { return leaf("constant", std::move(value), false, nullptr); }

Var Graph::input(Matrix value) { return leaf("input", std::move(value), true, nullptr); }

Var Graph::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  Var v = leaf("param", p.value, true, &p);
  bound_.emplace(&p, v.id);
  return v;
}

Var Graph::push(std::string_view op, Matrix value, std::vector<int> inputs, Backward backward) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": non-finite result");
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (int in : inputs) n.needs_grad = n.needs_grad || nodes_[std::size_t(in)].needs_grad;
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Graph::grad_ref(int id) {
  auto& n = nodes_[std::size_t(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this || loss.id < 0 || std::size_t(loss.id) >= nodes_.size())
    throw ValidationError("backward: loss does not belong to this graph");
  const auto& out = nodes_[std::size_t(loss.id)];
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw ValidationError("backward: output must be a scalar, got " + shape(out.value));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!out.needs_grad) return;
  grad_ref(loss.id).setConstant(1.0);
  for (int id = loss.id; id >= 0; --id) {
    auto& n = nodes_[std::size_t(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (!n.grad.allFinite()) throw NumericError("backward: non-finite gradient for " + n.param->name);
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  return g.push("matmul", A * B, {a.id, b.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    if (g.needs_grad(in[0])) g.grad_ref(in[0]).noalias() += G * g.value_of(in[1]).transpose();
    if (g.needs_grad(in[1])) g.grad_ref(in[1]).noalias() += g.value_of(in[0]).transpose() * G;
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a.value(), b.value());
  return g.push("add", a.value() + b.value(), {a.id, b.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    accumulate(g, in[0], G);
    accumulate(g, in[1], G);
  });
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ValidationError("add_n: no terms");
  Graph& g = graph_of(terms.front());
  Matrix acc = terms.front().value();
  std::vector<int> ids{terms.front().id};
  for (std::size_t i = 1; i < terms.size(); ++i) {
    graph_of(terms.front(), terms[i]);
    if (terms[i].rows() != acc.rows() || terms[i].cols() != acc.cols()) shape_error("add_n", acc, terms[i].value());
    acc += terms[i].value();
    ids.push_back(terms[i].id);
  }
  return g.push("add_n", std::move(acc), std::move(ids), [](Graph& g, int self) {
    const Matrix& G = g.grad_ref(self);
    for (int in : g.inputs_of(self)) accumulate(g, in, G);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a.value(), b.value());
  return g.push("sub", a.value() - b.value(), {a.id, b.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    accumulate(g, in[0], G);
    if (g.needs_grad(in[1])) g.grad_ref(in[1]) -= G;
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a.value(), b.value());
  return g.push("mul", a.value().cwiseProduct(b.value()), {a.id, b.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    accumulate(g, in[0], G.cwiseProduct(g.value_of(in[1])));
    accumulate(g, in[1], G.cwiseProduct(g.value_of(in[0])));
  });
}

Var add_bias(Var a, Var row) {
  Graph& g = graph_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_bias", a.value(), row.value());
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return g.push("add_bias", std::move(out), {a.id, row.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    accumulate(g, in[0], G);
    accumulate(g, in[1], G.colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  Graph& g = graph_of(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) shape_error("mul_col", a.value(), col.value());
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return g.push("mul_col", std::move(out), {a.id, col.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    const Matrix& A = g.value_of(in[0]);
    const Matrix& C = g.value_of(in[1]);
    if (g.needs_grad(in[0])) g.grad_ref(in[0]).array() += G.array().colwise() * C.col(0).array();
    accumulate(g, in[1], G.cwiseProduct(A).rowwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("mul_row", a.value(), row.value());
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return g.push("mul_row", std::move(out), {a.id, row.id}, [](Graph& g, int self) {
    const auto& in = g.inputs_of(self);
    const Matrix& G = g.grad_ref(self);
    const Matrix& A = g.value_of(in[0]);
    const Matrix& R = g.value_of(in[1]);
    if (g.needs_grad(in[0])) g.grad_ref(in[0]).array() += G.array().rowwise() * R.row(0).array();
    accumulate(g, in[1], G.cwiseProduct(A).colwise().sum());
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  return g.push("scale", a.value() * s, {a.id}, [s](Graph& g, int self) {
    accumulate(g, g.inputs_of(self)[0], g.grad_ref(self) * s);
  });
}

Var sigmoid(Var a) {
  Graph& g = graph_of(a);
  Matrix y = a.value().unaryExpr([](double x) {
    // split on sign so large |x| neither overflows nor loses the tail
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return g.push("sigmoid", std::move(y), {a.id}, [](Graph& g, int self) {
    const Matrix& y = g.value_of(self);
    accumulate(g, g.inputs_of(self)[0], g.grad_ref(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(Var a) {
  Graph& g = graph_of(a);
  Matrix y = a.value().array().tanh().matrix();
  return g.push("tanh", std::move(y), {a.id}, [](Graph& g, int self) {
    const Matrix& y = g.value_of(self);
    accumulate(g, g.inputs_of(self)[0], (g.grad_ref(self).array() * (1.0 - y.array().square())).matrix());
  });
}

Var elu(Var a) {
  Graph& g = graph_of(a);
  Matrix y = a.value().unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
  return g.push("elu", std::move(y), {a.id}, [](Graph& g, int self) {
    const Matrix& x = g.value_of(g.inputs_of(self)[0]);
    const Matrix& y = g.value_of(self);
    Matrix d = x.binaryExpr(y, [](double xi, double yi) { return xi > 0 ? 1.0 : yi + 1.0; });
    accumulate(g, g.inputs_of(self)[0], g.grad_ref(self).cwiseProduct(d));
  });
}

namespace {

// Row-wise softmax over the first `limit(i)` entries of each row; the rest are zero.
template <typename Limit>
Matrix softmax_rows(const Matrix& x, Limit limit) {
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index n = limit(i);
    const double m = x.row(i).head(n).maxCoeff();
    double z = 0;
    for (Eigen::Index j = 0; j < n; ++j) z += (y(i, j) = std::exp(x(i, j) - m));
    y.row(i).head(n) /= z;
  }
  return y;
}

// d x = y * (d y - <d y, y>) row by row; masked entries have y = 0 and get nothing.
void softmax_rows_backward(Graph& g, int self) {
  const Matrix& y = g.value_of(self);
  const Matrix& G = g.grad_ref(self);
  const Eigen::VectorXd dot = G.cwiseProduct(y).rowwise().sum();
  Matrix dx = y.array() * (G.array().colwise() - dot.array());
  accumulate(g, g.inputs_of(self)[0], dx);
}

}  // namespace

Var softmax(Var a, Axis axis) {
  Graph& g = graph_of(a);
  if (axis == Axis::Cols) return transpose(softmax(transpose(a), Axis::Rows));
  const Eigen::Index cols = a.cols();
  return g.push("softmax", softmax_rows(a.value(), [cols](Eigen::Index) { return cols; }), {a.id},
                softmax_rows_backward);
}

Var causal_softmax(Var scores) {
  Graph& g = graph_of(scores);
  if (scores.rows() != scores.cols()) throw ValidationError("causal_softmax: scores must be square, got " + shape(scores.value()));
  return g.push("causal_softmax", softmax_rows(scores.value(), [](Eigen::Index i) { return i + 1; }), {scores.id},
                softmax_rows_backward);
}

Var dropout(Var a, const Matrix& mask, double p) {
  Graph& g = graph_of(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) shape_error("dropout", a.value(), mask);
  if (!(p >= 0 && p < 1)) throw ValidationError("dropout: rate must be in [0, 1)");
  Matrix m = mask / (1.0 - p);
  Matrix y = a.value().cwiseProduct(m);
  return g.push("dropout", std::move(y), {a.id}, [m = std::move(m)](Graph& g, int self) {
    accumulate(g, g.inputs_of(self)[0], g.grad_ref(self).cwiseProduct(m));
  });
}

Var dropout(Var a, double p, CounterRng& rng) {
  Graph& g = graph_of(a);
  if (!g.training() || p == 0.0) return a;
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng.uniform() >= p ? 1.0 : 0.0;
  return dropout(a, mask, p);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no parts");
  Graph& g = graph_of(parts.front());
  Eigen::Index cols = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    graph_of(parts.front(), p);
    if (p.rows() != parts.front().rows()) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return g.push("concat_cols", std::move(out), std::move(ids), [](Graph& g, int self) {
    const Matrix& G = g.grad_ref(self);
    Eigen::Index at = 0;
    for (int in : g.inputs_of(self)) {
      const auto c = g.value_of(in).cols();
      accumulate(g, in, G.middleCols(at, c));
      at += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no parts");
  Graph& g = graph_of(parts.front());
  Eigen::Index rows = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    graph_of(parts.front(), p);
    if (p.cols() != parts.front().cols()) shape_error("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix out(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return g.push("concat_rows", std::move(out), std::move(ids), [](Graph& g, int self) {
    const Matrix& G = g.grad_ref(self);
    Eigen::Index at = 0;
    for (int in : g.inputs_of(self)) {
      const auto r = g.value_of(in).rows();
      accumulate(g, in, G.middleRows(at, r));
      at += r;
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Graph& g = graph_of(a);
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ValidationError("slice_cols: range out of bounds for " + shape(a.value()));
  return g.push("slice_cols", a.value().middleCols(start, count), {a.id}, [start, count](Graph& g, int self) {
    const int in = g.inputs_of(self)[0];
    if (g.needs_grad(in)) g.grad_ref(in).middleCols(start, count) += g.grad_ref(self);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Graph& g = graph_of(a);
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ValidationError("slice_rows: range out of bounds for " + shape(a.value()));
  return g.push("slice_rows", a.value().middleRows(start, count), {a.id}, [start, count](Graph& g, int self) {
    const int in = g.inputs_of(self)[0];
    if (g.needs_grad(in)) g.grad_ref(in).middleRows(start, count) += g.grad_ref(self);
  });
}

Var gather_rows(Var a, std::span<const Eigen::Index> rows) {
  Graph& g = graph_of(a);
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  Matrix out(Eigen::Index(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw ValidationError("gather_rows: row index out of bounds");
    out.row(Eigen::Index(i)) = a.value().row(idx[i]);
  }
  return g.push("gather_rows", std::move(out), {a.id}, [idx = std::move(idx)](Graph& g, int self) {
    const int in = g.inputs_of(self)[0];
    if (!g.needs_grad(in)) return;
    const Matrix& G = g.grad_ref(self);
    Matrix& dA = g.grad_ref(in);
    for (std::size_t i = 0; i < idx.size(); ++i) dA.row(idx[i]) += G.row(Eigen::Index(i));
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  return g.push("transpose", a.value().transpose(), {a.id}, [](Graph& g, int self) {
    accumulate(g, g.inputs_of(self)[0], g.grad_ref(self).transpose());
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.push("sum", std::move(out), {a.id}, [](Graph& g, int self) {
    const int in = g.inputs_of(self)[0];
    if (g.needs_grad(in)) g.grad_ref(in).array() += g.grad_ref(self)(0, 0);
  });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse(Var pred, const Matrix& target) {
  Graph& g = graph_of(pred);
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) shape_error("mse", pred.value(), target);
  const double n = static_cast<double>(target.size());
  Matrix diff = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return g.push("mse", std::move(out), {pred.id}, [diff = std::move(diff), n](Graph& g, int self) {
    accumulate(g, g.inputs_of(self)[0], diff * (2.0 * g.grad_ref(self)(0, 0) / n));
  });
}

}  // namespace stackcast::diff
