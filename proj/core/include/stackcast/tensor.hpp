#pragma once

// Minimal reverse-mode differentiation over dense double matrices. A Graph is a tape:
// every op appends a node holding its forward value and a closure that pushes the
// node's adjoint into its inputs. Parameters live outside graphs and receive their
// gradients when a graph is back-propagated.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "stackcast/rng.hpp"

namespace stackcast::diff {

using Matrix = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(value.size()); }
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

enum class Mode { Inference, Training };

class Graph {
 public:
  explicit Graph(Mode mode = Mode::Inference) : mode_(mode) { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const noexcept { return mode_ == Mode::Training; }

  /// Leaf without gradient.
  Var constant(Matrix value);
  /// Leaf whose adjoint is kept after backward (gradient w.r.t. an input).
  Var input(Matrix value);
  /// Leaf bound to a parameter. Binding the same parameter twice returns the same node.
  Var param(Parameter& p);

  const Matrix& value(Var v) const { return nodes_.at(std::size_t(v.id)).value; }
  /// Adjoint after backward. Zero-sized for nodes that do not need a gradient.
  const Matrix& grad(Var v) const { return nodes_.at(std::size_t(v.id)).grad; }

  /// Zeroes every adjoint, seeds d(loss)/d(loss) = 1, sweeps the tape in reverse order and
  /// adds each bound parameter's adjoint into Parameter::grad. `loss` must be 1x1.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by the op implementations.
  using Backward = std::function<void(Graph&, int)>;
  Var push(std::string_view op, Matrix value, std::vector<int> inputs, Backward backward);
  bool needs_grad(int id) const { return nodes_[std::size_t(id)].needs_grad; }
  Matrix& grad_ref(int id);
  const Matrix& value_of(int id) const { return nodes_[std::size_t(id)].value; }
  const std::vector<int>& inputs_of(int id) const { return nodes_[std::size_t(id)].inputs; }

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    Matrix grad;
    std::vector<int> inputs;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var leaf(std::string_view op, Matrix value, bool needs_grad, Parameter* p);

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
};

enum class Axis { Rows, Cols };  // softmax over the entries of each row / each column

// Forward ops. All check shapes and throw ValidationError on mismatch, NumericError on a
// non-finite result.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_n(std::span<const Var> terms);
Var sub(Var a, Var b);
Var mul(Var a, Var b);              // elementwise
Var add_bias(Var a, Var row);       // a (m x n) + row (1 x n) broadcast down the rows
Var mul_col(Var a, Var col);        // a (m x n) * col (m x 1) broadcast across the columns
Var mul_row(Var a, Var row);        // a (m x n) * row (1 x n) broadcast down the rows
Var scale(Var a, double s);
Var sigmoid(Var a);
Var tanh(Var a);
Var elu(Var a);
Var softmax(Var a, Axis axis = Axis::Rows);
/// Row-wise softmax of a square score matrix where entry (i, j) is excluded for j > i.
Var causal_softmax(Var scores);
/// Inverted dropout with an explicit keep-mask of 0/1 entries: a * mask / (1 - p).
Var dropout(Var a, const Matrix& mask, double p);
/// Draws the mask from `rng` in training mode; identity in inference mode or when p == 0.
Var dropout(Var a, double p, CounterRng& rng);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::span<const Eigen::Index> rows);
Var transpose(Var a);
Var sum(Var a);
Var mean(Var a);
/// Mean squared error against a fixed target of the same shape, as a 1x1 node.
Var mse(Var pred, const Matrix& target);

}  // namespace stackcast::diff
