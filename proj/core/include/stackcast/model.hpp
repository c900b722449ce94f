#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stackcast/market_data.hpp"
#include "stackcast/rng.hpp"
#include "stackcast/tensor.hpp"

namespace stackcast {

/// A batch of equal-length windows stacked time-major: row t * batch + b holds step t of
/// window b. Time-major keeps every recurrent step a contiguous row block.
struct WindowBatch {
  diff::Matrix steps;
  Eigen::Index batch = 0;
  Eigen::Index length = 0;

  Eigen::Index features() const { return steps.cols(); }
};

WindowBatch make_batch(const SampleSet& samples, std::span<const std::size_t> indices);
/// Single window given as length x features.
WindowBatch make_batch(const diff::Matrix& window);

/// Component-level parameter count with the published figure it is compared against.
struct CountRow {
  std::string component;
  std::size_t audited = 0;
  std::size_t published = 0;  // 0 when the published tables have no such row
};

struct ParameterAudit {
  std::vector<CountRow> rows;
  std::size_t total = 0;
  std::size_t published_total = 0;

  std::string to_text() const;
};

/// Common surface of the two base learners. Predictions are normalized next-day closes.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t lookback() const = 0;
  virtual std::size_t input_features() const = 0;
  virtual std::vector<diff::Parameter*> parameters() = 0;

  /// batch x 1 predictions. Dropout is active only when `g` is a training graph.
  virtual diff::Var forward(diff::Graph& g, const WindowBatch& batch, CounterRng& rng) = 0;

  virtual ParameterAudit audit() const = 0;

  /// Architecture line for the serialized header.
  virtual std::string descriptor() const = 0;

  std::size_t parameter_count();

  /// Inference-mode predictions. Reads parameters only, so a trained model can be shared
  /// across threads.
  std::vector<double> predict(const SampleSet& samples, std::size_t batch_size = 256) const;
  double predict_one(const diff::Matrix& window) const;
};

/// Fully connected layer y = x W + b, W is in x out.
struct Dense {
  diff::Parameter w;
  diff::Parameter b;

  Dense() = default;
  Dense(std::string name, Eigen::Index in, Eigen::Index out);
  /// Uniform weights in +/- 1/sqrt(in); zero bias.
  void init(CounterRng& rng);
  diff::Var apply(diff::Graph& g, diff::Var x);
  std::size_t size() const { return w.size() + b.size(); }
  void collect(std::vector<diff::Parameter*>& out) { out.push_back(&w); out.push_back(&b); }
};

void init_uniform(diff::Matrix& m, double bound, CounterRng& rng);

/// Exact bit-level snapshot of parameter values, used for restore-best and freezing.
std::vector<diff::Matrix> snapshot(std::span<diff::Parameter* const> params);
void restore(std::span<diff::Parameter* const> params, const std::vector<diff::Matrix>& values);

/// Versioned text format: a header line, the architecture descriptor, then one block per
/// parameter with values as hexadecimal floats (bit-exact round trip).
void write_parameters(std::ostream& out, std::string_view kind, std::string_view descriptor,
                      std::span<diff::Parameter* const> params);
/// Reads values into `params` (names and shapes must match). Returns the descriptor line.
std::string read_parameters(std::istream& in, std::string_view kind, std::span<diff::Parameter* const> params);
/// Peeks the descriptor without loading values.
std::string read_descriptor(std::istream& in, std::string_view kind);

}  // namespace stackcast
