#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "stackcast/model.hpp"

namespace stackcast {

/// Recurrent cell whose forget gate is replaced by an attention gate computed from the
/// previous cell state alone:
///   A_t = sigmoid(C_{t-1} W_a + b_a)
///   i_t = sigmoid([h_{t-1}, x_t] W_i + b_i)
///   z_t = tanh([h_{t-1}, x_t] W_z + b_z)
///   o_t = sigmoid([h_{t-1}, x_t] W_o + b_o)
///   C_t = A_t * C_{t-1} + i_t * z_t
///   h_t = o_t * tanh(C_t)
/// The three input-driven gates share one weight matrix, columns [i | z | o].
class AttentionGateCell {
 public:
  struct State {
    diff::Var h;
    diff::Var c;
  };
  struct Trace {
    diff::Var attention;  // A_t
    diff::Var input;      // i_t
    diff::Var candidate;  // z_t
    diff::Var output;     // o_t
  };

  AttentionGateCell() = default;
  AttentionGateCell(std::string name, Eigen::Index inputs, Eigen::Index hidden);

  /// Uniform +/- 1/sqrt(fan-in) weights, zero gate biases, attention bias +1.
  void init(CounterRng& rng);

  State step(diff::Graph& g, diff::Var x, const State& prev, Trace* trace = nullptr);
  State zero_state(diff::Graph& g, Eigen::Index batch) const;

  Eigen::Index inputs() const noexcept { return inputs_; }
  Eigen::Index hidden() const noexcept { return hidden_; }
  std::size_t size() const { return w_a.size() + b_a.size() + w_gates.size() + b_gates.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  diff::Parameter w_a;      // hidden x hidden
  diff::Parameter b_a;      // 1 x hidden
  diff::Parameter w_gates;  // (hidden + inputs) x 3*hidden, rows [h ; x]
  diff::Parameter b_gates;  // 1 x 3*hidden

 private:
  Eigen::Index inputs_ = 0;
  Eigen::Index hidden_ = 0;
};

/// Two independent attention-gate cells, one reading the window forward and one backward.
/// Output at step t is [h_fwd(t), h_bwd(t)].
class BiLstmLayer {
 public:
  struct Output {
    std::vector<diff::Var> steps;  // per timestep, batch x 2*hidden
    diff::Var forward_final;       // h_fwd after the last step
    diff::Var backward_final;      // h_bwd after reading back to the first step
  };

  BiLstmLayer() = default;
  BiLstmLayer(std::string name, Eigen::Index inputs, Eigen::Index hidden);
  void init(CounterRng& rng);
  Output apply(diff::Graph& g, const std::vector<diff::Var>& xs);
  std::size_t size() const { return forward.size() + backward.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  AttentionGateCell forward;
  AttentionGateCell backward;
};

/// Parallel branch weighting the five input channels. Each channel is summarized by its
/// window mean; score_j = a_j * mean_j + u_j + prior_j; weights = softmax(score).
/// The fixed prior lifts close and volume.
class FeatureAttention {
 public:
  struct Output {
    diff::Var context;  // batch x features: weight_j * mean_j
    diff::Var weights;  // batch x features, rows sum to 1
  };

  FeatureAttention() = default;
  FeatureAttention(Eigen::Index features, std::vector<std::size_t> priority, double prior);

  Output apply(diff::Graph& g, const std::vector<diff::Var>& xs);
  std::size_t size() const { return slope.size() + offset.size(); }
  void collect(std::vector<diff::Parameter*>& out);
  const diff::Matrix& prior() const noexcept { return prior_; }

  diff::Parameter slope;   // 1 x features, a
  diff::Parameter offset;  // 1 x features, u

 private:
  diff::Matrix prior_;
};

struct AcbArchitecture {
  std::size_t lookback = 60;
  std::size_t inputs = kNumOhlcv;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::size_t dense = 64;
  double dropout = 0.2;
  double prior = 0.5;

  static AcbArchitecture baseline() { return {}; }
  /// Ablation variant with halved recurrent widths (32 / 16).
  AcbArchitecture reduced() const;

  std::string descriptor() const;
  static AcbArchitecture from_descriptor(const std::string& line);
  void validate() const;
  friend bool operator==(const AcbArchitecture&, const AcbArchitecture&) = default;
};

/// Published totals the audit is compared against.
inline constexpr std::size_t kAcbPublishedBaselineTotal = 80'926;
inline constexpr std::size_t kAcbPublishedReducedTotal = 16'610;

/// Attention-customized BiLSTM: two stacked BiLSTM layers built from attention-gate cells,
/// in parallel with the feature-attention branch; [terminal BiLSTM state, context] feeds
/// dense(ELU) -> dense(1).
class AcbModel final : public Regressor {
 public:
  explicit AcbModel(AcbArchitecture arch = {}, std::uint64_t seed = 42);

  std::string kind() const override { return "acb"; }
  std::size_t lookback() const override { return arch_.lookback; }
  std::size_t input_features() const override { return arch_.inputs; }
  std::vector<diff::Parameter*> parameters() override;
  diff::Var forward(diff::Graph& g, const WindowBatch& batch, CounterRng& rng) override;
  ParameterAudit audit() const override;
  std::string descriptor() const override { return arch_.descriptor(); }

  const AcbArchitecture& architecture() const noexcept { return arch_; }

  /// Softmax feature weights for one window (inference mode).
  std::vector<double> feature_weights(const diff::Matrix& window) const;
  /// feature,weight CSV averaged over the given windows.
  std::string feature_weights_csv(const SampleSet& samples) const;

  void save(std::ostream& out);
  static AcbModel load(std::istream& in);

  BiLstmLayer layer1;
  BiLstmLayer layer2;
  FeatureAttention attention;
  Dense hidden;
  Dense head;

 private:
  AcbArchitecture arch_;
};

/// Splits a time-major batch into per-step batch x features constants.
std::vector<diff::Var> split_steps(diff::Graph& g, const WindowBatch& batch);

}  // namespace stackcast
