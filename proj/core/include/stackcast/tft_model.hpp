#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "stackcast/model.hpp"

namespace stackcast {

/// Gated residual network without layer normalization:
///   u = W2 elu(W1 x + b1) + b2,  out = x + (u Wv + bv) * sigmoid(u Wg + bg).
class Grn {
 public:
  Grn() = default;
  Grn(std::string name, Eigen::Index width);
  void init(CounterRng& rng);
  diff::Var apply(diff::Graph& g, diff::Var x);
  std::size_t size() const { return fc1.size() + fc2.size() + value.size() + gate.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  Dense fc1;
  Dense fc2;
  Dense value;
  Dense gate;
};

/// Per-variable scalar embeddings scored by one shared GRN and a d -> 1 projection, softmaxed
/// across variables. Output is the weight-blended embedding.
class VariableSelection {
 public:
  struct Output {
    diff::Var blended;  // rows x d
    diff::Var weights;  // rows x variables
  };

  VariableSelection() = default;
  VariableSelection(Eigen::Index variables, Eigen::Index width);
  void init(CounterRng& rng);
  /// `x` is rows x variables.
  Output apply(diff::Graph& g, diff::Var x);
  std::size_t size() const { return embed_w.size() + embed_b.size() + grn.size() + score.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  diff::Parameter embed_w;  // variables x d
  diff::Parameter embed_b;  // variables x d
  Grn grn;
  Dense score;  // d x 1
};

/// Standard LSTM; gate columns [i | f | g | o], forget bias initialized to +1.
class LstmEncoder {
 public:
  LstmEncoder() = default;
  LstmEncoder(std::string name, Eigen::Index inputs, Eigen::Index hidden);
  void init(CounterRng& rng);
  std::vector<diff::Var> apply(diff::Graph& g, const std::vector<diff::Var>& xs);
  std::size_t size() const { return w.size() + b.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  diff::Parameter w;  // (hidden + inputs) x 4*hidden, rows [h ; x]
  diff::Parameter b;  // 1 x 4*hidden

 private:
  Eigen::Index inputs_ = 0;
  Eigen::Index hidden_ = 0;
};

/// Single-head scaled dot-product attention with Q/K/V/O projections.
class TemporalAttention {
 public:
  struct Output {
    diff::Var out;      // queries x d
    diff::Var weights;  // queries x keys
  };

  TemporalAttention() = default;
  TemporalAttention(std::string name, Eigen::Index width);
  void init(CounterRng& rng);
  /// Full causal self-attention over one sequence (length x d).
  Output self_attend(diff::Graph& g, diff::Var seq);
  /// Attention for the final position only; identical to the last row of self_attend.
  Output attend_last(diff::Graph& g, diff::Var seq);
  std::size_t size() const { return q.size() + k.size() + v.size() + o.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  Dense q, k, v, o;
};

/// Two dense layers with ELU between them.
class PositionwiseFF {
 public:
  PositionwiseFF() = default;
  PositionwiseFF(std::string name, Eigen::Index width);
  void init(CounterRng& rng);
  diff::Var apply(diff::Graph& g, diff::Var x);
  std::size_t size() const { return fc1.size() + fc2.size(); }
  void collect(std::vector<diff::Parameter*>& out);

  Dense fc1, fc2;
};

struct TftArchitecture {
  std::size_t lookback = 60;
  std::size_t variables = kNumOhlcv + kNumCalendar;
  std::size_t d_model = 32;
  double dropout = 0.1;

  static TftArchitecture customized() { return {}; }
  static TftArchitecture full() {
    TftArchitecture a;
    a.d_model = 64;
    return a;
  }

  std::string descriptor() const;
  static TftArchitecture from_descriptor(const std::string& line);
  void validate() const;
  friend bool operator==(const TftArchitecture&, const TftArchitecture&) = default;
};

inline constexpr std::size_t kTftPublishedTotal = 15'457;

/// Customized TFT: variable selection per step, LSTM encoder with output dropout, causal
/// single-head attention and position-wise FF (each with a residual skip), dense head on the
/// final position.
class TftModel final : public Regressor {
 public:
  struct Interpretability {
    diff::Matrix variable_weights;  // lookback x variables
    diff::Matrix attention;         // lookback x lookback, lower triangular
  };

  explicit TftModel(TftArchitecture arch = {}, std::uint64_t seed = 42);

  std::string kind() const override { return "tft"; }
  std::size_t lookback() const override { return arch_.lookback; }
  std::size_t input_features() const override { return arch_.variables; }
  std::vector<diff::Parameter*> parameters() override;
  diff::Var forward(diff::Graph& g, const WindowBatch& batch, CounterRng& rng) override;
  ParameterAudit audit() const override;
  std::string descriptor() const override { return arch_.descriptor(); }

  const TftArchitecture& architecture() const noexcept { return arch_; }

  /// Inference-mode selection weights and full attention map for one window (lookback x vars).
  Interpretability interpret(const diff::Matrix& window) const;
  /// Prediction for one window through the full-sequence attention path.
  double predict_full_path(const diff::Matrix& window) const;
  /// CSV with a variable-weight block and an attention block.
  std::string interpretability_csv(const diff::Matrix& window, std::span<const std::string> variable_names) const;

  void save(std::ostream& out);
  static TftModel load(std::istream& in);

  VariableSelection selection;
  LstmEncoder encoder;
  TemporalAttention attention;
  PositionwiseFF ff;
  Dense head;

 private:
  std::vector<diff::Var> encode(diff::Graph& g, const WindowBatch& batch, CounterRng& rng, diff::Var* weights);

  TftArchitecture arch_;
};

/// Names for the 24 TFT inputs: OHLCV then dow_* and month_*.
std::vector<std::string> tft_variable_names();

}  // namespace stackcast
