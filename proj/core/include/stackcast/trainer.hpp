#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stackcast/model.hpp"
#include "stackcast/tensor.hpp"

namespace stackcast {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are zero at step 0.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update from each parameter's grad. Throws NumericError (and leaves all
  /// parameters untouched) if any gradient is non-finite.
  void step(std::span<diff::Parameter* const> params);

  std::size_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<diff::Matrix> m_;
  std::vector<diff::Matrix> v_;
};

double global_grad_norm(std::span<diff::Parameter* const> params);

/// Rescales all gradients by max_norm / norm when their global L2 norm exceeds max_norm.
/// Returns the norm before clipping.
double clip_gradients(std::span<diff::Parameter* const> params, double max_norm);

struct TrainConfig {
  AdamConfig adam{};
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double clip_norm = 0.0;  // <= 0 disables clipping
  bool shuffle = true;
  std::uint64_t seed = 42;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double validation_loss = 0;
};

enum class StopReason { NoEpochs, MaxEpochs, EarlyStopping };
std::string_view to_string(StopReason r) noexcept;

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_validation_loss = 0;
  StopReason stop = StopReason::NoEpochs;

  /// epoch,train_loss,validation_loss
  std::string to_csv() const;
};

/// Mean squared error of inference-mode predictions against the sample targets.
double evaluate_mse(const Regressor& model, const SampleSet& samples, std::size_t batch_size = 256);

/// Mini-batch Adam on MSE with per-epoch validation, early stopping on validation loss,
/// and restore-best. On divergence the best finite parameters are restored and a
/// TrainingError is thrown.
TrainHistory train(Regressor& model, const SampleSet& train_set, const SampleSet& validation_set,
                   const TrainConfig& config);

}  // namespace stackcast
