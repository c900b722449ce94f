#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stackcast/acb_model.hpp"
#include "stackcast/gbt.hpp"
#include "stackcast/market_data.hpp"
#include "stackcast/tft_model.hpp"
#include "stackcast/trainer.hpp"

namespace stackcast {

/// Inverse-error weights from validation MAPE.
struct StackingWeights {
  double w_bl = 0.5;
  double w_tft = 0.5;
  double error_bl = 0;   // validation MAPE of the ACB, percent
  double error_tft = 0;  // validation MAPE of the TFT, percent

  std::string to_json() const;
  static StackingWeights from_json(std::string_view text);
  friend bool operator==(const StackingWeights&, const StackingWeights&) = default;
};

/// W_bl = (1/e_bl) / (1/e_bl + 1/e_tft), W_tft likewise. Both errors must be positive.
StackingWeights compute_weights(double error_bl, double error_tft);

/// n x 2 matrix with rows [W_bl * P_bl(t), W_tft * P_tft(t)].
Eigen::MatrixXd build_meta_features(std::span<const double> preds_bl, std::span<const double> preds_tft,
                                    const StackingWeights& weights);

struct PipelineConfig {
  std::size_t lookback = 60;
  AcbArchitecture acb{};
  TftArchitecture tft{};
  TrainConfig acb_train{};
  TrainConfig tft_train = [] {
    TrainConfig c;
    c.clip_norm = 0.1;
    return c;
  }();
  GbtConfig meta{};
  /// Early stopping of the meta-learner monitors MAE on the validation block it is fitted on.
  bool meta_early_stopping = true;
  /// Train the two base learners on two threads.
  bool parallel_base_training = true;
  std::uint64_t seed = 42;
  std::string config_hash;

  void validate() const;
};

/// Per-stage seeds derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage);

/// Everything frozen after the validation stage.
struct PipelineArtifacts {
  std::shared_ptr<AcbModel> acb;
  std::shared_ptr<TftModel> tft;
  StackingWeights weights;
  BoostedEnsemble meta;
  MinMaxScaler scaler;
  SplitBoundaries boundaries;
  std::uint64_t seed = 0;
  std::string config_hash;

  TrainHistory acb_history;
  TrainHistory tft_history;
  GbtFitLog meta_log;
  std::string ledger_csv;  // split accesses recorded up to freezing

  /// FNV-1a over the serialized models, weights, meta-learner and scaler.
  std::string hash() const;

  /// Directory layout: acb.model, tft.model, weights.json, meta.gbt, scaler.txt, ledger.csv,
  /// *_history.csv, meta_log.csv, config_hash.txt, manifest.json.
  void save(const std::filesystem::path& dir) const;
  /// Loads and verifies the manifest hash; a mismatch is a LedgerError.
  static PipelineArtifacts load(const std::filesystem::path& dir);
};

std::string scaler_to_text(const MinMaxScaler& scaler);
MinMaxScaler scaler_from_text(std::string_view text);

/// Validation-block meta features and USD targets from frozen base learners.
struct MetaSet {
  Eigen::MatrixXd features;
  std::vector<double> targets;
  std::vector<double> preds_bl;
  std::vector<double> preds_tft;
};
MetaSet validation_meta_set(const PipelineArtifacts& artifacts, const SplitDataset& data, std::string_view stage);

/// Algorithm: train both base learners on the training split, weight them by validation
/// MAPE, fit the meta-learner on validation meta features, freeze. The test block is sealed
/// for the whole run, so any read of it raises LedgerError.
PipelineArtifacts run_protocol(const SplitDataset& data, const PipelineConfig& config);

/// USD close predicted for the normalized-close column.
double to_usd(const MinMaxScaler& scaler, double normalized_close);

}  // namespace stackcast
