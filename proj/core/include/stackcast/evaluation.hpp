#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stackcast/metrics.hpp"
#include "stackcast/stacking.hpp"

namespace stackcast {

struct ForecastPoint {
  double p_bl = 0;    // ACB, USD
  double p_tft = 0;   // TFT, USD
  double p_meta = 0;  // stacked, USD
};

/// Forecast for the day after `history` ends. Only the last `lookback` records are read.
ForecastPoint forecast_next(const PipelineArtifacts& artifacts, std::span<const OhlcvRecord> history);

struct WalkForwardRun {
  std::vector<Date> dates;
  std::vector<double> truth;
  std::vector<double> p_bl;
  std::vector<double> p_tft;
  std::vector<double> p_meta;
  std::vector<double> naive;
  std::string hash_before;
  std::string hash_after;

  std::size_t size() const noexcept { return dates.size(); }
  /// date,true,P_bl,P_tft,P_meta,naive
  std::string to_csv() const;
};

/// One-step-ahead walk over the test block with frozen artifacts. Refuses to start if the
/// dataset scaler differs from the frozen one or the test block was already read.
WalkForwardRun walk_forward(const PipelineArtifacts& artifacts, const SplitDataset& data);

struct EvaluationReport {
  MetricsReport meta;
  MetricsReport acb;
  MetricsReport tft;
  MetricsReport naive;
  ConfidenceInterval ci;
  double performance_gain = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string artifact_hash;
  SplitBoundaries boundaries;
  StdConvention sigma = StdConvention::Sample;

  std::string to_json() const;
};

EvaluationReport evaluate(const WalkForwardRun& run, const PipelineArtifacts& artifacts,
                          StdConvention sigma = StdConvention::Sample);

struct RegimeWindow {
  std::string label;
  Date first;
  Date last;  // inclusive
};

/// The three windows around the 2024 spot-ETF approval and halving.
std::vector<RegimeWindow> default_regime_windows();

enum class ReturnAnchor {
  PreviousDay,   // the first return of a window uses the close before it (N returns)
  WithinWindow,  // returns only between days inside the window (N - 1 returns)
};

struct RegimeStats {
  RegimeWindow window;
  std::size_t n = 0;
  double mean_return_pct = 0;
  double std_return_pct = 0;
  double annualized_vol = 0;
  double median_volume = 0;
  double mean_volume = 0;
  double median_close = 0;
  std::vector<Date> rolling_dates;
  std::vector<double> rolling_vol;  // annualized 30-day rolling volatility
};

std::vector<RegimeStats> regime_analysis(const OhlcvSeries& series, std::span<const RegimeWindow> windows,
                                         ReturnAnchor anchor = ReturnAnchor::PreviousDay,
                                         StdConvention convention = StdConvention::Sample,
                                         std::size_t rolling_window = 30);

/// Table-5-style rows.
std::string regime_csv(std::span<const RegimeStats> stats);
/// label,date,rolling_vol
std::string rolling_vol_csv(std::span<const RegimeStats> stats);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvaluationReport report;
  StackingWeights weights;
};

struct Spread {
  double mean = 0;
  double stddev = 0;
  double min = 0;
  double max = 0;
};

struct StabilitySummary {
  std::vector<SeedOutcome> runs;
  std::size_t failures = 0;
  Spread mape, mae, rmse;
  Spread acb_mape, tft_mape;

  std::string to_json() const;
};

/// Runs the full protocol and walk-forward once per seed on at most `threads` threads.
/// Failed runs are kept with their error message.
StabilitySummary stability_study(const OhlcvSeries& series, const SplitRatios& ratios, const PipelineConfig& config,
                                 std::span<const std::uint64_t> seeds, std::size_t threads = 1,
                                 const std::function<void(const SeedOutcome&)>& on_done = {});

Spread spread_of(std::span<const double> values);

}  // namespace stackcast
