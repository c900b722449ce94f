#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "stackcast/access_ledger.hpp"

namespace stackcast {

using Date = std::chrono::sys_days;

/// Parses dd/mm/yyyy (day first) or yyyy-mm-dd. Returns nullopt on anything else.
std::optional<Date> parse_date(std::string_view text);
std::string format_iso(Date date);  // 2014-10-01
std::string format_dmy(Date date);  // 01/10/2014

/// Column order used everywhere a five-feature row appears.
enum class Feature : std::size_t { Open = 0, High = 1, Low = 2, Close = 3, Volume = 4 };
inline constexpr std::size_t kNumOhlcv = 5;
inline constexpr std::size_t kNumCalendar = 19;  // 7 day-of-week + 12 month
inline constexpr std::array<std::string_view, kNumOhlcv> kFeatureNames{"open", "high", "low",
                                                                         "close", "volume"};

std::optional<Feature> feature_from_name(std::string_view name);

struct OhlcvRecord {
  Date date;
  double open = 0;
  double high = 0;
  double low = 0;
  double close = 0;
  double volume = 0;

  double get(Feature f) const noexcept;
  std::array<double, kNumOhlcv> values() const noexcept { return {open, high, low, close, volume}; }
};

/// Date-ordered daily records. Construction validates every record and the ordering.
class OhlcvSeries {
 public:
  OhlcvSeries() = default;
  explicit OhlcvSeries(std::vector<OhlcvRecord> records);

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const OhlcvRecord& operator[](std::size_t i) const { return records_[i]; }
  std::span<const OhlcvRecord> records() const noexcept { return records_; }
  std::vector<double> column(Feature f) const;
  std::optional<std::size_t> index_of(Date date) const;

  /// First `n` records; used by truncation probes.
  OhlcvSeries prefix(std::size_t n) const;

 private:
  std::vector<OhlcvRecord> records_;
};

/// Reads a Date,Open,High,Low,Close,Volume CSV. Header matching is case-insensitive
/// and accepts common aliases ("Adj Close" is ignored, "Vol" maps to volume). Extra
/// columns are ignored.
OhlcvSeries load_ohlcv(const std::filesystem::path& path);
OhlcvSeries parse_ohlcv_csv(std::string_view text, std::string_view source = "<memory>");

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Half-open row ranges [0, train_end), [train_end, validation_end), [validation_end, n).
struct SplitBoundaries {
  std::size_t n = 0;
  std::size_t train_end = 0;
  std::size_t validation_end = 0;

  std::size_t train_size() const noexcept { return train_end; }
  std::size_t validation_size() const noexcept { return validation_end - train_end; }
  std::size_t test_size() const noexcept { return n - validation_end; }
  Split split_of(std::size_t row) const noexcept;
  std::size_t begin(Split s) const noexcept;
  std::size_t end(Split s) const noexcept;
};

/// train = floor(r_train * N), validation = floor(r_val * N), test = remainder.
SplitBoundaries chronological_split(std::size_t n, const SplitRatios& ratios = {});

/// Per-feature affine map onto [0, 1] over the rows it was fitted on. No clipping.
class MinMaxScaler {
 public:
  static MinMaxScaler fit(std::span<const OhlcvRecord> train_rows);

  double transform(Feature f, double value) const noexcept;
  double inverse(Feature f, double scaled) const noexcept;
  std::array<double, kNumOhlcv> transform(const OhlcvRecord& r) const noexcept;

  const std::array<double, kNumOhlcv>& min() const noexcept { return min_; }
  const std::array<double, kNumOhlcv>& max() const noexcept { return max_; }

  friend bool operator==(const MinMaxScaler&, const MinMaxScaler&) = default;

  static MinMaxScaler from_bounds(std::array<double, kNumOhlcv> min,
                                  std::array<double, kNumOhlcv> max);

 private:
  std::array<double, kNumOhlcv> min_{};
  std::array<double, kNumOhlcv> max_{};
};

/// 7 day-of-week indicators (Monday first) followed by 12 month indicators.
std::array<double, kNumCalendar> calendar_covariates(Date date);
Eigen::MatrixXd calendar_covariates(std::span<const OhlcvRecord> records);
std::size_t weekday_index(Date date);  // Monday = 0
std::size_t month_index(Date date);    // January = 0

enum class StdConvention { Sample, Population };

struct OutlierReport {
  Feature feature = Feature::Close;
  double threshold = 3.0;
  double mean = 0;
  double stddev = 0;
  std::vector<double> z;               // one per record, full series
  std::vector<std::size_t> flagged;    // { i : |z_i| > threshold }

  std::size_t count() const noexcept { return flagged.size(); }
  double fraction() const noexcept {
    return z.empty() ? 0.0 : static_cast<double>(flagged.size()) / static_cast<double>(z.size());
  }
};

/// Z-scores from the statistics of `stats_rows` (the training split), applied to the whole
/// series. Records are reported, never removed.
OutlierReport zscore_outliers(const OhlcvSeries& series, std::size_t stats_rows,
                              double threshold = 3.0, Feature feature = Feature::Close,
                              StdConvention convention = StdConvention::Sample);

/// A chronologically split series with the train-fit scaler applied. Every read of rows
/// that a model consumes goes through the sample builders below and lands in the ledger.
class SplitDataset {
 public:
  SplitDataset(OhlcvSeries series, const SplitRatios& ratios,
               std::shared_ptr<AccessLedger> ledger = std::make_shared<AccessLedger>());

  const OhlcvSeries& series() const noexcept { return *series_; }
  const SplitBoundaries& boundaries() const noexcept { return bounds_; }
  const MinMaxScaler& scaler() const noexcept { return scaler_; }
  AccessLedger& ledger() const noexcept { return *ledger_; }
  std::shared_ptr<AccessLedger> ledger_ptr() const noexcept { return ledger_; }

  /// N x 5 normalized OHLCV.
  const Eigen::MatrixXd& normalized() const noexcept { return *ohlcv_; }
  /// N x 24: normalized OHLCV followed by the 19 calendar indicators.
  const Eigen::MatrixXd& with_calendar() const noexcept { return *full_; }
  std::shared_ptr<const Eigen::MatrixXd> normalized_ptr() const noexcept { return ohlcv_; }
  std::shared_ptr<const Eigen::MatrixXd> with_calendar_ptr() const noexcept { return full_; }

  /// Records a read of [first, last] under `stage`, split by split.
  void touch(std::string_view stage, std::size_t first, std::size_t last) const;

  std::pair<Date, Date> date_range(Split s) const;

 private:
  std::shared_ptr<const OhlcvSeries> series_;
  SplitBoundaries bounds_;
  MinMaxScaler scaler_;
  std::shared_ptr<const Eigen::MatrixXd> ohlcv_;
  std::shared_ptr<const Eigen::MatrixXd> full_;
  std::shared_ptr<AccessLedger> ledger_;
};

/// Supervised one-step-ahead samples that view a shared feature matrix. Sample k uses
/// rows [origin_k - lookback, origin_k - 1] as input and predicts the close of row origin_k.
struct SampleSet {
  std::shared_ptr<const Eigen::MatrixXd> rows;
  std::size_t lookback = 0;
  std::vector<std::size_t> origins;
  std::vector<double> targets;  // normalized close at each origin

  std::size_t size() const noexcept { return origins.size(); }
  std::size_t num_features() const noexcept { return static_cast<std::size_t>(rows->cols()); }
  auto window(std::size_t k) const { return rows->middleRows(Eigen::Index(origins[k] - lookback), Eigen::Index(lookback)); }
};

/// Slides a window over `rows`: sample count = rows - lookback, target column `target_col`.
SampleSet make_windows(std::shared_ptr<const Eigen::MatrixXd> rows, std::size_t lookback,
                       Eigen::Index target_col = static_cast<Eigen::Index>(Feature::Close));

enum class FeatureSet { Ohlcv, OhlcvCalendar };

/// Training samples: windows and targets inside the training split only.
SampleSet training_samples(const SplitDataset& data, std::size_t lookback, FeatureSet fs,
                           std::string_view stage);

/// One sample per day of `split`; each window ends the day before (it may reach back into
/// earlier splits, never forward).
SampleSet forecast_samples(const SplitDataset& data, Split split, std::size_t lookback,
                           FeatureSet fs, std::string_view stage);

/// Table-3-style export: Date,Split,Open minmax,High minmax,Low minmax,Volume minmax,Close minmax
std::string normalized_csv(const SplitDataset& data);
/// date,close,z for flagged records.
std::string outlier_csv(const OhlcvSeries& series, const OutlierReport& report);

}  // namespace stackcast
