#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stackcast/market_data.hpp"

namespace stackcast {

struct MetricsReport {
  double mape = 0;  // percent
  double mae = 0;
  double rmse = 0;
  std::size_t n = 0;
};

/// MAPE (%), MAE and RMSE. A zero true value makes MAPE undefined and is rejected.
MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> pred);

/// Per-point absolute percentage errors, in percent.
std::vector<double> absolute_percentage_errors(std::span<const double> truth, std::span<const double> pred);

struct ConfidenceInterval {
  double center = 0;      // mean APE, percent
  double half_width = 0;  // z * sigma / sqrt(n)
  double sigma = 0;
  double z = 1.96;
  std::size_t n = 0;

  double lower() const noexcept { return center - half_width; }
  double upper() const noexcept { return center + half_width; }
};

/// Approximate interval MAPE +/- z * sigma / sqrt(n) over per-point APEs.
ConfidenceInterval confidence_interval(std::span<const double> apes, StdConvention convention = StdConvention::Sample,
                                       double z = 1.96);

/// (naive - model) / naive.
double performance_gain(double mape_model, double mape_naive);

/// Persistence forecast: each day predicts the previous day's close.
std::vector<double> naive_persistence(std::span<const double> closes, double previous_close);

double mean(std::span<const double> v);
double stddev(std::span<const double> v, StdConvention convention);

}  // namespace stackcast
