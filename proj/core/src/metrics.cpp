#include "stackcast/metrics.hpp"

#include <cmath>
#include <numeric>

#include "stackcast/error.hpp"

namespace stackcast {

namespace {
void check_pair(std::span<const double> truth, std::span<const double> pred) {
  if (truth.empty()) throw ValidationError("metrics: empty series");
  if (truth.size() != pred.size())
    throw ValidationError("metrics: length mismatch (" + std::to_string(truth.size()) + " vs " +
                          std::to_string(pred.size()) + ")");
}
}  // namespace

std::vector<double> absolute_percentage_errors(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) throw ValidationError("metrics: MAPE undefined, true value is zero at index " + std::to_string(i));
    out[i] = 100.0 * std::abs((truth[i] - pred[i]) / truth[i]);
  }
  return out;
}

MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> pred) {
  const auto apes = absolute_percentage_errors(truth, pred);
  MetricsReport r;
  r.n = truth.size();
  double abs_sum = 0, sq_sum = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double e = truth[i] - pred[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  r.mape = mean(apes);
  r.mae = abs_sum / double(r.n);
  r.rmse = std::sqrt(sq_sum / double(r.n));
  return r;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of an empty series");
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double stddev(std::span<const double> v, StdConvention convention) {
  const std::size_t dof = convention == StdConvention::Sample ? 1 : 0;
  if (v.size() <= dof) throw ValidationError("stddev needs at least " + std::to_string(dof + 1) + " values");
  // Two-pass on values shifted by the first one, so identical inputs give exactly zero.
  const double k = v.front();
  double m = 0;
  for (double x : v) m += x - k;
  m /= double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - k - m) * (x - k - m);
  return std::sqrt(ss / double(v.size() - dof));
}

ConfidenceInterval confidence_interval(std::span<const double> apes, StdConvention convention, double z) {
  if (apes.size() < 2) throw ValidationError("confidence interval needs n >= 2");
  ConfidenceInterval ci;
  ci.n = apes.size();
  ci.z = z;
  ci.center = mean(apes);
  ci.sigma = stddev(apes, convention);
  ci.half_width = z * ci.sigma / std::sqrt(double(ci.n));
  return ci;
}

double performance_gain(double mape_model, double mape_naive) {
  if (!(mape_naive > 0)) throw ValidationError("performance gain: naive MAPE must be positive");
  return (mape_naive - mape_model) / mape_naive;
}

std::vector<double> naive_persistence(std::span<const double> closes, double previous_close) {
  if (closes.empty()) throw ValidationError("naive persistence: empty test block");
  std::vector<double> out(closes.size());
  out[0] = previous_close;
  for (std::size_t i = 1; i < closes.size(); ++i) out[i] = closes[i - 1];
  return out;
}

}  // namespace stackcast
