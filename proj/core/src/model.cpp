#include "stackcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stackcast/error.hpp"

namespace stackcast {

WindowBatch make_batch(const SampleSet& samples, std::span<const std::size_t> indices) {
  WindowBatch b;
  b.batch = Eigen::Index(indices.size());
  b.length = Eigen::Index(samples.lookback);
  b.steps.resize(b.batch * b.length, Eigen::Index(samples.num_features()));
  for (Eigen::Index k = 0; k < b.batch; ++k) {
    const auto w = samples.window(indices[std::size_t(k)]);
    for (Eigen::Index t = 0; t < b.length; ++t) b.steps.row(t * b.batch + k) = w.row(t);
  }
  return b;
}

WindowBatch make_batch(const diff::Matrix& window) {
  WindowBatch b;
  b.batch = 1;
  b.length = window.rows();
  b.steps = window;
  return b;
}

std::string ParameterAudit::to_text() const {
  std::ostringstream out;
  out << "component,audited,published,difference\n";
  for (const auto& r : rows) {
    out << r.component << ',' << r.audited << ',';
    if (r.published) out << r.published << ',' << static_cast<long long>(r.audited) - static_cast<long long>(r.published);
    else out << "-,-";
    out << '\n';
  }
  out << "total," << total << ',' << published_total << ','
      << static_cast<long long>(total) - static_cast<long long>(published_total) << '\n';
  return out.str();
}

std::size_t Regressor::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->size();
  return n;
}

std::vector<double> Regressor::predict(const SampleSet& samples, std::size_t batch_size) const {
  // Inference graphs never back-propagate, so parameters are only read.
  auto& self = const_cast<Regressor&>(*this);
  if (samples.num_features() != input_features() || samples.lookback != lookback())
    throw ValidationError(kind() + ": sample shape does not match the architecture");
  std::vector<double> out;
  out.reserve(samples.size());
  CounterRng unused(0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.resize(std::min(batch_size, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    diff::Graph g(diff::Mode::Inference);
    const auto y = self.forward(g, make_batch(samples, idx), unused);
    for (Eigen::Index i = 0; i < y.rows(); ++i) out.push_back(y.value()(i, 0));
  }
  return out;
}

double Regressor::predict_one(const diff::Matrix& window) const {
  auto& self = const_cast<Regressor&>(*this);
  if (window.rows() != Eigen::Index(lookback()) || window.cols() != Eigen::Index(input_features()))
    throw ValidationError(kind() + ": window must be " + std::to_string(lookback()) + "x" +
                          std::to_string(input_features()));
  CounterRng unused(0);
  diff::Graph g(diff::Mode::Inference);
  return self.forward(g, make_batch(window), unused).scalar();
}

Dense::Dense(std::string name, Eigen::Index in, Eigen::Index out)
    : w(name + ".w", diff::Matrix::Zero(in, out)), b(name + ".b", diff::Matrix::Zero(1, out)) {}

void Dense::init(CounterRng& rng) {
  init_uniform(w.value, 1.0 / std::sqrt(static_cast<double>(w.value.rows())), rng);
  b.value.setZero();
}

diff::Var Dense::apply(diff::Graph& g, diff::Var x) {
  return diff::add_bias(diff::matmul(x, g.param(w)), g.param(b));
}

void init_uniform(diff::Matrix& m, double bound, CounterRng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
}

std::vector<diff::Matrix> snapshot(std::span<diff::Parameter* const> params) {
  std::vector<diff::Matrix> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

void restore(std::span<diff::Parameter* const> params, const std::vector<diff::Matrix>& values) {
  if (values.size() != params.size()) throw ValidationError("restore: snapshot does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace stackcast
