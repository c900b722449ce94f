#include "stackcast/acb_model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "stackcast/error.hpp"

namespace stackcast {

using diff::Graph;
using diff::Matrix;
using diff::Var;

std::vector<Var> split_steps(Graph& g, const WindowBatch& batch) {
  std::vector<Var> xs;
  xs.reserve(std::size_t(batch.length));
  for (Eigen::Index t = 0; t < batch.length; ++t) xs.push_back(g.constant(batch.steps.middleRows(t * batch.batch, batch.batch)));
  return xs;
}

AttentionGateCell::AttentionGateCell(std::string name, Eigen::Index inputs, Eigen::Index hidden)
    : w_a(name + ".w_a", Matrix::Zero(hidden, hidden)),
      b_a(name + ".b_a", Matrix::Zero(1, hidden)),
      w_gates(name + ".w_gates", Matrix::Zero(hidden + inputs, 3 * hidden)),
      b_gates(name + ".b_gates", Matrix::Zero(1, 3 * hidden)),
      inputs_(inputs),
      hidden_(hidden) {}

void AttentionGateCell::init(CounterRng& rng) {
  init_uniform(w_a.value, 1.0 / std::sqrt(double(hidden_)), rng);
  b_a.value.setOnes();
  init_uniform(w_gates.value, 1.0 / std::sqrt(double(hidden_ + inputs_)), rng);
  b_gates.value.setZero();
}

AttentionGateCell::State AttentionGateCell::zero_state(Graph& g, Eigen::Index batch) const {
  return {g.constant(Matrix::Zero(batch, hidden_)), g.constant(Matrix::Zero(batch, hidden_))};
}

AttentionGateCell::State AttentionGateCell::step(Graph& g, Var x, const State& prev, Trace* trace) {
  if (x.cols() != inputs_) throw ValidationError(w_a.name + ": expected " + std::to_string(inputs_) + " inputs");
  const Var a = diff::sigmoid(diff::add_bias(diff::matmul(prev.c, g.param(w_a)), g.param(b_a)));
  const Var hx[] = {prev.h, x};
  const Var pre = diff::add_bias(diff::matmul(diff::concat_cols(hx), g.param(w_gates)), g.param(b_gates));
  const Var i = diff::sigmoid(diff::slice_cols(pre, 0, hidden_));
  const Var z = diff::tanh(diff::slice_cols(pre, hidden_, hidden_));
  const Var o = diff::sigmoid(diff::slice_cols(pre, 2 * hidden_, hidden_));
  const Var c = diff::add(diff::mul(a, prev.c), diff::mul(i, z));
  const Var h = diff::mul(o, diff::tanh(c));
  if (trace) *trace = {a, i, z, o};
  return {h, c};
}

void AttentionGateCell::collect(std::vector<diff::Parameter*>& out) {
  out.insert(out.end(), {&w_a, &b_a, &w_gates, &b_gates});
}

BiLstmLayer::BiLstmLayer(std::string name, Eigen::Index inputs, Eigen::Index hidden)
    : forward(name + ".fwd", inputs, hidden), backward(name + ".bwd", inputs, hidden) {}

void BiLstmLayer::init(CounterRng& rng) {
  forward.init(rng);
  backward.init(rng);
}

BiLstmLayer::Output BiLstmLayer::apply(Graph& g, const std::vector<Var>& xs) {
  if (xs.empty()) throw ValidationError("bilstm: empty window");
  const auto n = xs.size();
  const Eigen::Index batch = xs.front().rows();
  std::vector<Var> fwd(n), bwd(n);
  auto s = forward.zero_state(g, batch);
  for (std::size_t t = 0; t < n; ++t) fwd[t] = (s = forward.step(g, xs[t], s)).h;
  s = backward.zero_state(g, batch);
  for (std::size_t t = n; t-- > 0;) bwd[t] = (s = backward.step(g, xs[t], s)).h;
  Output out;
  out.steps.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Var pair[] = {fwd[t], bwd[t]};
    out.steps.push_back(diff::concat_cols(pair));
  }
  out.forward_final = fwd.back();
  out.backward_final = bwd.front();
  return out;
}

void BiLstmLayer::collect(std::vector<diff::Parameter*>& out) {
  forward.collect(out);
  backward.collect(out);
}

FeatureAttention::FeatureAttention(Eigen::Index features, std::vector<std::size_t> priority, double prior)
    : slope("attn.slope", Matrix::Zero(1, features)),
      offset("attn.offset", Matrix::Zero(1, features)),
      prior_(Matrix::Zero(1, features)) {
  for (auto j : priority) {
    if (Eigen::Index(j) >= features) throw ValidationError("feature attention: priority index out of range");
    prior_(0, Eigen::Index(j)) = prior;
  }
}

FeatureAttention::Output FeatureAttention::apply(Graph& g, const std::vector<Var>& xs) {
  const Var summary = diff::scale(diff::add_n(xs), 1.0 / double(xs.size()));
  Var score = diff::mul_row(summary, g.param(slope));
  score = diff::add_bias(score, g.param(offset));
  score = diff::add_bias(score, g.constant(prior_));
  const Var w = diff::softmax(score, diff::Axis::Rows);
  return {diff::mul(w, summary), w};
}

void FeatureAttention::collect(std::vector<diff::Parameter*>& out) {
  out.push_back(&slope);
  out.push_back(&offset);
}

AcbArchitecture AcbArchitecture::reduced() const {
  AcbArchitecture r = *this;
  r.hidden1 = hidden1 / 2;
  r.hidden2 = hidden2 / 2;
  return r;
}

std::string AcbArchitecture::descriptor() const {
  std::ostringstream out;
  out.precision(17);
  out << "acb lookback=" << lookback << " inputs=" << inputs << " hidden1=" << hidden1 << " hidden2=" << hidden2
      << " dense=" << dense << " dropout=" << dropout << " prior=" << prior;
  return out.str();
}

namespace {
// Parses "kind k=v k=v ..." into a lookup; throws when `kind` differs.
std::vector<std::pair<std::string, std::string>> parse_descriptor(const std::string& line, std::string_view kind) {
  std::istringstream in(line);
  std::string k;
  in >> k;
  if (k != kind) throw ValidationError("descriptor is for '" + k + "', expected '" + std::string(kind) + "'");
  std::vector<std::pair<std::string, std::string>> kv;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ValidationError("bad descriptor token '" + tok + "'");
    kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return kv;
}
}  // namespace

AcbArchitecture AcbArchitecture::from_descriptor(const std::string& line) {
  AcbArchitecture a;
  for (const auto& [k, v] : parse_descriptor(line, "acb")) {
    if (k == "lookback") a.lookback = std::stoul(v);
    else if (k == "inputs") a.inputs = std::stoul(v);
    else if (k == "hidden1") a.hidden1 = std::stoul(v);
    else if (k == "hidden2") a.hidden2 = std::stoul(v);
    else if (k == "dense") a.dense = std::stoul(v);
    else if (k == "dropout") a.dropout = std::stod(v);
    else if (k == "prior") a.prior = std::stod(v);
    else throw ValidationError("unknown acb descriptor key '" + k + "'");
  }
  a.validate();
  return a;
}

void AcbArchitecture::validate() const {
  if (lookback == 0 || inputs == 0 || hidden1 == 0 || hidden2 == 0 || dense == 0)
    throw ValidationError("acb: layer widths must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ValidationError("acb: dropout must be in [0, 1)");
}

AcbModel::AcbModel(AcbArchitecture arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  const auto in = Eigen::Index(arch_.inputs), h1 = Eigen::Index(arch_.hidden1), h2 = Eigen::Index(arch_.hidden2);
  layer1 = BiLstmLayer("acb.l1", in, h1);
  layer2 = BiLstmLayer("acb.l2", 2 * h1, h2);
  std::vector<std::size_t> priority;
  if (arch_.inputs == kNumOhlcv) priority = {std::size_t(Feature::Close), std::size_t(Feature::Volume)};
  attention = FeatureAttention(in, priority, arch_.prior);
  hidden = Dense("acb.dense", 2 * h2 + in, Eigen::Index(arch_.dense));
  head = Dense("acb.head", Eigen::Index(arch_.dense), 1);

  CounterRng rng(seed, /*stream=*/0xACB);
  layer1.init(rng);
  layer2.init(rng);
  hidden.init(rng);
  head.init(rng);
}

std::vector<diff::Parameter*> AcbModel::parameters() {
  std::vector<diff::Parameter*> out;
  layer1.collect(out);
  layer2.collect(out);
  attention.collect(out);
  hidden.collect(out);
  head.collect(out);
  return out;
}

Var AcbModel::forward(Graph& g, const WindowBatch& batch, CounterRng& rng) {
  if (batch.length != Eigen::Index(arch_.lookback) || batch.features() != Eigen::Index(arch_.inputs))
    throw ValidationError("acb: window must be " + std::to_string(arch_.lookback) + "x" + std::to_string(arch_.inputs));
  const auto xs = split_steps(g, batch);

  auto l1 = layer1.apply(g, xs);
  for (auto& v : l1.steps) v = diff::dropout(v, arch_.dropout, rng);
  auto l2 = layer2.apply(g, l1.steps);
  const Var terminal_parts[] = {l2.forward_final, l2.backward_final};
  const Var terminal = diff::dropout(diff::concat_cols(terminal_parts), arch_.dropout, rng);

  const auto attn = attention.apply(g, xs);
  const Var merged_parts[] = {terminal, attn.context};
  const Var merged = diff::concat_cols(merged_parts);
  return head.apply(g, diff::elu(hidden.apply(g, merged)));
}

ParameterAudit AcbModel::audit() const {
  ParameterAudit a;
  const bool baseline = arch_ == AcbArchitecture::baseline();
  const bool reduced = arch_ == AcbArchitecture::baseline().reduced();
  a.rows.push_back({"feature_attention", attention.size(), baseline ? 65u : 0u});
  a.rows.push_back({"bilstm_layer1", layer1.size(), baseline ? 49'536u : 0u});
  a.rows.push_back({"bilstm_layer2", layer2.size(), baseline ? 30'912u : 0u});
  a.rows.push_back({"dense_head", hidden.size() + head.size(), 0});
  for (const auto& r : a.rows) a.total += r.audited;
  a.published_total = baseline ? kAcbPublishedBaselineTotal : reduced ? kAcbPublishedReducedTotal : 0;
  return a;
}

std::vector<double> AcbModel::feature_weights(const Matrix& window) const {
  auto& self = const_cast<AcbModel&>(*this);
  Graph g;
  const auto xs = split_steps(g, make_batch(window));
  const auto out = self.attention.apply(g, xs);
  const auto& w = out.weights.value();
  return std::vector<double>(w.data(), w.data() + w.size());
}

std::string AcbModel::feature_weights_csv(const SampleSet& samples) const {
  std::vector<double> mean(arch_.inputs, 0.0);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto w = feature_weights(samples.window(k));
    for (std::size_t j = 0; j < w.size(); ++j) mean[j] += w[j] / double(samples.size());
  }
  std::ostringstream out;
  out.precision(17);
  out << "feature,weight\n";
  for (std::size_t j = 0; j < mean.size(); ++j)
    out << (j < kNumOhlcv ? std::string(kFeatureNames[j]) : "f" + std::to_string(j)) << ',' << mean[j] << '\n';
  return out.str();
}

void AcbModel::save(std::ostream& out) {
  const auto params = parameters();
  write_parameters(out, kind(), descriptor(), params);
}

AcbModel AcbModel::load(std::istream& in) {
  const auto start = in.tellg();
  const auto arch = AcbArchitecture::from_descriptor(read_descriptor(in, "acb"));
  in.seekg(start);
  AcbModel m(arch, 0);
  const auto params = m.parameters();
  read_parameters(in, "acb", params);
  return m;
}

}  // namespace stackcast
