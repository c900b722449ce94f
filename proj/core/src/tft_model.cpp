#include "stackcast/tft_model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "stackcast/acb_model.hpp"
#include "stackcast/error.hpp"

namespace stackcast {

using diff::Graph;
using diff::Matrix;
using diff::Var;

Grn::Grn(std::string name, Eigen::Index width)
    : fc1(name + ".fc1", width, width),
      fc2(name + ".fc2", width, width),
      value(name + ".glu_value", width, width),
      gate(name + ".glu_gate", width, width) {}

void Grn::init(CounterRng& rng) {
  fc1.init(rng);
  fc2.init(rng);
  value.init(rng);
  gate.init(rng);
}

Var Grn::apply(Graph& g, Var x) {
  const Var u = fc2.apply(g, diff::elu(fc1.apply(g, x)));
  return diff::add(x, diff::mul(value.apply(g, u), diff::sigmoid(gate.apply(g, u))));
}

void Grn::collect(std::vector<diff::Parameter*>& out) {
  fc1.collect(out);
  fc2.collect(out);
  value.collect(out);
  gate.collect(out);
}

VariableSelection::VariableSelection(Eigen::Index variables, Eigen::Index width)
    : embed_w("tft.embed_w", Matrix::Zero(variables, width)),
      embed_b("tft.embed_b", Matrix::Zero(variables, width)),
      grn("tft.vs_grn", width),
      score("tft.vs_score", width, 1) {}

void VariableSelection::init(CounterRng& rng) {
  init_uniform(embed_w.value, 1.0, rng);
  init_uniform(embed_b.value, 0.1, rng);
  grn.init(rng);
  score.init(rng);
}

VariableSelection::Output VariableSelection::apply(Graph& g, Var x) {
  const Eigen::Index nv = embed_w.value.rows();
  if (x.cols() != nv) throw ValidationError("variable selection: expected " + std::to_string(nv) + " variables");
  const Var w = g.param(embed_w);
  const Var b = g.param(embed_b);
  std::vector<Var> embeddings;
  embeddings.reserve(std::size_t(nv));
  for (Eigen::Index j = 0; j < nv; ++j)
    embeddings.push_back(diff::add_bias(diff::matmul(diff::slice_cols(x, j, 1), diff::slice_rows(w, j, 1)),
                                        diff::slice_rows(b, j, 1)));

  // Score all variables in one pass: rows are stacked variable-major.
  const Eigen::Index rows = x.rows();
  const Var scores = score.apply(g, grn.apply(g, diff::concat_rows(embeddings)));
  std::vector<Var> cols;
  cols.reserve(std::size_t(nv));
  for (Eigen::Index j = 0; j < nv; ++j) cols.push_back(diff::slice_rows(scores, j * rows, rows));
  const Var weights = diff::softmax(diff::concat_cols(cols), diff::Axis::Rows);

  std::vector<Var> terms;
  terms.reserve(std::size_t(nv));
  for (Eigen::Index j = 0; j < nv; ++j)
    terms.push_back(diff::mul_col(embeddings[std::size_t(j)], diff::slice_cols(weights, j, 1)));
  return {diff::add_n(terms), weights};
}

void VariableSelection::collect(std::vector<diff::Parameter*>& out) {
  out.push_back(&embed_w);
  out.push_back(&embed_b);
  grn.collect(out);
  score.collect(out);
}

LstmEncoder::LstmEncoder(std::string name, Eigen::Index inputs, Eigen::Index hidden)
    : w(name + ".w", Matrix::Zero(hidden + inputs, 4 * hidden)),
      b(name + ".b", Matrix::Zero(1, 4 * hidden)),
      inputs_(inputs),
      hidden_(hidden) {}

void LstmEncoder::init(CounterRng& rng) {
  init_uniform(w.value, 1.0 / std::sqrt(double(hidden_ + inputs_)), rng);
  b.value.setZero();
  b.value.middleCols(hidden_, hidden_).setOnes();
}

std::vector<Var> LstmEncoder::apply(Graph& g, const std::vector<Var>& xs) {
  if (xs.empty()) throw ValidationError("lstm: empty sequence");
  const Eigen::Index batch = xs.front().rows();
  Var h = g.constant(Matrix::Zero(batch, hidden_));
  Var c = g.constant(Matrix::Zero(batch, hidden_));
  const Var wv = g.param(w);
  const Var bv = g.param(b);
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    const Var hx[] = {h, x};
    const Var pre = diff::add_bias(diff::matmul(diff::concat_cols(hx), wv), bv);
    const Var i = diff::sigmoid(diff::slice_cols(pre, 0, hidden_));
    const Var f = diff::sigmoid(diff::slice_cols(pre, hidden_, hidden_));
    const Var z = diff::tanh(diff::slice_cols(pre, 2 * hidden_, hidden_));
    const Var o = diff::sigmoid(diff::slice_cols(pre, 3 * hidden_, hidden_));
    c = diff::add(diff::mul(f, c), diff::mul(i, z));
    h = diff::mul(o, diff::tanh(c));
    out.push_back(h);
  }
  return out;
}

void LstmEncoder::collect(std::vector<diff::Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

TemporalAttention::TemporalAttention(std::string name, Eigen::Index width)
    : q(name + ".q", width, width), k(name + ".k", width, width), v(name + ".v", width, width),
      o(name + ".o", width, width) {}

void TemporalAttention::init(CounterRng& rng) {
  q.init(rng);
  k.init(rng);
  v.init(rng);
  o.init(rng);
}

TemporalAttention::Output TemporalAttention::self_attend(Graph& g, Var seq) {
  const double s = 1.0 / std::sqrt(double(seq.cols()));
  const Var scores = diff::scale(diff::matmul(q.apply(g, seq), diff::transpose(k.apply(g, seq))), s);
  const Var w = diff::causal_softmax(scores);
  return {o.apply(g, diff::matmul(w, v.apply(g, seq))), w};
}

TemporalAttention::Output TemporalAttention::attend_last(Graph& g, Var seq) {
  const double s = 1.0 / std::sqrt(double(seq.cols()));
  const Var last = diff::slice_rows(seq, seq.rows() - 1, 1);
  const Var scores = diff::scale(diff::matmul(q.apply(g, last), diff::transpose(k.apply(g, seq))), s);
  const Var w = diff::softmax(scores, diff::Axis::Rows);
  return {o.apply(g, diff::matmul(w, v.apply(g, seq))), w};
}

void TemporalAttention::collect(std::vector<diff::Parameter*>& out) {
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
}

PositionwiseFF::PositionwiseFF(std::string name, Eigen::Index width)
    : fc1(name + ".fc1", width, width), fc2(name + ".fc2", width, width) {}

void PositionwiseFF::init(CounterRng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

Var PositionwiseFF::apply(Graph& g, Var x) { return fc2.apply(g, diff::elu(fc1.apply(g, x))); }

void PositionwiseFF::collect(std::vector<diff::Parameter*>& out) {
  fc1.collect(out);
  fc2.collect(out);
}

std::string TftArchitecture::descriptor() const {
  std::ostringstream out;
  out.precision(17);
  out << "tft lookback=" << lookback << " variables=" << variables << " d_model=" << d_model
      << " dropout=" << dropout;
  return out.str();
}

TftArchitecture TftArchitecture::from_descriptor(const std::string& line) {
  std::istringstream in(line);
  std::string tok;
  in >> tok;
  if (tok != "tft") throw ValidationError("descriptor is for '" + tok + "', expected 'tft'");
  TftArchitecture a;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ValidationError("bad descriptor token '" + tok + "'");
    const auto k = tok.substr(0, eq), v = tok.substr(eq + 1);
    if (k == "lookback") a.lookback = std::stoul(v);
    else if (k == "variables") a.variables = std::stoul(v);
    else if (k == "d_model") a.d_model = std::stoul(v);
    else if (k == "dropout") a.dropout = std::stod(v);
    else throw ValidationError("unknown tft descriptor key '" + k + "'");
  }
  a.validate();
  return a;
}

void TftArchitecture::validate() const {
  if (lookback == 0 || variables == 0 || d_model == 0) throw ValidationError("tft: sizes must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ValidationError("tft: dropout must be in [0, 1)");
}

TftModel::TftModel(TftArchitecture arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  const auto d = Eigen::Index(arch_.d_model);
  selection = VariableSelection(Eigen::Index(arch_.variables), d);
  encoder = LstmEncoder("tft.lstm", d, d);
  attention = TemporalAttention("tft.attn", d);
  ff = PositionwiseFF("tft.ff", d);
  head = Dense("tft.head", d, 1);

  CounterRng rng(seed, /*stream=*/0x7F7);
  selection.init(rng);
  encoder.init(rng);
  attention.init(rng);
  ff.init(rng);
  head.init(rng);
}

std::vector<diff::Parameter*> TftModel::parameters() {
  std::vector<diff::Parameter*> out;
  selection.collect(out);
  encoder.collect(out);
  attention.collect(out);
  ff.collect(out);
  head.collect(out);
  return out;
}

std::vector<Var> TftModel::encode(Graph& g, const WindowBatch& batch, CounterRng& rng, Var* weights) {
  if (batch.length != Eigen::Index(arch_.lookback) || batch.features() != Eigen::Index(arch_.variables))
    throw ValidationError("tft: window must be " + std::to_string(arch_.lookback) + "x" +
                          std::to_string(arch_.variables));
  // Selection runs once over every (step, sample) row; the result stays time-major.
  const auto sel = selection.apply(g, g.constant(batch.steps));
  if (weights) *weights = sel.weights;
  std::vector<Var> xs;
  xs.reserve(std::size_t(batch.length));
  for (Eigen::Index t = 0; t < batch.length; ++t) xs.push_back(diff::slice_rows(sel.blended, t * batch.batch, batch.batch));
  auto hs = encoder.apply(g, xs);
  for (auto& h : hs) h = diff::dropout(h, arch_.dropout, rng);
  return hs;
}

Var TftModel::forward(Graph& g, const WindowBatch& batch, CounterRng& rng) {
  const auto hs = encode(g, batch, rng, nullptr);
  const Var all = diff::concat_rows(hs);  // row t * B + b
  const Eigen::Index B = batch.batch, T = batch.length;
  std::vector<Var> finals;
  finals.reserve(std::size_t(B));
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(T));
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) rows[std::size_t(t)] = t * B + b;
    const Var seq = diff::gather_rows(all, rows);
    const Var attended = diff::add(diff::slice_rows(seq, T - 1, 1), attention.attend_last(g, seq).out);
    finals.push_back(attended);
  }
  const Var z = diff::concat_rows(finals);
  return head.apply(g, diff::add(z, ff.apply(g, z)));
}

double TftModel::predict_full_path(const Matrix& window) const {
  auto& self = const_cast<TftModel&>(*this);
  Graph g;
  CounterRng rng(0);
  const Var seq = diff::concat_rows(self.encode(g, make_batch(window), rng, nullptr));
  const Var a = diff::add(seq, self.attention.self_attend(g, seq).out);
  const Var r = diff::add(a, self.ff.apply(g, a));
  return self.head.apply(g, diff::slice_rows(r, r.rows() - 1, 1)).scalar();
}

TftModel::Interpretability TftModel::interpret(const Matrix& window) const {
  auto& self = const_cast<TftModel&>(*this);
  Graph g;
  CounterRng rng(0);
  Var weights;
  const Var seq = diff::concat_rows(self.encode(g, make_batch(window), rng, &weights));
  return {weights.value(), self.attention.self_attend(g, seq).weights.value()};
}

std::string TftModel::interpretability_csv(const Matrix& window, std::span<const std::string> names) const {
  const auto info = interpret(window);
  if (names.size() != std::size_t(info.variable_weights.cols()))
    throw ValidationError("interpretability: expected " + std::to_string(info.variable_weights.cols()) + " names");
  std::ostringstream out;
  out.precision(17);
  out << "section,step";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Eigen::Index t = 0; t < info.variable_weights.rows(); ++t) {
    out << "selection," << t;
    for (Eigen::Index j = 0; j < info.variable_weights.cols(); ++j) out << ',' << info.variable_weights(t, j);
    out << '\n';
  }
  out << "section,query";
  for (Eigen::Index j = 0; j < info.attention.cols(); ++j) out << ",key" << j;
  out << '\n';
  for (Eigen::Index t = 0; t < info.attention.rows(); ++t) {
    out << "attention," << t;
    for (Eigen::Index j = 0; j < info.attention.cols(); ++j) out << ',' << info.attention(t, j);
    out << '\n';
  }
  return out.str();
}

ParameterAudit TftModel::audit() const {
  const bool custom = arch_.d_model == 32, full = arch_.d_model == 64;
  auto pub = [&](std::size_t c, std::size_t f) { return custom ? c : full ? f : 0; };
  ParameterAudit a;
  a.rows.push_back({"variable_embeddings", selection.embed_w.size() + selection.embed_b.size(), 0});
  a.rows.push_back({"variable_selection_grn", selection.grn.size(), pub(4'224, 16'640)});
  a.rows.push_back({"variable_selection_score", selection.score.size(), 0});
  a.rows.push_back({"lstm_encoder", encoder.size(), pub(8'320, 17'920)});
  a.rows.push_back({"temporal_self_attention", attention.size(), pub(4'224, 16'640)});
  a.rows.push_back({"positionwise_ff", ff.size(), pub(2'112, 8'320)});
  a.rows.push_back({"output_dense", head.size(), pub(33, 65)});
  for (const auto& r : a.rows) a.total += r.audited;
  a.published_total = custom ? kTftPublishedTotal : 0;
  return a;
}

void TftModel::save(std::ostream& out) {
  const auto params = parameters();
  write_parameters(out, kind(), descriptor(), params);
}

TftModel TftModel::load(std::istream& in) {
  const auto start = in.tellg();
  const auto arch = TftArchitecture::from_descriptor(read_descriptor(in, "tft"));
  in.seekg(start);
  TftModel m(arch, 0);
  const auto params = m.parameters();
  read_parameters(in, "tft", params);
  return m;
}

std::vector<std::string> tft_variable_names() {
  std::vector<std::string> out;
  for (auto n : kFeatureNames) out.emplace_back(n);
  for (auto d : {"mon", "tue", "wed", "thu", "fri", "sat", "sun"}) out.push_back(std::string("dow_") + d);
  for (int m = 1; m <= 12; ++m) out.push_back("month_" + std::to_string(m));
  return out;
}

}  // namespace stackcast
