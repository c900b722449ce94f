#include "stackcast/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stackcast/error.hpp"
#include "stackcast/rng.hpp"
#include "stackcast/serialize.hpp"

namespace stackcast {

void GbtConfig::validate() const {
  if (!(learning_rate > 0 && learning_rate <= 1)) throw ValidationError("gbt: learning_rate must be in (0, 1]");
  if (!(subsample > 0 && subsample <= 1)) throw ValidationError("gbt: subsample must be in (0, 1]");
  if (!(colsample_bytree > 0 && colsample_bytree <= 1)) throw ValidationError("gbt: colsample_bytree must be in (0, 1]");
  if (max_depth < 1) throw ValidationError("gbt: max_depth must be >= 1");
  if (alpha < 0 || lambda < 0 || gamma < 0 || min_child_weight < 0)
    throw ValidationError("gbt: regularizers must be non-negative");
}

double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

double leaf_weight(double g, double h, double alpha, double lambda) {
  const double denom = h + lambda;
  return denom > 0 ? -soft_threshold(g, alpha) / denom : 0.0;
}

namespace {
double score(double g, double h, double alpha, double lambda) {
  const double denom = h + lambda;
  if (denom <= 0) return 0.0;
  const double t = soft_threshold(g, alpha);
  return t * t / denom;
}
}  // namespace

double split_gain(double gl, double hl, double gr, double hr, double alpha, double lambda, double gamma) {
  return 0.5 * (score(gl, hl, alpha, lambda) + score(gr, hr, alpha, lambda) -
                score(gl + gr, hl + hr, alpha, lambda)) -
         gamma;
}

double RegressionTree::predict(std::span<const double> x) const {
  if (nodes_.empty()) return 0.0;
  int i = 0;
  while (nodes_[std::size_t(i)].feature >= 0) {
    const auto& n = nodes_[std::size_t(i)];
    i = x[std::size_t(n.feature)] < n.threshold ? n.left : n.right;
  }
  return nodes_[std::size_t(i)].weight;
}

std::size_t RegressionTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack;
  if (!nodes_.empty()) stack.emplace_back(0, 0);
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& n = nodes_[std::size_t(i)];
    if (n.feature >= 0) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return best;
}

std::size_t RegressionTree::leaves() const {
  return std::size_t(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

RegressionTree RegressionTree::grow(const Eigen::MatrixXd& x, std::span<const double> grad,
                                    std::span<const double> hess, std::span<const std::size_t> rows,
                                    std::span<const std::size_t> features, const GbtConfig& c) {
  RegressionTree tree;
  struct Pending {
    int node;
    std::vector<std::size_t> rows;
    std::size_t depth;
  };
  std::vector<Pending> work;
  tree.nodes_.emplace_back();
  work.push_back({0, {rows.begin(), rows.end()}, 0});

  while (!work.empty()) {
    Pending p = std::move(work.back());
    work.pop_back();
    double G = 0, H = 0;
    for (auto r : p.rows) {
      G += grad[r];
      H += hess[r];
    }
    {
      auto& node = tree.nodes_[std::size_t(p.node)];
      node.hess = H;
      node.weight = leaf_weight(G, H, c.alpha, c.lambda);
    }
    if (p.depth >= c.max_depth || p.rows.size() < 2) continue;

    double best_gain = 0;
    int best_feature = -1;
    double best_threshold = 0;
    std::vector<std::size_t> order(p.rows);
    for (auto f : features) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x(Eigen::Index(a), Eigen::Index(f)) < x(Eigen::Index(b), Eigen::Index(f));
      });
      double gl = 0, hl = 0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        gl += grad[order[k]];
        hl += hess[order[k]];
        const double v = x(Eigen::Index(order[k]), Eigen::Index(f));
        const double next = x(Eigen::Index(order[k + 1]), Eigen::Index(f));
        if (!(v < next)) continue;
        const double hr = H - hl;
        if (hl < c.min_child_weight || hr < c.min_child_weight) continue;
        const double gain = split_gain(gl, hl, G - gl, hr, c.alpha, c.lambda, c.gamma);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = int(f);
          best_threshold = v + (next - v) / 2;
        }
      }
    }
    if (best_feature < 0) continue;

    std::vector<std::size_t> left, right;
    for (auto r : p.rows)
      (x(Eigen::Index(r), best_feature) < best_threshold ? left : right).push_back(r);
    const int li = int(tree.nodes_.size());
    tree.nodes_.emplace_back();
    tree.nodes_.emplace_back();
    auto& node = tree.nodes_[std::size_t(p.node)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.gain = best_gain;
    node.left = li;
    node.right = li + 1;
    node.weight = 0;
    work.push_back({li + 1, std::move(right), p.depth + 1});
    work.push_back({li, std::move(left), p.depth + 1});
  }
  return tree;
}

double BoostedEnsemble::predict_one(std::span<const double> x) const {
  if (x.size() != features_ && !trees_.empty())
    throw ValidationError("gbt: expected " + std::to_string(features_) + " features, got " + std::to_string(x.size()));
  double s = 0;
  for (const auto& t : trees_) s += t.predict(x);
  return base_ + eta_ * s;
}

std::vector<double> BoostedEnsemble::predict(const Eigen::MatrixXd& x) const {
  if (!trees_.empty() && std::size_t(x.cols()) != features_)
    throw ValidationError("gbt: expected " + std::to_string(features_) + " features, got " + std::to_string(x.cols()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = x;
  std::vector<double> out(std::size_t(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0;
    const std::span<const double> row(rm.row(i).data(), std::size_t(x.cols()));
    for (const auto& t : trees_) s += t.predict(row);
    out[std::size_t(i)] = base_ + eta_ * s;
  }
  return out;
}

namespace {
double mae(std::span<const double> pred, std::span<const double> y) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(pred[i] - y[i]);
  return s / double(y.size());
}
}  // namespace

BoostedEnsemble BoostedEnsemble::fit(const Eigen::MatrixXd& x, std::span<const double> y, const GbtConfig& c,
                                     const Eigen::MatrixXd* eval_x, std::span<const double> eval_y, GbtFitLog* log,
                                     std::ostream* verbose_out) {
  c.validate();
  const auto n = std::size_t(x.rows());
  if (n == 0) throw ValidationError("gbt: empty training set");
  if (y.size() != n) throw ValidationError("gbt: feature and target counts differ");
  for (auto v : y)
    if (!std::isfinite(v)) throw ValidationError("gbt: non-finite target");
  if (!x.allFinite()) throw ValidationError("gbt: non-finite feature");
  const bool use_eval = eval_x != nullptr && eval_x->rows() > 0;
  if (use_eval && (std::size_t(eval_x->rows()) != eval_y.size() || eval_x->cols() != x.cols()))
    throw ValidationError("gbt: evaluation set shape mismatch");

  const double base = c.base_score ? *c.base_score : std::accumulate(y.begin(), y.end(), 0.0) / double(n);
  BoostedEnsemble model(base, c.learning_rate);
  model.features_ = std::size_t(x.cols());

  const auto nf = std::size_t(x.cols());
  const auto n_cols = std::max<std::size_t>(1, std::size_t(std::floor(c.colsample_bytree * double(nf) + 1e-12)));
  std::vector<double> pred(n, base), grad(n), hess(n, 1.0);
  std::vector<double> eval_pred(use_eval ? eval_y.size() : 0, base);
  GbtFitLog local;
  GbtFitLog& out = log ? *log : local;
  out = {};
  double best = std::numeric_limits<double>::infinity();
  CounterRng rng(c.seed, /*stream=*/0x6B7);

  std::vector<std::size_t> all_features(nf);
  std::iota(all_features.begin(), all_features.end(), 0);

  for (std::size_t round = 0; round < c.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      if (c.subsample >= 1 || rng.uniform() < c.subsample) rows.push_back(i);
    std::vector<std::size_t> features = all_features;
    if (n_cols < nf) {
      rng.shuffle(std::span<std::size_t>(features));
      features.resize(n_cols);
      std::sort(features.begin(), features.end());
    }

    model.trees_.push_back(RegressionTree::grow(x, grad, hess, rows, features, c));
    const auto& tree = model.trees_.back();
    Eigen::Matrix<double, 1, Eigen::Dynamic> row(nf);
    for (std::size_t i = 0; i < n; ++i) {
      row = x.row(Eigen::Index(i));
      pred[i] += c.learning_rate * tree.predict({row.data(), nf});
    }
    out.train_mae.push_back(mae(pred, y));

    if (!use_eval) continue;
    for (std::size_t i = 0; i < eval_pred.size(); ++i) {
      row = eval_x->row(Eigen::Index(i));
      eval_pred[i] += c.learning_rate * tree.predict({row.data(), nf});
    }
    const double v = mae(eval_pred, eval_y);
    out.validation_mae.push_back(v);
    if (c.verbose && verbose_out) *verbose_out << "[" << round << "] validation-mae:" << v << '\n';
    if (v < best) {
      best = v;
      out.best_round = round + 1;
    } else if (c.early_stopping_rounds > 0 && round + 1 - out.best_round >= c.early_stopping_rounds) {
      break;
    }
  }
  if (use_eval) model.trees_.resize(out.best_round);
  else out.best_round = model.trees_.size();
  return model;
}

void BoostedEnsemble::save(std::ostream& out) const {
  out << "stackcast-gbt 1\n";
  out << "base " << hex_double(base_) << "\neta " << hex_double(eta_) << "\nfeatures " << features_ << '\n';
  out << "trees " << trees_.size() << '\n';
  for (const auto& t : trees_) {
    out << "tree " << t.nodes().size() << '\n';
    for (const auto& n : t.nodes())
      out << n.feature << ' ' << hex_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
          << hex_double(n.weight) << ' ' << hex_double(n.gain) << ' ' << hex_double(n.hess) << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("gbt: write failed");
}

BoostedEnsemble BoostedEnsemble::load(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word) throw ValidationError("gbt file: expected '" + word + "', got '" + tok + "'");
  };
  auto hex = [&]() {
    std::string tok;
    if (!(in >> tok)) throw ValidationError("gbt file: truncated");
    return parse_hex_double(tok);
  };
  expect("stackcast-gbt");
  expect("1");
  BoostedEnsemble m;
  expect("base");
  m.base_ = hex();
  expect("eta");
  m.eta_ = hex();
  expect("features");
  in >> m.features_;
  expect("trees");
  std::size_t count = 0;
  in >> count;
  for (std::size_t t = 0; t < count; ++t) {
    expect("tree");
    std::size_t nodes = 0;
    in >> nodes;
    RegressionTree tree;
    for (std::size_t k = 0; k < nodes; ++k) {
      TreeNode n;
      in >> n.feature;
      n.threshold = hex();
      in >> n.left >> n.right;
      n.weight = hex();
      n.gain = hex();
      n.hess = hex();
      const auto limit = int(nodes);
      if (n.feature >= int(m.features_) || (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= limit || n.right >= limit)))
        throw ValidationError("gbt file: bad node in tree " + std::to_string(t));
      tree.nodes().push_back(n);
    }
    m.trees_.push_back(std::move(tree));
  }
  expect("end");
  return m;
}

bool operator==(const BoostedEnsemble& a, const BoostedEnsemble& b) {
  if (a.base_ != b.base_ || a.eta_ != b.eta_ || a.features_ != b.features_ || a.trees_.size() != b.trees_.size())
    return false;
  for (std::size_t t = 0; t < a.trees_.size(); ++t) {
    const auto& x = a.trees_[t].nodes();
    const auto& y = b.trees_[t].nodes();
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k].feature != y[k].feature || x[k].threshold != y[k].threshold || x[k].left != y[k].left ||
          x[k].right != y[k].right || x[k].weight != y[k].weight)
        return false;
  }
  return true;
}

}  // namespace stackcast
