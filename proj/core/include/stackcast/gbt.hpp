#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stackcast {

/// Squared-error second-order boosting. Defaults are the meta-learner settings.
struct GbtConfig {
  std::size_t n_estimators = 1000;
  double learning_rate = 0.05;
  std::size_t max_depth = 4;
  double subsample = 0.7;
  double colsample_bytree = 0.7;
  double alpha = 1.0;   // L1 on leaf weights
  double lambda = 5.0;  // L2 on leaf weights
  double gamma = 1.0;   // minimum gain to keep a split
  double min_child_weight = 10.0;
  std::size_t early_stopping_rounds = 50;
  std::optional<double> base_score;  // mean of the targets when unset
  std::uint64_t seed = 42;
  bool verbose = false;  // per-round validation MAE to the log stream

  void validate() const;
};

/// L1 soft threshold: sign(g) * max(0, |g| - alpha).
double soft_threshold(double g, double alpha);
double leaf_weight(double g, double h, double alpha, double lambda);
/// Loss reduction of splitting (G, H) into (gl, hl) and (G - gl, H - hl), minus gamma.
double split_gain(double gl, double hl, double gr, double hr, double alpha, double lambda, double gamma);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double weight = 0;  // leaf value before the learning-rate scaling
  double gain = 0;    // split gain for internal nodes
  double hess = 0;    // hessian sum of the training rows reaching the node
};

class RegressionTree {
 public:
  /// Rows go left when x[feature] < threshold.
  double predict(std::span<const double> x) const;
  std::size_t depth() const;
  std::size_t leaves() const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::vector<TreeNode>& nodes() noexcept { return nodes_; }

  /// Exact greedy growth on the given rows and features.
  static RegressionTree grow(const Eigen::MatrixXd& x, std::span<const double> grad, std::span<const double> hess,
                             std::span<const std::size_t> rows, std::span<const std::size_t> features,
                             const GbtConfig& config);

 private:
  std::vector<TreeNode> nodes_;
};

struct GbtFitLog {
  std::vector<double> train_mae;       // after each round
  std::vector<double> validation_mae;  // after each round; empty without an eval set
  std::size_t best_round = 0;          // trees kept
};

class BoostedEnsemble {
 public:
  BoostedEnsemble() = default;
  BoostedEnsemble(double base, double eta) : base_(base), eta_(eta) {}

  double predict_one(std::span<const double> x) const;
  std::vector<double> predict(const Eigen::MatrixXd& x) const;

  double base_score() const noexcept { return base_; }
  double learning_rate() const noexcept { return eta_; }
  std::size_t features() const noexcept { return features_; }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

  void save(std::ostream& out) const;
  static BoostedEnsemble load(std::istream& in);
  friend bool operator==(const BoostedEnsemble& a, const BoostedEnsemble& b);

  /// Fits on (x, y); the optional evaluation pair drives early stopping on MAE.
  static BoostedEnsemble fit(const Eigen::MatrixXd& x, std::span<const double> y, const GbtConfig& config,
                             const Eigen::MatrixXd* eval_x = nullptr, std::span<const double> eval_y = {},
                             GbtFitLog* log = nullptr, std::ostream* verbose_out = nullptr);

 private:
  double base_ = 0;
  double eta_ = 1;
  std::size_t features_ = 0;
  std::vector<RegressionTree> trees_;
};

}  // namespace stackcast
