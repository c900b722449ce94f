#include "stackcast/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stackcast/error.hpp"

namespace stackcast {

void Adam::step(std::span<diff::Parameter* const> params) {
  for (const auto* p : params)
    if (!p->grad.allFinite()) throw NumericError("adam: non-finite gradient in " + p->name);
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(diff::Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(diff::Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw ValidationError("adam: parameter list changed between steps");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_));
  const double c2 = 1.0 - std::pow(b2, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    m_[k] = b1 * m_[k] + (1 - b1) * p->grad;
    v_[k] = b2 * v_[k] + (1 - b2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= config_.learning_rate * (m_[k].array() / c1) /
                        ((v_[k].array() / c2).sqrt() + config_.epsilon);
  }
}

double global_grad_norm(std::span<diff::Parameter* const> params) {
  double ss = 0;
  for (const auto* p : params) ss += p->grad.squaredNorm();
  return std::sqrt(ss);
}

double clip_gradients(std::span<diff::Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0)) throw ValidationError("train: learning rate must be positive");
  if (patience < 1) throw ValidationError("train: patience must be at least 1");
  if (batch_size < 1) throw ValidationError("train: batch size must be at least 1");
}

std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::NoEpochs: return "no-epochs";
    case StopReason::MaxEpochs: return "max-epochs";
    case StopReason::EarlyStopping: return "early-stopping";
  }
  return "?";
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,validation_loss\n";
  for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << '\n';
  return out.str();
}

double evaluate_mse(const Regressor& model, const SampleSet& samples, std::size_t batch_size) {
  if (samples.size() == 0) throw ValidationError("evaluate_mse: empty sample set");
  const auto pred = model.predict(samples, batch_size);
  double ss = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ss += (pred[i] - samples.targets[i]) * (pred[i] - samples.targets[i]);
  return ss / static_cast<double>(pred.size());
}

TrainHistory train(Regressor& model, const SampleSet& train_set, const SampleSet& validation_set,
                   const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw ValidationError("train: no training samples");
  if (validation_set.size() == 0) throw ValidationError("train: no validation samples");

  TrainHistory history;
  if (config.max_epochs == 0) return history;

  auto params = model.parameters();
  Adam adam(config.adam);
  CounterRng rng(config.seed, /*stream=*/0x7472'6169'6eULL);  // "train"

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  auto best = snapshot(params);
  history.best_validation_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const auto n = std::min(config.batch_size, order.size() - start);
        const std::span<const std::size_t> idx(order.data() + start, n);
        const auto batch = make_batch(train_set, idx);
        diff::Matrix target(Eigen::Index(n), 1);
        for (std::size_t i = 0; i < n; ++i) target(Eigen::Index(i), 0) = train_set.targets[idx[i]];

        for (auto* p : params) p->zero_grad();
        diff::Graph g(diff::Mode::Training);
        const auto loss = diff::mse(model.forward(g, batch, rng), target);
        g.backward(loss);
        if (config.clip_norm > 0) clip_gradients(params, config.clip_norm);
        adam.step(params);
        loss_sum += loss.scalar() * static_cast<double>(n);
      }
    } catch (const NumericError& e) {
      restore(params, best);
      throw TrainingError(model.kind() + ": diverged in epoch " + std::to_string(epoch) + " (" + e.what() +
                          "); restored epoch " + std::to_string(history.best_epoch) + " parameters");
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.validation_loss = evaluate_mse(model, validation_set);
    if (!std::isfinite(rec.validation_loss) || !std::isfinite(rec.train_loss)) {
      restore(params, best);
      throw TrainingError(model.kind() + ": non-finite loss in epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(rec);
    if (rec.validation_loss < history.best_validation_loss) {
      history.best_validation_loss = rec.validation_loss;
      history.best_epoch = epoch;
      best = snapshot(params);
    }
    if (epoch - history.best_epoch >= config.patience) {
      history.stop = StopReason::EarlyStopping;
      break;
    }
    history.stop = StopReason::MaxEpochs;
  }
  restore(params, best);
  return history;
}

}  // namespace stackcast
