#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ntulm/common.hpp"

namespace ntulm {

enum class TaskType { Multiclass, Multilabel };

struct ProbeConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // 0: same as input_dim
  std::size_t num_classes = 0;
  std::size_t epochs = 200;
  double learning_rate = 1e-2;
  std::uint64_t rng_seed = 0;
  TaskType task_type = TaskType::Multiclass;

  std::size_t hidden() const { return hidden_dim ? hidden_dim : input_dim; }
};

// Two-layer perceptron: tanh hidden layer, softmax (multiclass) or per-class
// sigmoid (multilabel) output.
struct ProbeParams {
  Eigen::MatrixXd w1, b1, w2, b2;
};

struct ProbeForward {
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd logits;
};

inline ProbeParams init_probe(const ProbeConfig& cfg) {
  if (cfg.input_dim == 0 || cfg.num_classes < 2) throw Error(ErrorCode::ConfigInvalid, "probe needs input_dim > 0 and >= 2 classes");
  Rng rng(cfg.rng_seed);
  const auto in = static_cast<Eigen::Index>(cfg.input_dim), hid = static_cast<Eigen::Index>(cfg.hidden());
  const auto out = static_cast<Eigen::Index>(cfg.num_classes);
  const auto glorot = [&](Eigen::Index r, Eigen::Index c) {
    const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
  };
  return {glorot(in, hid), Eigen::MatrixXd::Zero(1, hid), glorot(hid, out), Eigen::MatrixXd::Zero(1, out)};
}

inline ProbeForward probe_forward(const ProbeParams& p, const Eigen::MatrixXd& x) {
  ProbeForward f;
  f.hidden = ((x * p.w1).rowwise() + p.b1.row(0)).array().tanh();
  f.logits = (f.hidden * p.w2).rowwise() + p.b2.row(0);
  return f;
}

/// Class probabilities: row softmax or element-wise sigmoid.
inline Eigen::MatrixXd probe_predict(const ProbeParams& p, const Eigen::MatrixXd& x, TaskType type) {
  Eigen::MatrixXd z = probe_forward(p, x).logits;
  if (type == TaskType::Multilabel) return z.unaryExpr([](double v) { return sigmoid(v); });
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

/// Mean loss over rows: cross-entropy against one-hot `targets`, or summed
/// per-class binary cross-entropy. Fills `grad` when given.
inline double probe_loss(const ProbeParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets, TaskType type,
                         ProbeParams* grad) {
  const auto f = probe_forward(p, x);
  const double n = static_cast<double>(x.rows());
  double loss = 0.0;
  Eigen::MatrixXd dlogits(f.logits.rows(), f.logits.cols());
  for (Eigen::Index i = 0; i < f.logits.rows(); ++i) {
    if (type == TaskType::Multiclass) {
      const double mx = f.logits.row(i).maxCoeff();
      const double lse = mx + std::log((f.logits.row(i).array() - mx).exp().sum());
      const Eigen::RowVectorXd logp = f.logits.row(i).array() - lse;
      loss -= (targets.row(i).array() * logp.array()).sum();
      dlogits.row(i) = logp.array().exp().matrix() - targets.row(i);
    } else {
      for (Eigen::Index c = 0; c < f.logits.cols(); ++c) {
        const double z = f.logits(i, c), t = targets(i, c);
        loss -= t * log_sigmoid(z) + (1.0 - t) * log_sigmoid(-z);
        dlogits(i, c) = sigmoid(z) - t;
      }
    }
  }
  loss /= n;
  if (grad) {
    dlogits /= n;
    grad->w2 = f.hidden.transpose() * dlogits;
    grad->b2 = dlogits.colwise().sum();
    const Eigen::MatrixXd dpre = (dlogits * p.w2.transpose()).array() * (1.0 - f.hidden.array().square());
    grad->w1 = x.transpose() * dpre;
    grad->b1 = dpre.colwise().sum();
  }
  return loss;
}

/// Full-batch gradient descent for `cfg.epochs` steps. Multiclass targets must
/// cover at least two classes.
inline ProbeParams train_probe(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets, const ProbeConfig& cfg,
                               std::vector<double>* loss_trace = nullptr) {
  if (static_cast<std::size_t>(x.cols()) != cfg.input_dim || static_cast<std::size_t>(targets.cols()) != cfg.num_classes ||
      x.rows() != targets.rows() || x.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch, "probe inputs do not match the config");
  if (cfg.task_type == TaskType::Multiclass) {
    std::size_t present = 0;
    for (Eigen::Index c = 0; c < targets.cols(); ++c) present += targets.col(c).sum() > 0;
    if (present < 2) throw Error(ErrorCode::DegenerateLabels, "training labels contain a single class");
  }
  ProbeParams p = init_probe(cfg);
  ProbeParams g;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = probe_loss(p, x, targets, cfg.task_type, &g);
    if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "probe loss is not finite");
    if (loss_trace) loss_trace->push_back(loss);
    p.w1 -= cfg.learning_rate * g.w1;
    p.b1 -= cfg.learning_rate * g.b1;
    p.w2 -= cfg.learning_rate * g.w2;
    p.b2 -= cfg.learning_rate * g.b2;
  }
  return p;
}

inline std::vector<int> argmax_rows(const Eigen::MatrixXd& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    m.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace ntulm
