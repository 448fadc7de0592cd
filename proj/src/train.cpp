// SPDX-License-Identifier: Apache-2.0
#include "stutter/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stutter/error.hpp"

namespace stutter {

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0, 1)");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"optimizer", c.optimizer == Optimizer::Adam ? "adam" : "sgd"},
                     {"seed", c.seed},
                     {"threshold", c.threshold}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    if (name == "adam") {
      c.optimizer = Optimizer::Adam;
    } else if (name == "sgd") {
      c.optimizer = Optimizer::Sgd;
    } else {
      throw Error(ErrorCode::InvalidArgument, "optimizer must be 'adam' or 'sgd'");
    }
  }
}

double bce_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "prediction/label count mismatch");
  if (p.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    sum += y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  return -sum / static_cast<double>(p.size());
}

BatchGradients loss_and_gradients(const ModelGraph& model, std::span<const Tensor> inputs,
                                  std::span<const double> targets, const ForwardOptions& opts) {
  if (inputs.size() != targets.size()) throw Error(ErrorCode::ShapeMismatch, "input/target count mismatch");
  if (inputs.empty()) throw Error(ErrorCode::EmptyDataset, "empty batch");
  if (element_count(model.output_shape()) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "binary cross-entropy needs a single-output model");
  }
  BatchGradients out;
  out.gradients = zero_gradients(model);
  const double n = static_cast<double>(inputs.size());
  ForwardTape tape;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    ForwardOptions o = opts;
    o.dropout_seed = opts.dropout_seed + k;
    const Tensor y = forward(model, inputs[k], o, &tape);
    const double p = y[0];
    const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double t = targets[k];
    Tensor dp(y.shape, {(-(t / pc) + (1.0 - t) / (1.0 - pc)) / n});
    backward(model, tape, dp, out.gradients);
    out.predictions.push_back(p);
  }
  out.loss = bce_loss(out.predictions, targets);
  for (std::size_t i = 0; i < out.gradients.size(); ++i) {
    for (const auto& g : out.gradients[i]) {
      if (!g.all_finite()) {
        throw Error(ErrorCode::NaNDetected, "non-finite gradient in layer " + model.layer(i).name);
      }
    }
  }
  return out;
}

ParameterUpdater::ParameterUpdater(const ModelGraph& model, const TrainConfig& cfg)
    : cfg_(cfg), m_(zero_gradients(model)), v_(zero_gradients(model)) {}

void ParameterUpdater::step(ModelGraph& model, const Gradients& grads) {
  ++t_;
  const double lr = cfg_.learning_rate;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& params = model.params(i);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& w = params[k].data;
      const auto& g = grads[i][k].data;
      if (cfg_.optimizer == Optimizer::Sgd) {
        for (std::size_t e = 0; e < w.size(); ++e) w[e] -= lr * g[e];
        continue;
      }
      auto& m = m_[i][k].data;
      auto& v = v_[i][k].data;
      for (std::size_t e = 0; e < w.size(); ++e) {
        m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g[e];
        v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g[e] * g[e];
        w[e] -= lr * (m[e] / bc1) / (std::sqrt(v[e] / bc2) + cfg_.epsilon);
      }
    }
  }
}

TrainReport train(ModelGraph& model, std::span<const Tensor> inputs, std::span<const double> labels,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (inputs.empty()) throw Error(ErrorCode::EmptyDataset, "no training examples");
  if (inputs.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "input/label count mismatch");
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }

  ParameterUpdater updater(model, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  std::vector<Tensor> batch_x;
  std::vector<double> batch_y;
  std::uint64_t example_counter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the raw engine output keeps shuffles identical
    // across standard library implementations.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_x.push_back(inputs[order[i]]);
        batch_y.push_back(labels[order[i]]);
      }
      ForwardOptions opts{.training = true, .dropout_seed = (cfg.seed << 32) ^ example_counter};
      example_counter += batch_x.size();
      BatchGradients bg = loss_and_gradients(model, batch_x, batch_y, opts);
      updater.step(model, bg.gradients);
      loss_sum += bg.loss * static_cast<double>(batch_x.size());
      for (std::size_t i = 0; i < batch_y.size(); ++i) {
        correct += (bg.predictions[i] >= cfg.threshold) == (batch_y[i] == 1.0);
      }
    }
    EpochStats stats{loss_sum / static_cast<double>(order.size()),
                     static_cast<double>(correct) / static_cast<double>(order.size())};
    report.epochs.push_back(stats);
    if (on_epoch && !on_epoch(epoch, stats)) break;
  }
  return report;
}

double predict_probability(const ModelGraph& model, const Tensor& x) {
  const Tensor y = forward(model, x);
  if (y.size() != 1) throw Error(ErrorCode::ShapeMismatch, "model output is not a single probability");
  return y[0];
}

}  // namespace stutter
