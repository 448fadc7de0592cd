// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "stutter/model.hpp"

namespace stutter {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy with predictions clamped to
/// [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> p, std::span<const double> y);

struct BatchGradients {
  double loss = 0.0;
  std::vector<double> predictions;
  Gradients gradients;
};

/// Mean-BCE loss and its exact gradient for every parameter over a batch.
/// Example k draws its dropout mask from `dropout_seed + k` when training.
/// Throws NaNDetected if any gradient is non-finite.
BatchGradients loss_and_gradients(const ModelGraph& model, std::span<const Tensor> inputs,
                                  std::span<const double> targets, const ForwardOptions& opts = {});

/// Stateful first-order optimizer bound to one model's parameter layout.
class ParameterUpdater {
 public:
  ParameterUpdater(const ModelGraph& model, const TrainConfig& cfg);
  void step(ModelGraph& model, const Gradients& grads);

 private:
  TrainConfig cfg_;
  Gradients m_;
  Gradients v_;
  std::uint64_t t_ = 0;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

/// Called after each epoch; return false to stop early.
using EpochCallback = std::function<bool(std::size_t epoch, const EpochStats&)>;

/// Mini-batch training on mean BCE. Examples are reshuffled every epoch
/// from `cfg.seed`; dropout is active only here.
TrainReport train(ModelGraph& model, std::span<const Tensor> inputs, std::span<const double> labels,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Sigmoid output of a single-unit model, dropout disabled.
double predict_probability(const ModelGraph& model, const Tensor& x);

}  // namespace stutter
