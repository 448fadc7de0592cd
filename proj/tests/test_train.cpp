// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "stutter/error.hpp"
#include "stutter/train.hpp"
#include "test_support.hpp"

using namespace stutter;
using testing_support::random_tensor;
using testing_support::randomize_params;

namespace {

ModelGraph logistic(std::size_t features) {
  ModelGraph g({features});
  g.add("dense", DenseSpec{1, ActivationFn::Linear}).add("sigmoid", ActivationSpec{ActivationFn::Sigmoid});
  return g;
}

ModelGraph tiny_grcnn() {
  ModelGraph g({2, 6, 1});
  g.add("conv", Conv2DSpec{1, 3, 1, 1, 2})
      .add("relu", ActivationSpec{ActivationFn::Relu})
      .add("reshape", ReshapeSpec{{8, 2}})
      .add("gru1", GruSpec{3, true})
      .add("gru2", GruSpec{3, false})
      .add("drop", DropoutSpec{0.2})
      .add("dense", DenseSpec{1, ActivationFn::Linear})
      .add("sigmoid", ActivationSpec{ActivationFn::Sigmoid});
  return g;
}

// Two Gaussian blobs separated by a wide margin.
void toy_set(std::size_t n, std::vector<Tensor>& x, std::vector<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    double label = i % 2;
    double cx = label ? 1.5 : -1.5;
    x.push_back(Tensor({2}, {cx + u(rng), -cx + u(rng)}));
    y.push_back(label);
  }
}

}  // namespace

TEST(Bce, HalfOnPositive) {
  std::vector<double> p{0.5}, y{1.0};
  EXPECT_NEAR(bce_loss(p, y), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(p, y), 0.693147, 1e-6);
}

TEST(Bce, PerfectPredictionIsClamped) {
  std::vector<double> p{1.0, 0.0}, y{1.0, 0.0};
  double l = bce_loss(p, y);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_LE(l, 1e-6);
}

TEST(Bce, MatchesScalarLoop) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(257), y(257);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    y[i] = u(rng) < 0.3 ? 1.0 : 0.0;
  }
  p[0] = 0.0;
  p[1] = 1.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
    ref -= y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q);
  }
  ref /= static_cast<double>(p.size());
  EXPECT_NEAR(bce_loss(p, y), ref, 1e-12);
}

TEST(Backward, FinalBiasAtHalf) {
  auto g = logistic(3);
  std::vector<Tensor> x{Tensor({3}, {0.2, -0.4, 0.9})};
  std::vector<double> y{1.0};
  auto bg = loss_and_gradients(g, x, y);
  EXPECT_EQ(bg.predictions[0], 0.5);
  // dL/dp = -1/p = -2, sigmoid' = 1/4
  EXPECT_NEAR(bg.gradients[0][1][0], -2.0 * 0.25, 1e-15);
  const double h = 1e-5;
  auto up = g, down = g;
  up.params(0)[1][0] += h;
  down.params(0)[1][0] -= h;
  double numeric = (loss_and_gradients(up, x, y).loss - loss_and_gradients(down, x, y).loss) / (2 * h);
  EXPECT_NEAR(bg.gradients[0][1][0], numeric, 1e-9);
}

TEST(Backward, BatchBceGradientOnTinyModel) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto g = tiny_grcnn();
    std::mt19937_64 rng(seed);
    randomize_params(g, rng, 0.7);
    std::vector<Tensor> x;
    std::vector<double> y;
    for (int i = 0; i < 4; ++i) {
      x.push_back(random_tensor({2, 6, 1}, rng));
      y.push_back(i % 2);
    }
    ForwardOptions opts{true, seed};
    auto bg = loss_and_gradients(g, x, y, opts);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t l = 0; l < g.layer_count(); ++l) {
      for (std::size_t p = 0; p < g.params(l).size(); ++p) {
        for (std::size_t e = 0; e < g.params(l)[p].size(); ++e) {
          auto up = g, down = g;
          up.params(l)[p][e] += h;
          down.params(l)[p][e] -= h;
          double n = (loss_and_gradients(up, x, y, opts).loss - loss_and_gradients(down, x, y, opts).loss) / (2 * h);
          worst = std::max(worst, testing_support::rel_error(bg.gradients[l][p][e], n));
        }
      }
    }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(Backward, NonFiniteGradientIsReported) {
  auto g = logistic(2);
  g.params(0)[0][0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<Tensor> x{Tensor({2}, {1.0, 1.0})};
  std::vector<double> y{1.0};
  try {
    loss_and_gradients(g, x, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NaNDetected);
  }
}

TEST(Optimizer, ZeroLearningRateLeavesWeightsUntouched) {
  for (auto opt : {Optimizer::Adam, Optimizer::Sgd}) {
    auto g = tiny_grcnn();
    g.initialize(3);
    auto before = g;
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.optimizer = opt;
    ParameterUpdater upd(g, cfg);
    std::mt19937_64 rng(1);
    std::vector<Tensor> x{random_tensor({2, 6, 1}, rng)};
    std::vector<double> y{1.0};
    auto bg = loss_and_gradients(g, x, y);
    upd.step(g, bg.gradients);
    upd.step(g, bg.gradients);
    for (std::size_t i = 0; i < g.layer_count(); ++i) EXPECT_EQ(g.params(i), before.params(i));
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.01;
  cfg.optimizer = Optimizer::Sgd;
  nlohmann::json j = cfg;
  auto back = j.get<TrainConfig>();
  EXPECT_EQ(back.learning_rate, 0.01);
  EXPECT_EQ(back.optimizer, Optimizer::Sgd);
}

TEST(Train, EmptyDataset) {
  auto g = logistic(2);
  try {
    train(g, std::span<const Tensor>{}, std::span<const double>{}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(Train, SeparableToyReachesFullAccuracy) {
  std::vector<Tensor> x;
  std::vector<double> y;
  toy_set(20, x, y, 7);
  auto g = logistic(2);
  g.initialize(1);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.05;
  std::size_t reached = 0;
  auto report = train(g, x, y, cfg, [&](std::size_t epoch, const EpochStats& s) {
    if (s.accuracy == 1.0 && reached == 0) reached = epoch + 1;
    return true;
  });
  EXPECT_GT(reached, 0u);
  EXPECT_LE(reached, 200u);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += (predict_probability(g, x[i]) >= 0.5) == (y[i] == 1.0);
  EXPECT_EQ(correct, x.size());
}

TEST(Train, SameSeedSameRun) {
  std::vector<Tensor> x;
  std::vector<double> y;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 24; ++i) {
    x.push_back(random_tensor({2, 6, 1}, rng));
    y.push_back(i % 3 == 0);
  }
  auto run = [&] {
    auto g = tiny_grcnn();
    g.initialize(11);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.seed = 99;
    auto r = train(g, x, y, cfg);
    return std::make_pair(r.epochs.back().loss, g);
  };
  auto [la, ga] = run();
  auto [lb, gb] = run();
  EXPECT_EQ(la, lb);
  for (std::size_t i = 0; i < ga.layer_count(); ++i) EXPECT_EQ(ga.params(i), gb.params(i));
}

TEST(Train, SmoothedLossNeverRises) {
  std::vector<Tensor> x;
  std::vector<double> y;
  toy_set(20, x, y, 3);
  auto g = logistic(2);
  g.initialize(2);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::Sgd;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 20;
  cfg.epochs = 60;
  auto r = train(g, x, y, cfg);
  std::vector<double> smooth;
  for (std::size_t i = 4; i < r.epochs.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i - 4; k <= i; ++k) s += r.epochs[k].loss;
    smooth.push_back(s / 5);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1] + 1e-15) << i;
  EXPECT_LT(r.epochs.back().loss, r.epochs.front().loss);
}
