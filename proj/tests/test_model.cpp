// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "stutter/detector.hpp"
#include "stutter/error.hpp"
#include "stutter/model.hpp"
#include "stutter/model_io.hpp"
#include "test_support.hpp"

using namespace stutter;
using testing_support::random_tensor;
using testing_support::TempDir;

namespace {

struct Row {
  std::string kind;
  Shape shape;
  std::size_t params;
};

// Reference layer tables, batch dimension dropped.
const std::vector<Row> kProlongationTable = {
    {"Conv2D", {2, 20, 32}, 192}, {"Activation", {2, 20, 32}, 0}, {"Conv2D", {2, 8, 32}, 5152},
    {"Activation", {2, 8, 32}, 0}, {"Reshape", {16, 32}, 0},      {"GRU", {16, 32}, 6240},
    {"GRU", {32}, 6240},           {"Dropout", {32}, 0},          {"Dense", {1}, 33},
    {"Activation", {1}, 0},
};

const std::vector<Row> kRepetitionTable = {
    {"Conv2D", {3, 37, 32}, 288},   {"Activation", {3, 37, 32}, 0}, {"Conv2D", {3, 30, 32}, 8224},
    {"Activation", {3, 30, 32}, 0}, {"Conv2D", {3, 23, 48}, 12336}, {"Activation", {3, 23, 48}, 0},
    {"Conv2D", {3, 16, 48}, 18480}, {"Activation", {3, 16, 48}, 0}, {"Conv2D", {3, 9, 64}, 24640},
    {"Activation", {3, 9, 64}, 0},  {"Reshape", {27, 64}, 0},       {"GRU", {27, 32}, 9312},
    {"GRU", {32}, 6240},            {"Dropout", {32}, 0},           {"Dense", {1}, 33},
    {"Activation", {1}, 0},
};

void expect_table(const ModelGraph& g, const std::vector<Row>& table) {
  ASSERT_EQ(g.layer_count(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(kind_name(g.layer(i).kind), table[i].kind) << "row " << i;
    EXPECT_EQ(g.shape_trace()[i + 1], table[i].shape) << "row " << i;
    EXPECT_EQ(g.layer_param_count(i), table[i].params) << "row " << i;
  }
}

std::size_t formula_params(const ModelGraph& g, std::size_t i) {
  const Shape& in = g.shape_trace()[i];
  return std::visit(
      [&](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2DSpec>) {
          return s.filters * (s.kernel_h * s.kernel_w * in[2]) + s.filters;
        } else if constexpr (std::is_same_v<T, GruSpec>) {
          return 3 * (s.units * in[1] + s.units * s.units + s.units);
        } else if constexpr (std::is_same_v<T, DenseSpec>) {
          return in[0] * s.units + s.units;
        } else {
          return 0;
        }
      },
      g.layer(i).kind);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no stutter::Error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Architecture, ProlongationTable) {
  auto g = build_prolongation_model();
  EXPECT_EQ(g.input_shape(), (Shape{2, 44, 1}));
  expect_table(g, kProlongationTable);
  EXPECT_EQ(g.param_count(), 17857u);
  EXPECT_EQ(g.shape_trace()[3], (Shape{2, 8, 32}));
  EXPECT_EQ(g.shape_trace().back(), (Shape{1}));
}

TEST(Architecture, RepetitionTable) {
  auto g = build_repetition_model();
  EXPECT_EQ(g.input_shape(), (Shape{13, 44, 1}));
  expect_table(g, kRepetitionTable);
  EXPECT_EQ(g.param_count(), 79553u);
  EXPECT_EQ(g.shape_trace()[9], (Shape{3, 9, 64}));
  EXPECT_EQ(g.layer_param_count(6), 18480u);
}

TEST(Architecture, ParamFormulas) {
  for (const auto& g : {build_prolongation_model(), build_repetition_model()}) {
    for (std::size_t i = 0; i < g.layer_count(); ++i) EXPECT_EQ(g.layer_param_count(i), formula_params(g, i));
  }
}

TEST(Architecture, EmptyModel) {
  ModelGraph g({13, 44, 1});
  EXPECT_EQ(g.param_count(), 0u);
  ASSERT_EQ(g.shape_trace().size(), 1u);
  EXPECT_EQ(g.shape_trace()[0], (Shape{13, 44, 1}));
}

TEST(Architecture, ShapeErrors) {
  ModelGraph g({2, 4, 1});
  EXPECT_EQ(code_of([&] { g.add("c", Conv2DSpec{1, 5, 1, 1, 3}); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { g.add("r", ReshapeSpec{{3, 3}}); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { g.add("g", GruSpec{4, true}); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(g.layer_count(), 0u);
}

TEST(Architecture, ReducedWidthStillBuilds) {
  ArchitectureOptions o;
  o.width_divisor = 8;
  auto g = build_repetition_model(o);
  EXPECT_EQ(g.shape_trace()[1], (Shape{3, 37, 4}));
  EXPECT_EQ(g.output_shape(), (Shape{1}));
}

TEST(Initialize, SeededAndBiasFree) {
  auto a = build_prolongation_model();
  auto b = build_prolongation_model();
  auto c = build_prolongation_model();
  a.initialize(5);
  b.initialize(5);
  c.initialize(6);
  bool differs = false;
  for (std::size_t i = 0; i < a.layer_count(); ++i) {
    auto names = param_names(a.layer(i).kind);
    for (std::size_t p = 0; p < a.params(i).size(); ++p) {
      EXPECT_EQ(a.params(i)[p], b.params(i)[p]);
      if (a.params(i)[p] != c.params(i)[p]) differs = true;
      if (names[p] == "bias") {
        for (double v : a.params(i)[p].data) EXPECT_EQ(v, 0.0);
      }
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Predict, ZeroFinalLayerGivesHalf) {
  auto g = build_prolongation_model();
  g.initialize(1);
  const std::size_t dense = g.layer_count() - 2;
  for (auto& p : g.params(dense)) std::fill(p.data.begin(), p.data.end(), 0.0);
  std::mt19937_64 rng(1);
  EXPECT_EQ(predict_probability(g, random_tensor({2, 44, 1}, rng)), 0.5);
}

TEST(Predict, DropoutRateIrrelevantAtInference) {
  ArchitectureOptions lo, hi;
  lo.dropout_rate = 0.0;
  hi.dropout_rate = 0.9;
  auto a = build_prolongation_model(lo);
  auto b = build_prolongation_model(hi);
  a.initialize(3);
  b.initialize(3);
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 44, 1}, rng);
  EXPECT_EQ(predict_probability(a, x), predict_probability(b, x));
}

TEST(Predict, DoesNotMutate) {
  auto g = build_repetition_model();
  g.initialize(4);
  auto before = g;
  std::mt19937_64 rng(3);
  predict_probability(g, random_tensor({13, 44, 1}, rng));
  for (std::size_t i = 0; i < g.layer_count(); ++i) EXPECT_EQ(g.params(i), before.params(i));
}

TEST(Predict, ShapeMismatch) {
  auto g = build_prolongation_model();
  EXPECT_EQ(code_of([&] { predict_probability(g, Tensor({13, 44, 1})); }), ErrorCode::ShapeMismatch);
}

TEST(Serialize, RoundTripIsBitExact) {
  for (auto g : {build_prolongation_model(), build_repetition_model()}) {
    g.initialize(9);
    nlohmann::json extra{{"note", "x"}, {"n", 3}};
    auto bytes = serialize(g, extra);
    auto loaded = deserialize(bytes);
    EXPECT_EQ(loaded.extra, extra);
    ASSERT_EQ(loaded.model.layer_count(), g.layer_count());
    EXPECT_EQ(loaded.model.shape_trace(), g.shape_trace());
    for (std::size_t i = 0; i < g.layer_count(); ++i) {
      EXPECT_EQ(loaded.model.layer(i).name, g.layer(i).name);
      EXPECT_EQ(loaded.model.params(i), g.params(i));
    }
    EXPECT_EQ(serialize(loaded.model, extra), bytes);
    std::mt19937_64 rng(1);
    auto x = random_tensor(g.input_shape(), rng);
    EXPECT_EQ(predict_probability(loaded.model, x), predict_probability(g, x));
  }
}

TEST(Serialize, HeaderLayout) {
  auto g = build_prolongation_model();
  auto bytes = serialize(g);
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GRCN");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
}

TEST(Serialize, CorruptInputs) {
  auto g = build_prolongation_model();
  g.initialize(1);
  auto bytes = serialize(g);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_EQ(code_of([&] { deserialize(truncated); }), ErrorCode::CorruptModel);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { deserialize(bad_magic); }), ErrorCode::CorruptModel);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(code_of([&] { deserialize(trailing); }), ErrorCode::CorruptModel);

  auto version = bytes;
  version[4] = 7;
  try {
    deserialize(version);
    FAIL() << "accepted version 7";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptModel);
    EXPECT_NE(std::string(e.what()).find("version 7"), std::string::npos) << e.what();
  }

  EXPECT_EQ(code_of([&] { deserialize(std::vector<std::uint8_t>{}); }), ErrorCode::CorruptModel);
}

TEST(Serialize, FileRoundTrip) {
  TempDir dir("model");
  auto g = build_repetition_model();
  g.initialize(2);
  save_model(dir / "m.grcn", g);
  auto loaded = load_model(dir / "m.grcn");
  for (std::size_t i = 0; i < g.layer_count(); ++i) EXPECT_EQ(loaded.model.params(i), g.params(i));
  EXPECT_EQ(code_of([&] { load_model(dir / "missing.grcn"); }), ErrorCode::IoFailure);
}
