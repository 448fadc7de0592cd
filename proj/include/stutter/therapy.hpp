// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stutter/assessment.hpp"

namespace stutter {

enum class TherapyLevel { Easy, Medium, Hard };

std::string_view to_string(TherapyLevel level);

/// A therapy column of the rule dataset. It is labeled 1 exactly when
/// (driver bucket - improvement bucket) >= min_gap.
struct TherapySpec {
  enum class Driver { Prolongation, Repetition };
  std::string name;
  Driver driver = Driver::Repetition;
  int min_gap = 2;
};

struct TherapyCatalog {
  std::vector<TherapySpec> therapies;

  /// "Therapy 1" driven by prolongation, "Therapy 2" by repetition.
  static TherapyCatalog default_catalog();
  void validate() const;
  std::vector<std::string> names() const;
};

void to_json(nlohmann::json& j, const TherapyCatalog& c);
void from_json(const nlohmann::json& j, TherapyCatalog& c);

struct RuleDatasetRow {
  int prolongation = 1;
  int repetition = 1;
  int improvement = 1;
  std::vector<int> labels;  // one per therapy, catalog order

  friend bool operator==(const RuleDatasetRow&, const RuleDatasetRow&) = default;
};

/// All 64 (prolongation, repetition, improvement) bucket triples in
/// lexicographic order, labeled by the catalog rules.
std::vector<RuleDatasetRow> generate_rule_dataset(const TherapyCatalog& catalog);

struct RuleDataset {
  std::vector<std::string> therapy_names;
  std::vector<RuleDatasetRow> rows;
};

void write_rule_dataset_csv(const std::filesystem::path& path, const RuleDataset& data);
RuleDataset read_rule_dataset_csv(const std::filesystem::path& path);

/// k(x, y) = (gamma * <x, y> + coef0)^degree
struct PolynomialKernel {
  int degree = 3;
  double gamma = 1.0 / 3.0;
  double coef0 = 1.0;

  double operator()(std::span<const double> a, std::span<const double> b) const;
};

struct SmoOptions {
  double C = 10.0;
  double tolerance = 1e-3;
  /// Iteration budget is max_passes * n_samples.
  std::size_t max_passes = 200;
};

/// Binary soft-margin SVM. Labels are stored as -1/+1; `predict` answers
/// in 0/1.
struct SvmModel {
  PolynomialKernel kernel;
  double C = 10.0;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas;
  std::vector<int> labels;
  double bias = 0.0;
  /// Set when the training labels had a single class.
  std::optional<int> constant;

  double decision(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
};

struct SmoResult {
  SvmModel model;
  std::vector<double> alphas;  // one per training sample
  std::vector<int> y;          // -1/+1 per training sample
  std::vector<std::size_t> support_indices;
  std::size_t iterations = 0;
  double kkt_gap = 0.0;
};

/// Sequential minimal optimization with maximal-violating-pair selection.
/// `labels` are 0/1. Throws SingleClass or NoConvergence.
SmoResult smo_train(const std::vector<std::vector<double>>& samples, std::span<const int> labels,
                    const PolynomialKernel& kernel, const SmoOptions& opts = {});

/// One binary SVM per therapy column.
struct TherapyRecommender {
  PolynomialKernel kernel;
  double C = 10.0;
  std::vector<std::string> therapy_names;
  std::vector<SvmModel> per_therapy;
  std::vector<std::string> warnings;

  int predict(std::size_t therapy, const StutterProfile& profile) const;
};

void to_json(nlohmann::json& j, const TherapyRecommender& r);
void from_json(const nlohmann::json& j, TherapyRecommender& r);

std::vector<double> profile_features(const StutterProfile& profile);

/// Columns with a single class become constant predictors and add a
/// warning instead of failing.
TherapyRecommender train_recommender(const RuleDataset& data, const PolynomialKernel& kernel = {},
                                     const SmoOptions& opts = {});

/// Fraction of rows whose column `therapy` the recommender reproduces.
double recommender_accuracy(const TherapyRecommender& recommender, const RuleDataset& data, std::size_t therapy);

struct TherapyAssignmentItem {
  std::string therapy;
  TherapyLevel level = TherapyLevel::Medium;
};

struct TherapyAssignment {
  std::vector<TherapyAssignmentItem> items;
};

void to_json(nlohmann::json& j, const TherapyAssignment& a);

/// Hard for low severity with high improvement, easy for high severity with
/// low improvement, medium otherwise.
TherapyLevel therapy_level(const StutterProfile& profile);

/// Throws NotTrained when the recommender lacks a catalog therapy.
TherapyAssignment recommend(const TherapyRecommender& recommender, const StutterProfile& profile,
                            const TherapyCatalog& catalog);

}  // namespace stutter
