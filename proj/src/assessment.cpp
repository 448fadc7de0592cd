// SPDX-License-Identifier: Apache-2.0
#include "stutter/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stutter/error.hpp"

namespace stutter {

namespace {

void require_percent(double v, const char* what) {
  if (!(v >= 0.0 && v <= 100.0)) {
    throw Error(ErrorCode::OutOfRange, std::string(what) + " must be a percentage in [0, 100], got " +
                                           std::to_string(v));
  }
}

int clamp_level(double ratio) {
  return static_cast<int>(std::clamp(std::ceil(ratio), 1.0, 4.0));
}

QuartileBucket bucket_from_json(const nlohmann::json& j) {
  const int level = j.get<int>();
  if (level < 1 || level > 4) throw Error(ErrorCode::OutOfRange, "bucket level must be 1..4");
  return {level};
}

}  // namespace

std::string_view to_string(DetectorKind kind) {
  return kind == DetectorKind::Prolongation ? "prolongation" : "repetition";
}

DetectorKind detector_kind_from_string(std::string_view name) {
  if (name == "prolongation") return DetectorKind::Prolongation;
  if (name == "repetition") return DetectorKind::Repetition;
  throw Error(ErrorCode::InvalidArgument, "kind must be 'prolongation' or 'repetition', got '" +
                                              std::string(name) + "'");
}

SeverityIndex severity_index(std::span<const bool> calls, DetectorKind kind) {
  if (calls.empty()) throw Error(ErrorCode::NoSegments, "severity is undefined without segments");
  const auto stutter = static_cast<std::size_t>(std::count(calls.begin(), calls.end(), true));
  return {100.0 * static_cast<double>(stutter) / static_cast<double>(calls.size()), kind, calls.size()};
}

QuartileBucket bucketize(double percent) {
  require_percent(percent, "severity");
  return {clamp_level(percent / 25.0)};
}

QuartileBucket improvement_bucket(double initial_prolongation, double current_prolongation,
                                  double initial_repetition, double current_repetition) {
  require_percent(initial_prolongation, "initial prolongation");
  require_percent(current_prolongation, "current prolongation");
  require_percent(initial_repetition, "initial repetition");
  require_percent(current_repetition, "current repetition");
  const double raw =
      ((initial_prolongation - current_prolongation) + (initial_repetition - current_repetition)) / 2.0;
  return {clamp_level(raw / 25.0)};
}

void to_json(nlohmann::json& j, const StutterProfile& p) {
  j = nlohmann::json{{"prolongation", p.prolongation.level},
                     {"repetition", p.repetition.level},
                     {"improvement", p.improvement.level}};
}

void from_json(const nlohmann::json& j, StutterProfile& p) {
  p.prolongation = bucket_from_json(j.at("prolongation"));
  p.repetition = bucket_from_json(j.at("repetition"));
  p.improvement = bucket_from_json(j.at("improvement"));
}

}  // namespace stutter
