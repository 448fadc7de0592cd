// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "json.hpp"

namespace stutter {

enum class DetectorKind { Prolongation, Repetition };

std::string_view to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(std::string_view name);

/// Percentage of segments called as stutter.
struct SeverityIndex {
  double value = 0.0;
  DetectorKind kind = DetectorKind::Prolongation;
  std::size_t n_segments = 0;
};

/// Throws NoSegments for an empty call list.
SeverityIndex severity_index(std::span<const bool> calls, DetectorKind kind);

/// Quartile level 1..4. Level k covers ((k-1)*25, k*25] percent; 0 maps to 1.
struct QuartileBucket {
  int level = 1;
  friend bool operator==(const QuartileBucket&, const QuartileBucket&) = default;
};

/// Throws OutOfRange outside [0, 100].
QuartileBucket bucketize(double percent);

/// Averaged reduction of the two severities since the initial diagnosis,
/// ceil(avg / 25) clamped into 1..4. All inputs are percentages.
QuartileBucket improvement_bucket(double initial_prolongation, double current_prolongation,
                                  double initial_repetition, double current_repetition);

struct StutterProfile {
  QuartileBucket prolongation;
  QuartileBucket repetition;
  QuartileBucket improvement;
  friend bool operator==(const StutterProfile&, const StutterProfile&) = default;
};

void to_json(nlohmann::json& j, const StutterProfile& p);
void from_json(const nlohmann::json& j, StutterProfile& p);

}  // namespace stutter
