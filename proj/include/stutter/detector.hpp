// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stutter/assessment.hpp"
#include "stutter/audio.hpp"
#include "stutter/features.hpp"
#include "stutter/model.hpp"
#include "stutter/train.hpp"

namespace stutter {

/// Knobs for the reference builders. `width_divisor` shrinks every filter
/// and unit count (ceil division) for fast gradient checks; 1 gives the
/// reference architectures.
struct ArchitectureOptions {
  std::size_t width_divisor = 1;
  double dropout_rate = 0.2;
};

/// 2 x 44 x 1 input, 17,857 parameters at full width.
ModelGraph build_prolongation_model(const ArchitectureOptions& opts = {});
/// 13 x 44 x 1 input, 79,553 parameters at full width.
ModelGraph build_repetition_model(const ArchitectureOptions& opts = {});
ModelGraph build_model(DetectorKind kind, const ArchitectureOptions& opts = {});

/// MFCC rows consumed by each detector: {0, 12} for prolongation, all 13
/// for repetition.
std::vector<std::size_t> detector_coefficients(DetectorKind kind, std::size_t n_mfcc = 13);

/// Per-coefficient affine normalization fitted on training features.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(std::span<const MfccMatrix> features);
  MfccMatrix apply(const MfccMatrix& m) const;
};

/// Wraps an MfccMatrix as an h x w x 1 tensor.
Tensor to_input_tensor(const MfccMatrix& m);

/// Probability from a model whose input already matches `features`.
double predict(const ModelGraph& model, const MfccMatrix& features);

struct Detector {
  DetectorKind kind = DetectorKind::Prolongation;
  ModelGraph model;
  FeatureConfig features;
  std::vector<std::size_t> coeff_indices;
  double threshold = 0.5;
  Standardizer standardizer;

  /// Selects this detector's rows from a full MFCC extraction,
  /// standardizes, and scores.
  double predict(const MfccMatrix& full) const;

  std::vector<std::uint8_t> serialize() const;
  static Detector deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Detector load(const std::filesystem::path& path);
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t n = 0;
};

ClassificationMetrics classification_metrics(std::span<const double> probabilities, std::span<const int> labels,
                                             double threshold);

struct DetectorOptions {
  FeatureConfig features;
  ArchitectureOptions architecture;
  double validation_fraction = 0.2;
};

struct DetectorTraining {
  Detector detector;
  TrainReport report;
  ClassificationMetrics train_metrics;
  ClassificationMetrics validation_metrics;
  std::size_t train_clips = 0;
  std::size_t validation_clips = 0;
};

void to_json(nlohmann::json& j, const DetectorTraining& t);

/// Full MFCC matrices for every segment of a clip, after resampling to the
/// feature rate.
std::vector<MfccMatrix> clip_features(const AudioClip& clip, const FeatureConfig& cfg);

/// ingest -> resample -> segment -> mfcc -> select -> train. Rows whose
/// label for `kind` is NA are skipped. The train/validation split is
/// stratified by clip label and seeded from `cfg.seed`.
DetectorTraining train_detector(DetectorKind kind, const std::vector<ManifestEntry>& manifest,
                                const TrainConfig& cfg, const DetectorOptions& opts = {});

struct SegmentScore {
  double offset_seconds = 0.0;
  double p_prolongation = 0.0;
  double p_repetition = 0.0;
  bool call_prolongation = false;
  bool call_repetition = false;
};

struct DiagnosisReport {
  std::string clip_id;
  std::vector<SegmentScore> segments;
  /// Empty when the clip produced no segments.
  std::optional<double> severity_prolongation;
  std::optional<double> severity_repetition;
};

void to_json(nlohmann::json& j, const DiagnosisReport& r);
void from_json(const nlohmann::json& j, DiagnosisReport& r);

DiagnosisReport diagnose(const Detector& prolongation, const Detector& repetition, const AudioClip& clip,
                         std::string clip_id = {});

}  // namespace stutter
