// SPDX-License-Identifier: Apache-2.0
#include "stutter/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>

#include "stutter/error.hpp"
#include "stutter/model_io.hpp"

namespace stutter {

namespace {

std::size_t scaled(std::size_t n, const ArchitectureOptions& opts) {
  const std::size_t d = std::max<std::size_t>(1, opts.width_divisor);
  return (n + d - 1) / d;
}

void add_conv(ModelGraph& m, int& index, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
              std::size_t filters) {
  const auto suffix = std::to_string(++index);
  m.add("conv2d_" + suffix, Conv2DSpec{kh, kw, sh, sw, filters});
  m.add("activation_" + suffix, ActivationSpec{ActivationFn::Relu});
}

// Collapses the conv map (h, w, c) into a (h*w, c) sequence, then the two
// GRUs, dropout, and a sigmoid unit.
void add_recurrent_head(ModelGraph& m, int index, const ArchitectureOptions& opts) {
  const Shape conv = m.output_shape();
  m.add("reshape", ReshapeSpec{{conv[0] * conv[1], conv[2]}});
  m.add("gru1", GruSpec{scaled(32, opts), true});
  m.add("gru2", GruSpec{scaled(32, opts), false});
  m.add("dropout", DropoutSpec{opts.dropout_rate});
  m.add("dense", DenseSpec{1, ActivationFn::Linear});
  m.add("activation_" + std::to_string(index + 1), ActivationSpec{ActivationFn::Sigmoid});
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct ClipFeatures {
  std::vector<MfccMatrix> segments;
  int label = 0;
};

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace

ModelGraph build_prolongation_model(const ArchitectureOptions& opts) {
  ModelGraph m({2, 44, 1});
  int index = 0;
  add_conv(m, index, 1, 5, 1, 2, scaled(32, opts));
  add_conv(m, index, 1, 5, 1, 2, scaled(32, opts));
  add_recurrent_head(m, index, opts);
  return m;
}

ModelGraph build_repetition_model(const ArchitectureOptions& opts) {
  ModelGraph m({13, 44, 1});
  int index = 0;
  // Height stride 5 takes the 13 coefficient rows down to 3.
  add_conv(m, index, 1, 8, 5, 1, scaled(32, opts));
  add_conv(m, index, 1, 8, 1, 1, scaled(32, opts));
  add_conv(m, index, 1, 8, 1, 1, scaled(48, opts));
  add_conv(m, index, 1, 8, 1, 1, scaled(48, opts));
  add_conv(m, index, 1, 8, 1, 1, scaled(64, opts));
  add_recurrent_head(m, index, opts);
  return m;
}

ModelGraph build_model(DetectorKind kind, const ArchitectureOptions& opts) {
  return kind == DetectorKind::Prolongation ? build_prolongation_model(opts) : build_repetition_model(opts);
}

std::vector<std::size_t> detector_coefficients(DetectorKind kind, std::size_t n_mfcc) {
  if (kind == DetectorKind::Prolongation) return {0, 12};
  std::vector<std::size_t> all(n_mfcc);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

Standardizer Standardizer::fit(std::span<const MfccMatrix> features) {
  if (features.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit standardizer without features");
  const std::size_t rows = features.front().n_coeffs();
  Standardizer s;
  s.mean.assign(rows, 0.0);
  s.scale.assign(rows, 0.0);
  std::size_t count = 0;
  for (const auto& f : features) {
    if (f.n_coeffs() != rows) throw Error(ErrorCode::ShapeMismatch, "inconsistent coefficient count");
    for (std::size_t r = 0; r < rows; ++r) {
      for (double v : f.values.row(r)) s.mean[r] += v;
    }
    count += f.n_frames();
  }
  for (double& m : s.mean) m /= static_cast<double>(count);
  for (const auto& f : features) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (double v : f.values.row(r)) s.scale[r] += (v - s.mean[r]) * (v - s.mean[r]);
    }
  }
  for (double& v : s.scale) v = std::max(std::sqrt(v / static_cast<double>(count)), 1e-8);
  return s;
}

MfccMatrix Standardizer::apply(const MfccMatrix& m) const {
  if (mean.empty()) return m;
  if (m.n_coeffs() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "standardizer coefficient count mismatch");
  MfccMatrix out = m;
  for (std::size_t r = 0; r < out.n_coeffs(); ++r) {
    for (std::size_t c = 0; c < out.n_frames(); ++c) out.values(r, c) = (out.values(r, c) - mean[r]) / scale[r];
  }
  return out;
}

Tensor to_input_tensor(const MfccMatrix& m) { return Tensor({m.n_coeffs(), m.n_frames(), 1}, m.values.data); }

double predict(const ModelGraph& model, const MfccMatrix& features) {
  return predict_probability(model, to_input_tensor(features));
}

double Detector::predict(const MfccMatrix& full) const {
  return stutter::predict(model, standardizer.apply(select_coefficients(full, coeff_indices)));
}

std::vector<std::uint8_t> Detector::serialize() const {
  nlohmann::json extra{{"kind", to_string(kind)},
                       {"feature_config", features},
                       {"coeff_indices", coeff_indices},
                       {"threshold", threshold},
                       {"standardizer", {{"mean", standardizer.mean}, {"scale", standardizer.scale}}}};
  return stutter::serialize(model, extra);
}

Detector Detector::deserialize(std::span<const std::uint8_t> bytes) {
  LoadedModel loaded = stutter::deserialize(bytes);
  Detector d;
  try {
    const auto& e = loaded.extra;
    d.kind = detector_kind_from_string(e.at("kind").get<std::string>());
    d.features = e.at("feature_config").get<FeatureConfig>();
    d.coeff_indices = e.at("coeff_indices").get<std::vector<std::size_t>>();
    d.threshold = e.at("threshold").get<double>();
    d.standardizer.mean = e.at("standardizer").at("mean").get<std::vector<double>>();
    d.standardizer.scale = e.at("standardizer").at("scale").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::CorruptModel, std::string("detector metadata: ") + ex.what());
  }
  d.model = std::move(loaded.model);
  const Shape& in = d.model.input_shape();
  if (in.size() != 3 || in[0] != d.coeff_indices.size() || in[2] != 1) {
    throw Error(ErrorCode::CorruptModel, "model input does not match the coefficient selection");
  }
  return d;
}

void Detector::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

Detector Detector::load(const std::filesystem::path& path) { return deserialize(read_bytes(path)); }

ClassificationMetrics classification_metrics(std::span<const double> probabilities, std::span<const int> labels,
                                             double threshold) {
  ClassificationMetrics m;
  m.n = labels.size();
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool call = probabilities[i] >= threshold;
    const bool truth = labels[i] == 1;
    correct += call == truth;
    tp += call && truth;
    fp += call && !truth;
    fn += !call && truth;
  }
  if (m.n > 0) m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

void to_json(nlohmann::json& j, const DetectorTraining& t) {
  auto metrics = [](const ClassificationMetrics& m) {
    return nlohmann::json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"n", m.n}};
  };
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : t.report.epochs) epochs.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
  j = nlohmann::json{{"kind", to_string(t.detector.kind)},
                     {"accuracy", t.validation_metrics.accuracy},
                     {"precision", t.validation_metrics.precision},
                     {"recall", t.validation_metrics.recall},
                     {"validation", metrics(t.validation_metrics)},
                     {"train", metrics(t.train_metrics)},
                     {"train_clips", t.train_clips},
                     {"validation_clips", t.validation_clips},
                     {"param_count", t.detector.model.param_count()},
                     {"epochs", epochs}};
}

std::vector<MfccMatrix> clip_features(const AudioClip& clip, const FeatureConfig& cfg) {
  std::vector<MfccMatrix> out;
  for (const auto& seg : segment(resample(clip, cfg.sample_rate))) out.push_back(mfcc(seg, cfg));
  return out;
}

DetectorTraining train_detector(DetectorKind kind, const std::vector<ManifestEntry>& manifest,
                                const TrainConfig& cfg, const DetectorOptions& opts) {
  cfg.validate();
  const auto coeffs = detector_coefficients(kind, opts.features.n_mfcc);

  std::vector<ClipFeatures> clips;
  for (const auto& entry : manifest) {
    const auto& label = kind == DetectorKind::Prolongation ? entry.label_prolongation : entry.label_repetition;
    if (!label) continue;
    ClipFeatures cf;
    cf.label = *label;
    for (auto& m : clip_features(read_wav_file(entry.path), opts.features)) {
      cf.segments.push_back(select_coefficients(m, coeffs));
    }
    if (!cf.segments.empty()) clips.push_back(std::move(cf));
  }
  if (clips.empty()) throw Error(ErrorCode::EmptyDataset, "manifest has no labeled, non-empty clips");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < clips.size(); ++i) by_class[clips[i].label].push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) {
    throw Error(ErrorCode::EmptyClass, std::string("no ") + (by_class[1].empty() ? "stutter" : "non-stutter") +
                                           " clips for " + std::string(to_string(kind)));
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> train_ids, val_ids;
  for (auto& ids : by_class) {
    shuffle(ids, rng);
    auto n_val = static_cast<std::size_t>(std::llround(opts.validation_fraction * static_cast<double>(ids.size())));
    if (opts.validation_fraction > 0.0 && ids.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
    val_ids.insert(val_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_ids.insert(train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  }
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(val_ids.begin(), val_ids.end());

  std::vector<MfccMatrix> train_raw;
  std::vector<int> train_labels;
  for (std::size_t id : train_ids) {
    for (const auto& s : clips[id].segments) {
      train_raw.push_back(s);
      train_labels.push_back(clips[id].label);
    }
  }

  DetectorTraining out;
  Detector& det = out.detector;
  det.kind = kind;
  det.features = opts.features;
  det.coeff_indices = coeffs;
  det.threshold = cfg.threshold;
  det.standardizer = Standardizer::fit(train_raw);
  det.model = build_model(kind, opts.architecture);
  det.model.initialize(cfg.seed);

  std::vector<Tensor> inputs;
  std::vector<double> targets;
  for (std::size_t i = 0; i < train_raw.size(); ++i) {
    inputs.push_back(to_input_tensor(det.standardizer.apply(train_raw[i])));
    targets.push_back(train_labels[i]);
  }
  out.report = train(det.model, inputs, targets, cfg);

  auto evaluate = [&](const std::vector<std::size_t>& ids) {
    std::vector<double> probs;
    std::vector<int> labels;
    for (std::size_t id : ids) {
      for (const auto& s : clips[id].segments) {
        probs.push_back(stutter::predict(det.model, det.standardizer.apply(s)));
        labels.push_back(clips[id].label);
      }
    }
    return classification_metrics(probs, labels, det.threshold);
  };
  out.train_metrics = evaluate(train_ids);
  out.validation_metrics = evaluate(val_ids);
  out.train_clips = train_ids.size();
  out.validation_clips = val_ids.size();
  return out;
}

void to_json(nlohmann::json& j, const DiagnosisReport& r) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : r.segments) {
    segs.push_back({{"offset_s", s.offset_seconds},
                    {"p_prolongation", s.p_prolongation},
                    {"p_repetition", s.p_repetition},
                    {"call_prolongation", s.call_prolongation},
                    {"call_repetition", s.call_repetition}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"clip_id", r.clip_id},
                     {"n_segments", r.segments.size()},
                     {"per_segment", segs},
                     {"severity", {{"prolongation", opt(r.severity_prolongation)},
                                   {"repetition", opt(r.severity_repetition)}}}};
}

void from_json(const nlohmann::json& j, DiagnosisReport& r) {
  r.clip_id = j.at("clip_id").get<std::string>();
  r.segments.clear();
  for (const auto& s : j.at("per_segment")) {
    r.segments.push_back({s.at("offset_s").get<double>(), s.at("p_prolongation").get<double>(),
                          s.at("p_repetition").get<double>(), s.at("call_prolongation").get<bool>(),
                          s.at("call_repetition").get<bool>()});
  }
  if (j.at("n_segments").get<std::size_t>() != r.segments.size()) {
    throw Error(ErrorCode::InvalidArgument, "report n_segments disagrees with per_segment");
  }
  const auto& sev = j.at("severity");
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  r.severity_prolongation = opt(sev.at("prolongation"));
  r.severity_repetition = opt(sev.at("repetition"));
}

DiagnosisReport diagnose(const Detector& prolongation, const Detector& repetition, const AudioClip& clip,
                         std::string clip_id) {
  if (prolongation.kind != DetectorKind::Prolongation || repetition.kind != DetectorKind::Repetition) {
    throw Error(ErrorCode::InvalidArgument, "detectors passed in the wrong order");
  }
  const nlohmann::json a = prolongation.features, b = repetition.features;
  if (a != b) throw Error(ErrorCode::InvalidArgument, "detectors were trained with different feature configs");

  DiagnosisReport report;
  report.clip_id = std::move(clip_id);
  const AudioClip canonical = resample(clip, prolongation.features.sample_rate);
  for (const auto& seg : segment(canonical)) {
    const MfccMatrix m = mfcc(seg, prolongation.features);
    SegmentScore s;
    s.offset_seconds = static_cast<double>(seg.origin_offset) / seg.sample_rate;
    s.p_prolongation = prolongation.predict(m);
    s.p_repetition = repetition.predict(m);
    s.call_prolongation = s.p_prolongation >= prolongation.threshold;
    s.call_repetition = s.p_repetition >= repetition.threshold;
    report.segments.push_back(s);
  }
  if (!report.segments.empty()) {
    const std::size_t n = report.segments.size();
    auto prol_calls = std::make_unique<bool[]>(n);
    auto rep_calls = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      prol_calls[i] = report.segments[i].call_prolongation;
      rep_calls[i] = report.segments[i].call_repetition;
    }
    report.severity_prolongation = severity_index({prol_calls.get(), n}, DetectorKind::Prolongation).value;
    report.severity_repetition = severity_index({rep_calls.get(), n}, DetectorKind::Repetition).value;
  }
  return report;
}

}  // namespace stutter
