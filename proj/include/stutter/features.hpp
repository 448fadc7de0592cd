// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "stutter/audio.hpp"

namespace stutter {

/// Row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// MFCC front-end parameters. Stored next to every trained detector so
/// inference extracts features exactly as training did.
struct FeatureConfig {
  int sample_rate = kCanonicalSampleRate;
  std::size_t n_fft = 2048;
  std::size_t hop = 512;
  std::size_t n_mels = 40;
  std::size_t n_mfcc = 13;
  double f_min = 0.0;
  double f_max = kCanonicalSampleRate / 2.0;
  double log_floor = 1e-10;
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);

/// Coefficients x frames. `coeff_indices[k]` is the original coefficient
/// index of row k.
struct MfccMatrix {
  Matrix values;
  std::vector<std::size_t> coeff_indices;

  std::size_t n_coeffs() const { return values.rows; }
  std::size_t n_frames() const { return values.cols; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with peaks equally spaced on the mel scale. Weights
/// peak at 1 (no area normalization).
class MelFilterbank {
 public:
  MelFilterbank(int sample_rate, std::size_t n_fft, std::size_t n_mels, double f_min, double f_max);

  const Matrix& weights() const { return weights_; }
  /// Peak frequency of each filter in Hz, increasing.
  const std::vector<double>& centers() const { return centers_; }
  double f_min() const { return f_min_; }
  double f_max() const { return f_max_; }

  /// mel energies (n_mels x frames) from a power spectrogram.
  Matrix apply(const Matrix& power) const;

 private:
  Matrix weights_;
  std::vector<double> centers_;
  double f_min_;
  double f_max_;
};

/// Power spectrogram, (n_fft/2 + 1) x n_frames, Hann-windowed. When
/// `centered`, the signal is reflection-padded by n_fft/2 on both sides and
/// n_frames = floor(len / hop) + 1.
Matrix stft_power(std::span<const double> samples, std::size_t n_fft, std::size_t hop, bool centered);
inline Matrix stft_power(const Segment& seg, std::size_t n_fft, std::size_t hop, bool centered) {
  return stft_power(seg.samples, n_fft, hop, centered);
}

/// Orthonormal DCT-II of each column of `m` (transform along rows).
Matrix dct_ortho(const Matrix& m);
/// Inverse of dct_ortho (orthonormal DCT-III).
Matrix idct_ortho(const Matrix& m);

/// Log mel energies, n_mels x frames: ln(melpower + log_floor).
Matrix log_mel_spectrogram(const Segment& seg, const FeatureConfig& cfg);

/// Full extraction: n_mfcc x frames; (13, 44) under the default config.
MfccMatrix mfcc(const Segment& seg, const FeatureConfig& cfg = {});

/// Row subset in the given (strictly increasing) order.
MfccMatrix select_coefficients(const MfccMatrix& m, std::span<const std::size_t> indices);

}  // namespace stutter
