// SPDX-License-Identifier: Apache-2.0
#include "stutter/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "stutter/error.hpp"

namespace stutter {

namespace {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// numpy-style "reflect": the edge sample is not repeated.
std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  std::vector<double> out(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    out[pad - 1 - i] = x[i + 1];
    out[pad + n + i] = x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(pad));
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = nlohmann::json{{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},   {"hop", c.hop},
                     {"n_mels", c.n_mels},           {"n_mfcc", c.n_mfcc}, {"f_min", c.f_min},
                     {"f_max", c.f_max},             {"log_floor", c.log_floor}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  FeatureConfig d;
  c.sample_rate = j.value("sample_rate", d.sample_rate);
  c.n_fft = j.value("n_fft", d.n_fft);
  c.hop = j.value("hop", d.hop);
  c.n_mels = j.value("n_mels", d.n_mels);
  c.n_mfcc = j.value("n_mfcc", d.n_mfcc);
  c.f_min = j.value("f_min", d.f_min);
  c.f_max = j.value("f_max", c.sample_rate / 2.0);
  c.log_floor = j.value("log_floor", d.log_floor);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(int sample_rate, std::size_t n_fft, std::size_t n_mels, double f_min,
                             double f_max)
    : f_min_(f_min), f_max_(f_max) {
  if (!(f_min < f_max)) throw Error(ErrorCode::BadBand, "f_min must be below f_max");
  if (f_min < 0.0 || f_max > sample_rate / 2.0) {
    throw Error(ErrorCode::BadBand, "band must lie within [0, sample_rate/2]");
  }
  if (n_mels < 13) throw Error(ErrorCode::InvalidArgument, "n_mels must be at least 13");
  if (!is_power_of_two(n_fft)) throw Error(ErrorCode::InvalidArgument, "n_fft must be a power of two");

  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
  }
  centers_.assign(edges.begin() + 1, edges.end() - 1);

  weights_ = Matrix(n_mels, n_bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      weights_(m, k) = w;
    }
  }
}

Matrix MelFilterbank::apply(const Matrix& power) const {
  if (power.rows != weights_.cols) {
    throw Error(ErrorCode::ShapeMismatch, "spectrogram has " + std::to_string(power.rows) +
                                              " bins, filterbank expects " + std::to_string(weights_.cols));
  }
  Matrix out(weights_.rows, power.cols);
  for (std::size_t m = 0; m < weights_.rows; ++m) {
    for (std::size_t k = 0; k < weights_.cols; ++k) {
      const double w = weights_(m, k);
      if (w == 0.0) continue;
      const double* prow = power.data.data() + k * power.cols;
      double* orow = out.data.data() + m * out.cols;
      for (std::size_t t = 0; t < power.cols; ++t) orow[t] += w * prow[t];
    }
  }
  return out;
}

Matrix stft_power(std::span<const double> samples, std::size_t n_fft, std::size_t hop, bool centered) {
  if (!is_power_of_two(n_fft)) throw Error(ErrorCode::InvalidArgument, "n_fft must be a power of two");
  if (hop == 0) throw Error(ErrorCode::InvalidArgument, "hop must be positive");

  std::vector<double> padded;
  std::span<const double> signal = samples;
  if (centered) {
    if (samples.size() <= n_fft / 2) {
      throw Error(ErrorCode::SegmentTooShort,
                  std::to_string(samples.size()) + " samples cannot be reflection-padded by " +
                      std::to_string(n_fft / 2));
    }
    padded = reflect_pad(samples, n_fft / 2);
    signal = padded;
  } else if (samples.size() < n_fft) {
    throw Error(ErrorCode::SegmentTooShort,
                std::to_string(samples.size()) + " samples is shorter than one frame");
  }

  const std::size_t n_frames = (signal.size() - n_fft) / hop + 1;
  const std::size_t n_bins = n_fft / 2 + 1;

  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n_fft);
  }

  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n_fft));
  std::unique_ptr<fftw_complex, FftwFree> spec(fftw_alloc_complex(n_bins));
  std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan;
  {
    // The FFTW planner is not reentrant; execution is.
    static std::mutex planner_mutex;
    std::lock_guard lock(planner_mutex);
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in.get(), spec.get(), FFTW_ESTIMATE));
  }

  Matrix power(n_bins, n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* frame = signal.data() + t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) in.get()[i] = frame[i] * window[i];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double re = spec.get()[k][0];
      const double im = spec.get()[k][1];
      power(k, t) = re * re + im * im;
    }
  }
  return power;
}

Matrix dct_ortho(const Matrix& m) {
  const std::size_t n = m.rows;
  Matrix out(n, m.cols);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double c =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                           (2.0 * static_cast<double>(n)));
      for (std::size_t t = 0; t < m.cols; ++t) out(k, t) += c * m(i, t);
    }
  }
  return out;
}

Matrix idct_ortho(const Matrix& m) {
  const std::size_t n = m.rows;
  Matrix out(n, m.cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
      const double c =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                           (2.0 * static_cast<double>(n)));
      for (std::size_t t = 0; t < m.cols; ++t) out(i, t) += c * m(k, t);
    }
  }
  return out;
}

Matrix log_mel_spectrogram(const Segment& seg, const FeatureConfig& cfg) {
  if (seg.sample_rate != cfg.sample_rate) {
    throw Error(ErrorCode::InvalidArgument, "segment rate " + std::to_string(seg.sample_rate) +
                                                " does not match feature rate " + std::to_string(cfg.sample_rate));
  }
  MelFilterbank bank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.f_min, cfg.f_max);
  Matrix mel = bank.apply(stft_power(seg, cfg.n_fft, cfg.hop, true));
  for (double& v : mel.data) v = std::log(v + cfg.log_floor);
  return mel;
}

MfccMatrix mfcc(const Segment& seg, const FeatureConfig& cfg) {
  if (cfg.n_mfcc == 0 || cfg.n_mfcc > cfg.n_mels) {
    throw Error(ErrorCode::InvalidArgument, "n_mfcc must be in 1..n_mels");
  }
  Matrix cepstra = dct_ortho(log_mel_spectrogram(seg, cfg));
  MfccMatrix out;
  out.values = Matrix(cfg.n_mfcc, cepstra.cols);
  std::copy_n(cepstra.data.begin(), cfg.n_mfcc * cepstra.cols, out.values.data.begin());
  out.coeff_indices.resize(cfg.n_mfcc);
  for (std::size_t i = 0; i < cfg.n_mfcc; ++i) out.coeff_indices[i] = i;
  return out;
}

MfccMatrix select_coefficients(const MfccMatrix& m, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::IndexOutOfRange, "empty coefficient selection");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.n_coeffs()) {
      throw Error(ErrorCode::IndexOutOfRange, "coefficient " + std::to_string(indices[i]) + " of " +
                                                  std::to_string(m.n_coeffs()));
    }
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw Error(ErrorCode::IndexOutOfRange, "coefficient indices must be strictly increasing");
    }
  }
  MfccMatrix out;
  out.values = Matrix(indices.size(), m.n_frames());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = m.values.row(indices[r]);
    std::copy(src.begin(), src.end(), out.values.data.begin() + static_cast<std::ptrdiff_t>(r * m.n_frames()));
    out.coeff_indices.push_back(m.coeff_indices.empty() ? indices[r] : m.coeff_indices[indices[r]]);
  }
  return out;
}

}  // namespace stutter
