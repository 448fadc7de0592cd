// SPDX-License-Identifier: Apache-2.0
#include "stutter/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <system_error>

#include "stutter/error.hpp"
#include "stutter/features.hpp"

namespace stutter {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNoiseFloor = 1e-3;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Distribution objects are implementation-defined, so draws are done by hand
// to keep clips identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix(seed)) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return mag * std::cos(kTwoPi * u2);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void check_args(double seconds, int sample_rate) {
  if (!(seconds >= 1.0)) throw Error(ErrorCode::InvalidArgument, "clip length must be at least 1 s");
  if (sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
}

std::size_t n_samples(double seconds, int sample_rate) {
  return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

// Noise floor, then snap to the 16-bit grid so WAV round trips are exact.
AudioClip finish(std::vector<double> x, int sample_rate, Rng& rng, bool floor) {
  for (auto& s : x) {
    if (floor) s += kNoiseFloor * rng.normal();
    s = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0) / 32768.0;
  }
  return AudioClip{std::move(x), sample_rate};
}

double ramp(double t, double start, double end, double width) {
  if (t <= start || t >= end) return 0.0;
  double g = std::min({1.0, (t - start) / width, (end - t) / width});
  return 0.5 - 0.5 * std::cos(std::numbers::pi * g);
}

std::array<double, 3> three_harmonics(Rng& rng) {
  std::array<double, 3> a{1.0, rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.4)};
  double sum = a[0] + a[1] + a[2];
  for (auto& v : a) v /= sum;
  return a;
}

}  // namespace

std::string_view to_string(SynthClass c) {
  switch (c) {
    case SynthClass::Prolongation: return "prolongation";
    case SynthClass::Repetition: return "repetition";
    case SynthClass::Fluent: return "fluent";
    case SynthClass::Noise: return "noise";
  }
  return "unknown";
}

AudioClip gen_prolongation_clip(std::uint64_t seed, double seconds, int sample_rate) {
  check_args(seconds, sample_rate);
  Rng rng(seed);
  const std::size_t n = n_samples(seconds, sample_rate);
  const double sr = sample_rate;
  const double f0 = rng.uniform(90.0, 250.0);
  const double amp = rng.uniform(0.2, 0.4);
  const auto h = three_harmonics(rng);
  std::array<double, 3> phase{rng.uniform(0, kTwoPi), rng.uniform(0, kTwoPi), rng.uniform(0, kTwoPi)};
  // slow level drift
  const double j1f = rng.uniform(0.3, 1.2), j1p = rng.uniform(0, kTwoPi);
  const double j2f = rng.uniform(1.2, 2.5), j2p = rng.uniform(0, kTwoPi);
  const double drift_f = rng.uniform(0.2, 0.8), drift_p = rng.uniform(0, kTwoPi);
  const double t_on = rng.uniform(0.0, 0.05) * seconds;
  const double t_off = seconds * (1.0 - rng.uniform(0.0, 0.05));

  std::vector<double> x(n, 0.0);
  double base = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = i / sr;
    double f = f0 * (1.0 + 0.003 * std::sin(kTwoPi * drift_f * t + drift_p));
    base += kTwoPi * f / sr;
    double level = 1.0 + 0.08 * std::sin(kTwoPi * j1f * t + j1p) + 0.05 * std::sin(kTwoPi * j2f * t + j2p);
    double env = amp * level * ramp(t, t_on, t_off, 0.02);
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += h[k] * std::sin((k + 1) * base + phase[k]);
    x[i] = env * s;
  }
  return finish(std::move(x), sample_rate, rng, true);
}

AudioClip gen_repetition_clip(std::uint64_t seed, double seconds, int sample_rate) {
  check_args(seconds, sample_rate);
  Rng rng(seed);
  const std::size_t n = n_samples(seconds, sample_rate);
  const double sr = sample_rate;
  const double burst_s = rng.uniform(0.060, 0.150);
  const double gap_s = std::min(rng.uniform(0.050, 0.120), 0.240 - burst_s);
  const auto burst_len = static_cast<std::size_t>(std::llround(burst_s * sr));
  const auto period = static_cast<std::size_t>(std::llround((burst_s + gap_s) * sr));

  // One burst, reused verbatim.
  const double f0 = rng.uniform(100.0, 250.0);
  const double amp = rng.uniform(0.25, 0.45);
  const auto h = three_harmonics(rng);
  const double glide = rng.uniform(-0.1, 0.1);
  std::vector<double> burst(burst_len);
  double base = 0.0;
  for (std::size_t i = 0; i < burst_len; ++i) {
    double u = static_cast<double>(i) / burst_len;
    base += kTwoPi * f0 * (1.0 + glide * u) / sr;
    double env = amp * (0.5 - 0.5 * std::cos(kTwoPi * u));
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += h[k] * std::sin((k + 1) * base);
    burst[i] = env * s;
  }

  std::vector<double> x(n, 0.0);
  auto start = static_cast<std::size_t>(rng.uniform() * static_cast<double>(period));
  for (std::size_t b = start; b < n; b += period) {
    for (std::size_t i = 0; i < burst_len && b + i < n; ++i) x[b + i] = burst[i];
  }
  return finish(std::move(x), sample_rate, rng, true);
}

namespace {

struct Unit {
  double start = 0.0;
  double end = 0.0;
  bool voiced = true;
  double amp = 0.0;
  double f0_start = 0.0;
  double f0_end = 0.0;
  std::array<double, 5> weights{};
};

struct Voice {
  double amp = 0.0;
  double f0 = 0.0;
  std::array<double, 5> weights{};
};

Voice voice_at(const Unit& u, double t) {
  double frac = std::clamp((t - u.start) / (u.end - u.start), 0.0, 1.0);
  Voice v;
  v.f0 = u.f0_start + (u.f0_end - u.f0_start) * frac;
  v.weights = u.weights;
  v.amp = u.voiced ? u.amp * (0.75 + 0.25 * std::sin(std::numbers::pi * frac)) : 0.0;
  return v;
}

Voice mix(const Voice& a, const Voice& b, double w) {
  Voice v;
  v.amp = a.amp + (b.amp - a.amp) * w;
  v.f0 = a.f0 + (b.f0 - a.f0) * w;
  for (std::size_t k = 0; k < v.weights.size(); ++k) v.weights[k] = a.weights[k] + (b.weights[k] - a.weights[k]) * w;
  return v;
}

}  // namespace

AudioClip gen_fluent_clip(std::uint64_t seed, double seconds, int sample_rate) {
  check_args(seconds, sample_rate);
  Rng rng(seed);
  const std::size_t n = n_samples(seconds, sample_rate);
  const double sr = sample_rate;

  std::vector<Unit> units;
  double t = 0.0;
  while (t < seconds + 0.4) {
    Unit u;
    u.start = t;
    u.end = t + rng.uniform(0.150, 0.350);
    u.amp = rng.uniform(0.15, 0.4);
    u.f0_start = rng.uniform(90.0, 260.0);
    u.f0_end = u.f0_start * rng.uniform(0.8, 1.2);
    // crude formant: a bump over the harmonic series
    double centre = rng.uniform(0.0, 4.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < u.weights.size(); ++k) {
      double d = (static_cast<double>(k) - centre) / 1.2;
      u.weights[k] = std::exp(-0.5 * d * d) + rng.uniform(0.0, 0.2);
      sum += u.weights[k];
    }
    for (auto& w : u.weights) w /= sum;
    units.push_back(u);
    t = u.end;
    if (rng.uniform() < 0.25) {
      Unit p = u;
      p.voiced = false;
      p.start = t;
      p.end = t + rng.uniform(0.060, 0.200);
      p.f0_start = p.f0_end = u.f0_end;
      units.push_back(p);
      t = p.end;
    }
  }

  constexpr double kBlend = 0.010;
  std::vector<double> x(n, 0.0);
  std::array<double, 5> phase{};
  std::size_t ui = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ti = i / sr;
    while (ti >= units[ui].end) ++ui;
    Voice v = voice_at(units[ui], ti);
    if (ui + 1 < units.size() && ti > units[ui].end - kBlend) {
      double w = 0.5 * (ti - (units[ui].end - kBlend)) / kBlend;
      v = mix(v, voice_at(units[ui + 1], ti), w);
    } else if (ui > 0 && ti < units[ui].start + kBlend) {
      double w = 0.5 + 0.5 * (ti - units[ui].start) / kBlend;
      v = mix(voice_at(units[ui - 1], ti), v, w);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < phase.size(); ++k) {
      phase[k] += kTwoPi * (k + 1) * v.f0 / sr;
      if (phase[k] > kTwoPi) phase[k] -= kTwoPi;
      s += v.weights[k] * std::sin(phase[k]);
    }
    x[i] = v.amp * s;
  }
  return finish(std::move(x), sample_rate, rng, true);
}

AudioClip gen_noise_clip(std::uint64_t seed, double seconds, int sample_rate) {
  check_args(seconds, sample_rate);
  Rng rng(seed);
  const std::size_t n = n_samples(seconds, sample_rate);
  const double pole = rng.uniform(0.3, 0.9);
  const double target = rng.uniform(0.05, 0.15);
  std::vector<double> x(n);
  double y = 0.0, energy = 0.0;
  for (auto& s : x) {
    y = pole * y + (1.0 - pole) * rng.normal();
    s = y;
    energy += y * y;
  }
  double gain = energy > 0.0 ? target / std::sqrt(energy / static_cast<double>(n)) : 0.0;
  for (auto& s : x) s = std::clamp(s * gain, -0.99, 0.99);
  return finish(std::move(x), sample_rate, rng, false);
}

AudioClip gen_clip(SynthClass c, std::uint64_t seed, double seconds, int sample_rate) {
  switch (c) {
    case SynthClass::Prolongation: return gen_prolongation_clip(seed, seconds, sample_rate);
    case SynthClass::Repetition: return gen_repetition_clip(seed, seconds, sample_rate);
    case SynthClass::Fluent: return gen_fluent_clip(seed, seconds, sample_rate);
    case SynthClass::Noise: return gen_noise_clip(seed, seconds, sample_rate);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown synth class");
}

double spectral_flux(const AudioClip& clip) {
  constexpr std::size_t kFft = 1024, kHop = 512;
  if (clip.samples.size() < kFft) throw Error(ErrorCode::SegmentTooShort, "clip shorter than one frame");
  Matrix p = stft_power(clip.samples, kFft, kHop, false);
  if (p.cols < 4) return 0.0;
  double delta = 0.0, power = 0.0;
  std::size_t frames = 0;
  for (std::size_t t = 2; t + 1 < p.cols; ++t) {
    for (std::size_t k = 0; k < p.rows; ++k) {
      delta += std::abs(p(k, t) - p(k, t - 1));
      power += p(k, t);
    }
    ++frames;
  }
  if (power <= 0.0) return 0.0;
  return delta / power;  // both sums run over the same frames
}

double envelope_autocorr_peak(const AudioClip& clip) {
  const auto frame = static_cast<std::size_t>(clip.sample_rate / 100);
  const std::size_t m = frame ? clip.samples.size() / frame : 0;
  if (m < 8) return 0.0;
  std::vector<double> env(m);
  for (std::size_t f = 0; f < m; ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < frame; ++i) e += clip.samples[f * frame + i] * clip.samples[f * frame + i];
    env[f] = std::sqrt(e / frame);
  }
  double mean = 0.0;
  for (double e : env) mean += e;
  mean /= m;
  for (auto& e : env) e -= mean;

  const std::size_t max_lag = std::min<std::size_t>(50, m - 2);
  std::vector<double> r(max_lag + 2, 0.0);
  for (std::size_t lag = 0; lag < r.size(); ++lag) {
    for (std::size_t t = 0; t + lag < m; ++t) r[lag] += env[t] * env[t + lag];
  }
  const double r0 = r[0];
  if (r0 <= 1e-20) return 0.0;
  for (auto& v : r) v /= r0;

  std::size_t first_min = 1;
  while (first_min < max_lag && r[first_min + 1] < r[first_min]) ++first_min;
  double best = 0.0;
  for (std::size_t lag = std::max<std::size_t>(first_min, 5); lag <= max_lag; ++lag) {
    if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) best = std::max(best, r[lag]);
  }
  return best;
}

double rms(const AudioClip& clip) {
  if (clip.samples.empty()) return 0.0;
  double e = 0.0;
  for (double s : clip.samples) e += s * s;
  return std::sqrt(e / static_cast<double>(clip.samples.size()));
}

std::size_t zero_crossings(const AudioClip& clip) {
  std::size_t count = 0;
  for (std::size_t i = 1; i < clip.samples.size(); ++i) {
    if ((clip.samples[i - 1] < 0.0) != (clip.samples[i] < 0.0)) ++count;
  }
  return count;
}

void CorpusSpec::validate() const {
  if (n_clips < 4) throw Error(ErrorCode::InvalidArgument, "corpus needs at least 4 clips");
  if (!(ratio_stutter > 0.0 && ratio_stutter < 1.0))
    throw Error(ErrorCode::InvalidArgument, "stutter ratio must lie in (0, 1)");
  if (!(clip_seconds >= 1.0)) throw Error(ErrorCode::InvalidArgument, "clip length must be at least 1 s");
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "noise fraction must lie in [0, 1)");
}

CorpusCounts corpus_counts(const CorpusSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_clips;
  auto stutter = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.ratio_stutter));
  stutter = std::clamp<std::size_t>(stutter, 2, n - 2);
  CorpusCounts c;
  c.prolongation = (stutter + 1) / 2;
  c.repetition = stutter - c.prolongation;
  const std::size_t rest = n - stutter;
  auto noise = static_cast<std::size_t>(std::llround(static_cast<double>(rest) * spec.noise_fraction));
  c.noise = std::clamp<std::size_t>(noise, 1, rest - 1);
  c.fluent = rest - c.noise;
  return c;
}

std::filesystem::path build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  const CorpusCounts counts = corpus_counts(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  struct Plan {
    SynthClass cls;
    std::size_t count;
    int label_p;
    int label_r;
  };
  const std::array<Plan, 4> plan{{
      {SynthClass::Prolongation, counts.prolongation, 1, 0},
      {SynthClass::Repetition, counts.repetition, 0, 1},
      {SynthClass::Fluent, counts.fluent, 0, 0},
      {SynthClass::Noise, counts.noise, 0, 0},
  }};

  std::vector<ManifestEntry> entries;
  entries.reserve(spec.n_clips);
  for (const auto& p : plan) {
    for (std::size_t i = 0; i < p.count; ++i) {
      auto cls_id = static_cast<std::uint64_t>(p.cls);
      std::uint64_t clip_seed = splitmix(splitmix(spec.seed) ^ (cls_id << 40) ^ i);
      AudioClip clip = gen_clip(p.cls, clip_seed, spec.clip_seconds);
      std::string name = std::string(to_string(p.cls)) + "_" + std::to_string(i) + ".wav";
      write_wav_file(out_dir / name, clip);
      entries.push_back({name, p.label_p, p.label_r});
    }
  }
  auto manifest = out_dir / "manifest.csv";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace stutter
