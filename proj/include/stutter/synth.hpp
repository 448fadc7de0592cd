// SPDX-License-Identifier: Apache-2.0
//
// Synthetic stand-ins for stuttered and fluent speech. The signals are
// engineered archetypes, not voice imitations:
//   prolongation  one sustained harmonic tone with slow amplitude drift
//   repetition    one short voiced burst repeated at a fixed period
//   fluent        syllable-like voiced units with changing pitch and timbre
//   noise         shaped broadband noise at constant level
#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "stutter/audio.hpp"

namespace stutter {

enum class SynthClass { Prolongation, Repetition, Fluent, Noise };

std::string_view to_string(SynthClass c);

AudioClip gen_prolongation_clip(std::uint64_t seed, double seconds, int sample_rate = kCanonicalSampleRate);
AudioClip gen_repetition_clip(std::uint64_t seed, double seconds, int sample_rate = kCanonicalSampleRate);
AudioClip gen_fluent_clip(std::uint64_t seed, double seconds, int sample_rate = kCanonicalSampleRate);
AudioClip gen_noise_clip(std::uint64_t seed, double seconds, int sample_rate = kCanonicalSampleRate);
AudioClip gen_clip(SynthClass c, std::uint64_t seed, double seconds, int sample_rate = kCanonicalSampleRate);

/// Mean L1 change between consecutive power spectra (interior frames),
/// divided by the mean frame power so it does not depend on level.
double spectral_flux(const AudioClip& clip);

/// Largest secondary peak of the normalized autocorrelation of the
/// mean-removed 10 ms RMS envelope, searched over lags 50-500 ms after the
/// first local minimum. 0 when there is none.
double envelope_autocorr_peak(const AudioClip& clip);

double rms(const AudioClip& clip);
std::size_t zero_crossings(const AudioClip& clip);

struct CorpusSpec {
  std::size_t n_clips = 200;
  double ratio_stutter = 0.25;
  std::uint64_t seed = 0;
  double clip_seconds = 2.0;
  /// Share of the non-stutter clips that are noise-only.
  double noise_fraction = 0.2;

  void validate() const;
};

struct CorpusCounts {
  std::size_t prolongation = 0;
  std::size_t repetition = 0;
  std::size_t fluent = 0;
  std::size_t noise = 0;

  std::size_t stutter() const { return prolongation + repetition; }
  std::size_t non_stutter() const { return fluent + noise; }
};

/// Stutter clips = round(n * ratio) (kept within [2, n - 2] so every class
/// appears), split with the odd clip going to prolongation.
CorpusCounts corpus_counts(const CorpusSpec& spec);

/// Writes `{class}_{index}.wav` files and `manifest.csv` into `out_dir`;
/// returns the manifest path.
std::filesystem::path build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

}  // namespace stutter
