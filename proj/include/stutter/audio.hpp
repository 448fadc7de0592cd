// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stutter {

/// Rate every recording is resampled to before feature extraction.
/// floor(22050 / 512) + 1 == 44 analysis frames per 1-second segment.
inline constexpr int kCanonicalSampleRate = 22050;

/// Mono waveform with amplitudes in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// One second of audio cut from a clip. `samples.size() == sample_rate`
/// always; `valid_length` counts the samples taken from the source before
/// zero padding.
struct Segment {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;
  std::size_t origin_offset = 0;
  std::size_t valid_length = 0;
};

/// Decodes a RIFF/WAVE byte stream (PCM 8/16/24/32-bit integer or 32-bit
/// float, one or two channels). Stereo is averaged down to mono.
AudioClip parse_wav(std::span<const std::uint8_t> bytes);

/// Encodes a clip as 16-bit mono PCM with a canonical 44-byte header.
std::vector<std::uint8_t> write_wav(const AudioClip& clip);

AudioClip read_wav_file(const std::filesystem::path& path);
void write_wav_file(const std::filesystem::path& path, const AudioClip& clip);

/// Linear-interpolation resampler. Output length is
/// round(n * target_rate / sample_rate).
AudioClip resample(const AudioClip& clip, int target_rate);

/// Tiles the clip into consecutive non-overlapping 1-second segments. A
/// trailing partial window of at least half a second is zero-padded and
/// kept; a shorter one is dropped.
std::vector<Segment> segment(const AudioClip& clip);

/// One row of an ingestion manifest. Missing labels (`NA`) are empty.
struct ManifestEntry {
  std::filesystem::path path;
  std::optional<int> label_prolongation;
  std::optional<int> label_repetition;
};

/// Reads a `path,label_prolongation,label_repetition` CSV. Relative audio
/// paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

void write_manifest(const std::filesystem::path& manifest,
                    const std::vector<ManifestEntry>& entries);

}  // namespace stutter
