// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "stutter/audio.hpp"
#include "stutter/error.hpp"
#include "stutter/synth.hpp"
#include "stutter/therapy.hpp"
#include "test_support.hpp"

using namespace stutter;
using testing_support::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Synth, FluentFluxWellAboveProlongation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    double fluent = spectral_flux(gen_fluent_clip(seed, 2.0));
    double prolonged = spectral_flux(gen_prolongation_clip(seed, 2.0));
    EXPECT_GE(fluent, 2.0 * prolonged) << "seed " << seed;
  }
}

TEST(Synth, RepetitionIsPeriodic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_GE(envelope_autocorr_peak(gen_repetition_clip(seed, 2.0)), 0.5) << "seed " << seed;
  }
}

TEST(Synth, NoiseIsNotPeriodic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(envelope_autocorr_peak(gen_noise_clip(seed, 3.0)), 0.3) << "seed " << seed;
  }
}

TEST(Synth, LevelsAndActivity) {
  AudioClip silence{std::vector<double>(44100, 0.0), kCanonicalSampleRate};
  for (auto c : {SynthClass::Prolongation, SynthClass::Repetition, SynthClass::Fluent, SynthClass::Noise}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto clip = gen_clip(c, seed, 2.0);
      EXPECT_EQ(clip.samples.size(), 44100u);
      EXPECT_EQ(clip.sample_rate, kCanonicalSampleRate);
      double level = rms(clip);
      EXPECT_GE(level, 0.05) << to_string(c) << " " << seed;
      EXPECT_LE(level, 0.7) << to_string(c) << " " << seed;
      EXPECT_GT(zero_crossings(clip), zero_crossings(silence));
      for (double s : clip.samples) ASSERT_LE(std::abs(s), 1.0);
    }
  }
}

TEST(Synth, SameSeedSameSamples) {
  for (auto c : {SynthClass::Prolongation, SynthClass::Repetition, SynthClass::Fluent, SynthClass::Noise}) {
    EXPECT_EQ(gen_clip(c, 42, 1.0).samples, gen_clip(c, 42, 1.0).samples);
    EXPECT_NE(gen_clip(c, 42, 1.0).samples, gen_clip(c, 43, 1.0).samples);
  }
}

TEST(Synth, WavRoundTripIsExact) {
  TempDir dir("synthwav");
  for (auto c : {SynthClass::Prolongation, SynthClass::Repetition, SynthClass::Fluent, SynthClass::Noise}) {
    auto clip = gen_clip(c, 9, 1.0);
    write_wav_file(dir / "c.wav", clip);
    EXPECT_EQ(read_wav_file(dir / "c.wav").samples, clip.samples) << to_string(c);
  }
}

TEST(Corpus, Counts) {
  CorpusSpec s;
  s.n_clips = 100;
  auto c = corpus_counts(s);
  EXPECT_EQ(c.stutter(), 25u);
  EXPECT_EQ(c.prolongation, 13u);
  EXPECT_EQ(c.repetition, 12u);
  EXPECT_EQ(c.non_stutter(), 75u);
  EXPECT_GE(c.noise, 1u);
  EXPECT_GE(c.fluent, 1u);

  s.ratio_stutter = 0.5;
  c = corpus_counts(s);
  EXPECT_EQ(c.stutter(), 50u);
  EXPECT_EQ(c.non_stutter(), 50u);

  s.n_clips = 200;
  s.ratio_stutter = 0.25;
  c = corpus_counts(s);
  EXPECT_EQ(c.stutter(), 50u);
  EXPECT_EQ(c.non_stutter(), 150u);
}

TEST(Corpus, BadSpec) {
  for (auto mutate : std::vector<void (*)(CorpusSpec&)>{
           [](CorpusSpec& s) { s.n_clips = 3; }, [](CorpusSpec& s) { s.ratio_stutter = 0.0; },
           [](CorpusSpec& s) { s.ratio_stutter = 1.0; }, [](CorpusSpec& s) { s.clip_seconds = 0.5; },
           [](CorpusSpec& s) { s.noise_fraction = 1.0; }}) {
    CorpusSpec s;
    mutate(s);
    try {
      s.validate();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
  }
}

TEST(Corpus, ManifestMatchesFiles) {
  TempDir dir("corpus");
  CorpusSpec s;
  s.n_clips = 20;
  s.seed = 3;
  s.clip_seconds = 1.0;
  auto manifest = build_corpus(s, dir.path());
  auto entries = read_manifest(manifest);
  ASSERT_EQ(entries.size(), 20u);
  std::map<std::pair<int, int>, int> by_label;
  for (const auto& e : entries) {
    ASSERT_TRUE(std::filesystem::exists(e.path)) << e.path;
    ASSERT_TRUE(e.label_prolongation && e.label_repetition);
    by_label[{*e.label_prolongation, *e.label_repetition}]++;
    auto clip = read_wav_file(e.path);
    EXPECT_EQ(clip.samples.size(), 22050u);
  }
  auto c = corpus_counts(s);
  EXPECT_EQ(by_label[std::make_pair(1, 0)], static_cast<int>(c.prolongation));
  EXPECT_EQ(by_label[std::make_pair(0, 1)], static_cast<int>(c.repetition));
  EXPECT_EQ(by_label[std::make_pair(0, 0)], static_cast<int>(c.non_stutter()));
  EXPECT_EQ(by_label.count(std::make_pair(1, 1)), 0u);
}

TEST(Corpus, SameSeedSameBytes) {
  TempDir a("corpus_a"), b("corpus_b");
  CorpusSpec s;
  s.n_clips = 8;
  s.seed = 11;
  s.clip_seconds = 1.0;
  build_corpus(s, a.path());
  build_corpus(s, b.path());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 9u);
}

// Linear boundaries on two summary features separate the four archetypes.
TEST(Synth, ArchetypesAreLinearlySeparable) {
  const SynthClass classes[] = {SynthClass::Prolongation, SynthClass::Repetition, SynthClass::Fluent,
                                SynthClass::Noise};
  auto features = [](const AudioClip& c) {
    return std::vector<double>{std::log(spectral_flux(c)), envelope_autocorr_peak(c)};
  };
  std::vector<std::vector<double>> train_x, test_x;
  std::vector<int> train_c, test_c;
  for (int ci = 0; ci < 4; ++ci) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      auto f = features(gen_clip(classes[ci], seed, 2.0));
      if (seed < 20) {
        train_x.push_back(f);
        train_c.push_back(ci);
      } else {
        test_x.push_back(f);
        test_c.push_back(ci);
      }
    }
  }
  PolynomialKernel linear{1, 1.0, 0.0};
  SmoOptions o;
  o.C = 10.0;
  o.max_passes = 2000;
  // one-vs-one voting
  std::map<std::pair<int, int>, SvmModel> pairwise;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      std::vector<std::vector<double>> x;
      std::vector<int> y;
      for (std::size_t i = 0; i < train_x.size(); ++i) {
        if (train_c[i] != a && train_c[i] != b) continue;
        x.push_back(train_x[i]);
        y.push_back(train_c[i] == b);
      }
      pairwise.emplace(std::make_pair(a, b), smo_train(x, y, linear, o).model);
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    int votes[4] = {0, 0, 0, 0};
    for (const auto& [ab, m] : pairwise) ++votes[m.predict(test_x[i]) ? ab.second : ab.first];
    int best = static_cast<int>(std::max_element(votes, votes + 4) - votes);
    correct += best == test_c[i];
  }
  EXPECT_GE(static_cast<double>(correct) / test_x.size(), 0.85);
}
