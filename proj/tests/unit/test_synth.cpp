// tests/unit/test_synth.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "w2lp/audio.hpp"
#include "w2lp/synth.hpp"

namespace w2lp::synth {
namespace {

using w2lp::testing::TempDir;

TEST(Synth, SingleCharacterIsOneSegment) {
  const auto w = Synthesize("a", DefaultVoices()[0], {1.0});
  EXPECT_EQ(w.samples.size(), 1280u);
  EXPECT_EQ(w.sample_rate_hz, 16000);
}

TEST(Synth, Deterministic) {
  const auto a = Synthesize("hello world", DefaultVoices()[1], {1.05});
  const auto b = Synthesize("hello world", DefaultVoices()[1], {1.05});
  EXPECT_EQ(a.samples, b.samples);
}

TEST(Synth, LengthIsSumOfRoundedSegments) {
  const std::string text = "the quick fox";
  const auto v = DefaultVoices()[0];
  const auto one = Synthesize(text, v, {1.0});
  const auto two = Synthesize(text, v, {2.0});
  EXPECT_EQ(one.samples.size(), text.size() * 1280);
  EXPECT_EQ(two.samples.size(), text.size() * 640);
  const auto odd = Synthesize(text, v, {1.1});
  EXPECT_EQ(odd.samples.size(), text.size() * static_cast<std::size_t>(std::lround(1280 / 1.1)));
}

TEST(Synth, DurationDecreasesWithTempo) {
  const auto v = DefaultVoices()[2];
  std::size_t prev = SIZE_MAX;
  for (double t : {0.5, 0.8, 1.0, 1.05, 1.1, 1.5, 2.0}) {
    const auto n = Synthesize("abc de", v, {t}).samples.size();
    EXPECT_LT(n, prev);
    prev = n;
  }
}

TEST(Synth, SpaceIsSilenceAndAmplitudeBounded) {
  const auto w = Synthesize("a a", DefaultVoices()[0], {1.0});
  // Middle of the space segment, away from crossfades.
  for (std::size_t i = 1280 + 100; i < 2 * 1280 - 100; ++i) EXPECT_EQ(w.samples[i], 0.0);
  for (double s : w.samples) EXPECT_LE(std::abs(s), 0.3 + 1e-12);
}

TEST(Synth, SegmentFrequencyMatchesCharacterIndex) {
  // Count zero crossings in the interior of a single-letter segment.
  const SynthVoice v = DefaultVoices()[1];
  const auto w = Synthesize("k", v, {1.0});
  const double f = v.base_freq_hz + 10 * v.freq_step_hz;
  int crossings = 0;
  for (std::size_t i = 1; i < w.samples.size(); ++i) {
    if ((w.samples[i - 1] < 0) != (w.samples[i] < 0)) ++crossings;
  }
  EXPECT_NEAR(crossings / 2.0, f * 1280 / 16000.0, 1.5);
}

TEST(Synth, RejectsInvalidInput) {
  EXPECT_W2LP_ERROR(Synthesize("", DefaultVoices()[0], {1.0}), ErrorKind::kInvalidArgument);
  EXPECT_W2LP_ERROR(Synthesize("a!b", DefaultVoices()[0], {1.0}), ErrorKind::kCharset);
  EXPECT_W2LP_ERROR(Synthesize("ab", DefaultVoices()[0], {3.0}), ErrorKind::kInvalidArgument);
  SynthVoice alias{0, 7000.0, 100.0};
  EXPECT_W2LP_ERROR(alias.Validate(16000), ErrorKind::kInvalidArgument);
}

TEST(Manifest, MultiplicityAndOrder) {
  TempDir dir;
  SynthRequest req;
  for (int i = 0; i < 10; ++i) req.transcripts.push_back("word " + std::string(1, 'a' + i));
  req.voices = DefaultVoices();
  req.tempos = DefaultTempos();
  req.out_dir = dir.path();
  req.seed = 42;
  const auto r = BuildSyntheticManifest(req);
  ASSERT_EQ(r.manifest.size(), 30u);
  ASSERT_EQ(r.voice_assignment.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& u = r.manifest.entries[i];
    EXPECT_EQ(u.transcript, req.transcripts[i / 3]);
    EXPECT_EQ(u.origin, data::Origin::kSynthetic);
    const auto w = audio::ReadWav(u.audio_path);
    EXPECT_NEAR(u.duration_s, w.duration_s(), 1e-6);
    const auto expect = Synthesize(u.transcript, req.voices[r.voice_assignment[i]],
                                   req.tempos[i % 3]);
    ASSERT_EQ(w.samples.size(), expect.samples.size());
    for (std::size_t k = 0; k < w.samples.size(); ++k) {
      EXPECT_EQ(audio::QuantizeSample(expect.samples[k]) / 32768.0, w.samples[k]);
    }
  }
}

TEST(Manifest, SameSeedSameAssignments) {
  TempDir dir;
  SynthRequest req;
  for (int i = 0; i < 40; ++i) req.transcripts.push_back("ab");
  req.voices = DefaultVoices();
  req.tempos = DefaultTempos();
  req.out_dir = dir.path();
  req.seed = 5;
  const auto a = BuildSyntheticManifest(req);
  const auto b = BuildSyntheticManifest(req);
  EXPECT_EQ(a.voice_assignment, b.voice_assignment);
  req.seed = 6;
  EXPECT_NE(BuildSyntheticManifest(req).voice_assignment, a.voice_assignment);
  // All three voices get used on a run this long.
  for (std::size_t v = 0; v < 3; ++v) {
    EXPECT_NE(std::find(a.voice_assignment.begin(), a.voice_assignment.end(), v),
              a.voice_assignment.end());
  }
}

TEST(Manifest, SingleEntry) {
  TempDir dir;
  SynthRequest req{{"hi"}, {DefaultVoices()[0]}, {{1.0}}, dir.path(), 1};
  const auto r = BuildSyntheticManifest(req);
  ASSERT_EQ(r.manifest.size(), 1u);
  EXPECT_EQ(audio::ReadWav(r.manifest.entries[0].audio_path).samples.size(), 2560u);
}

TEST(Manifest, EmptyListsRejected) {
  TempDir dir;
  SynthRequest req{{}, DefaultVoices(), DefaultTempos(), dir.path(), 1};
  EXPECT_W2LP_ERROR(BuildSyntheticManifest(req), ErrorKind::kInvalidArgument);
  req.transcripts = {"ok", ""};
  EXPECT_W2LP_ERROR(BuildSyntheticManifest(req), ErrorKind::kInvalidArgument);
}

}  // namespace
}  // namespace w2lp::synth
