// include/w2lp/synth.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic toy text-to-speech. Every character is a sine segment whose
// pitch encodes the character index, every voice shifts the pitch range, and
// a tempo variant shortens or lengthens all segments.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "w2lp/audio.hpp"
#include "w2lp/dataset.hpp"

namespace w2lp::synth {

struct SynthVoice {
  int voice_id = 0;
  double base_freq_hz = 200.0;
  double freq_step_hz = 12.0;

  void Validate(int sample_rate_hz) const;
};

struct TempoVariant {
  double tempo = 1.0;

  void Validate() const;
};

struct SynthConfig {
  int sample_rate_hz = 16000;
  // 80 ms at 16 kHz.
  int base_dur_samples = 1280;
  // 5 ms at 16 kHz.
  int crossfade_samples = 80;
  double amplitude = 0.3;
};

// Voices 0..2 at 200/300/400 Hz base, 12 Hz per character index.
std::vector<SynthVoice> DefaultVoices();
// Tempi 1.00/1.05/1.10, the faster-audio analog of decreasing prenet dropout.
std::vector<TempoVariant> DefaultTempos();

std::size_t SegmentLength(const SynthConfig& cfg, const TempoVariant& variant);

audio::Waveform Synthesize(std::string_view text, const SynthVoice& voice,
                           const TempoVariant& variant,
                           const SynthConfig& cfg = {});

struct SynthRequest {
  std::vector<std::string> transcripts;
  std::vector<SynthVoice> voices;
  std::vector<TempoVariant> tempos;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  data::Origin origin = data::Origin::kSynthetic;
  // File name prefix, so several pools can share one directory.
  std::string prefix = "syn";
};

struct SynthResult {
  data::Manifest manifest;
  // Voice index (into SynthRequest::voices) per manifest entry.
  std::vector<std::size_t> voice_assignment;
};

// One entry per transcript x tempo, transcript-major. Voices are drawn
// uniformly from the seeded generator in that order; synthesis itself runs in
// parallel. Entry paths are out_dir / file name.
SynthResult BuildSyntheticManifest(const SynthRequest& request,
                                   const SynthConfig& cfg = {});

// Reads one transcript per line, skipping blank lines.
std::vector<std::string> LoadTranscripts(const std::filesystem::path& path);

}  // namespace w2lp::synth
