// src/synth.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "w2lp/charset.hpp"
#include "w2lp/error.hpp"

namespace w2lp::synth {

void SynthVoice::Validate(int sample_rate_hz) const {
  if (!(base_freq_hz > 0.0)) {
    Fail(ErrorKind::kInvalidArgument, "voice base frequency must be > 0");
  }
  const double top = base_freq_hz + 28.0 * freq_step_hz;
  if (!(top < sample_rate_hz / 2.0) || freq_step_hz < 0.0) {
    Fail(ErrorKind::kInvalidArgument,
         "voice " + std::to_string(voice_id) + " aliases: top frequency " +
             std::to_string(top) + " Hz");
  }
}

void TempoVariant::Validate() const {
  if (!(tempo >= 0.5 && tempo <= 2.0)) {
    Fail(ErrorKind::kInvalidArgument,
         "tempo " + std::to_string(tempo) + " outside [0.5, 2]");
  }
}

std::vector<SynthVoice> DefaultVoices() {
  return {{0, 200.0, 12.0}, {1, 300.0, 12.0}, {2, 400.0, 12.0}};
}

std::vector<TempoVariant> DefaultTempos() { return {{1.00}, {1.05}, {1.10}}; }

std::size_t SegmentLength(const SynthConfig& cfg, const TempoVariant& variant) {
  return static_cast<std::size_t>(
      std::llround(cfg.base_dur_samples / variant.tempo));
}

audio::Waveform Synthesize(std::string_view text, const SynthVoice& voice,
                           const TempoVariant& variant,
                           const SynthConfig& cfg) {
  if (text.empty()) Fail(ErrorKind::kInvalidArgument, "empty transcript");
  Charset::Validate(text);
  voice.Validate(cfg.sample_rate_hz);
  variant.Validate();

  const std::size_t seg = SegmentLength(cfg, variant);
  const std::size_t fade =
      std::min(seg, static_cast<std::size_t>(std::max(cfg.crossfade_samples, 0)));
  const double two_pi_over_sr = 2.0 * std::numbers::pi / cfg.sample_rate_hz;

  // Silence is a zero-frequency, zero-amplitude tone.
  auto tone = [&](char c, std::size_t j) {
    if (c == ' ') return 0.0;
    const double f = voice.base_freq_hz + Charset::Index(c) * voice.freq_step_hz;
    return cfg.amplitude * std::sin(two_pi_over_sr * f * static_cast<double>(j));
  };

  audio::Waveform wave;
  wave.sample_rate_hz = cfg.sample_rate_hz;
  wave.samples.resize(seg * text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    double* out = wave.samples.data() + i * seg;
    for (std::size_t j = 0; j < seg; ++j) {
      double v = tone(text[i], j);
      if (i > 0 && j < fade) {
        // The previous segment keeps sounding and fades out linearly.
        const double r = static_cast<double>(j) / static_cast<double>(fade);
        v = (1.0 - r) * tone(text[i - 1], seg + j) + r * v;
      }
      out[j] = v;
    }
  }
  return wave;
}

SynthResult BuildSyntheticManifest(const SynthRequest& request,
                                   const SynthConfig& cfg) {
  if (request.transcripts.empty() || request.voices.empty() ||
      request.tempos.empty()) {
    Fail(ErrorKind::kInvalidArgument,
         "synthesis needs at least one transcript, voice and tempo");
  }
  for (std::size_t i = 0; i < request.transcripts.size(); ++i) {
    if (request.transcripts[i].empty()) {
      Fail(ErrorKind::kInvalidArgument,
           "empty transcript at index " + std::to_string(i));
    }
    Charset::Validate(request.transcripts[i]);
  }
  for (const auto& v : request.voices) v.Validate(cfg.sample_rate_hz);
  for (const auto& t : request.tempos) t.Validate();

  std::error_code ec;
  std::filesystem::create_directories(request.out_dir, ec);
  if (ec) {
    Fail(ErrorKind::kIo, "cannot create " + request.out_dir.string() + ": " +
                             ec.message());
  }

  const std::size_t n_tempo = request.tempos.size();
  const std::size_t total = request.transcripts.size() * n_tempo;

  SynthResult result;
  result.voice_assignment.resize(total);
  result.manifest.entries.resize(total);
  std::mt19937_64 rng(request.seed);
  std::uniform_int_distribution<std::size_t> pick(0, request.voices.size() - 1);
  for (std::size_t e = 0; e < total; ++e) result.voice_assignment[e] = pick(rng);

  std::vector<std::string> errors(total);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t e = 0; e < total; ++e) {
    const std::size_t ti = e / n_tempo, vi = e % n_tempo;
    char name[96];
    std::snprintf(name, sizeof(name), "%s_%05zu_t%zu.wav",
                  request.prefix.c_str(), ti, vi);
    try {
      const auto wave =
          Synthesize(request.transcripts[ti],
                     request.voices[result.voice_assignment[e]],
                     request.tempos[vi], cfg);
      audio::WriteWav(wave, request.out_dir / name);
      auto& utt = result.manifest.entries[e];
      utt.audio_path = (request.out_dir / name).string();
      utt.transcript = request.transcripts[ti];
      utt.origin = request.origin;
      utt.duration_s = wave.duration_s();
    } catch (const std::exception& ex) {
      errors[e] = ex.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) Fail(ErrorKind::kIo, err);
  }
  return result;
}

std::vector<std::string> LoadTranscripts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open transcripts file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace w2lp::synth
