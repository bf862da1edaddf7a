// include/w2lp/audio.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Waveform I/O (16-bit PCM mono RIFF/WAVE) and log-mel featurization.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace w2lp::audio {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct FeatureConfig {
  int sample_rate_hz = 16000;
  int window_samples = 320;
  int hop_samples = 160;
  int fft_size = 512;
  int mel_bins = 64;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-20;

  // Throws Error(kInvalidArgument) when the invariants do not hold.
  void Validate() const;
};

// Row-major T x M matrix, one row per frame.
struct FeatureMatrix {
  std::vector<float> values;
  std::size_t frames = 0;
  std::size_t mel_bins = 0;

  float& at(std::size_t t, std::size_t m) { return values[t * mel_bins + m]; }
  float at(std::size_t t, std::size_t m) const {
    return values[t * mel_bins + m];
  }
  std::span<const float> row(std::size_t t) const {
    return {values.data() + t * mel_bins, mel_bins};
  }
};

Waveform ReadWav(const std::filesystem::path& path);
void WriteWav(const Waveform& wave, const std::filesystem::path& path);

// Quantization used by WriteWav: clamp to [-1, 1], scale by 32768, round half
// away from zero, saturate at 32767.
std::int16_t QuantizeSample(double amplitude);

double HzToMel(double hz);
double MelToHz(double mel);

// Number of frames produced for a signal of `num_samples` samples, 0 when the
// signal is shorter than one window.
std::size_t FrameCount(std::size_t num_samples, int window, int hop);

// mel_bins x (fft_size / 2 + 1) triangular filters, row-major.
std::vector<double> MelFilterbank(const FeatureConfig& cfg);

FeatureMatrix ComputeLogMel(const Waveform& wave, const FeatureConfig& cfg);

// Per-bin mean/variance normalization over time.
FeatureMatrix NormalizeFeatures(const FeatureMatrix& features);

}  // namespace w2lp::audio
