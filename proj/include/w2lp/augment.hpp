// include/w2lp/augment.hpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Additive noise and time stretch, the two classic waveform augmentations.

#pragma once

#include <random>

#include "w2lp/audio.hpp"

namespace w2lp::augment {

struct AugmentConfig {
  bool noise_enabled = false;
  // dB relative to digital full scale.
  double noise_db_lo = -90.0;
  double noise_db_hi = -60.0;
  bool stretch_enabled = false;
  // Rate is drawn from [1 - s, 1 + s].
  double stretch_factor = 0.0;

  bool any_enabled() const { return noise_enabled || stretch_enabled; }
  void Validate() const;
};

// Peak amplitude of uniform noise at `db` dBFS.
double NoiseAmplitude(double db);

audio::Waveform AddNoise(const audio::Waveform& wave, double lo_db,
                         double hi_db, std::mt19937_64& rng);

// Deterministic stretch at a fixed rate: N' = round(N / rate), linear
// interpolation at i * (N - 1) / (N' - 1).
audio::Waveform StretchAtRate(const audio::Waveform& wave, double rate);

audio::Waveform TimeStretch(const audio::Waveform& wave, double factor,
                            std::mt19937_64& rng);

// Stretch, then noise, each only when enabled.
audio::Waveform AugmentWaveform(const audio::Waveform& wave,
                                const AugmentConfig& cfg,
                                std::mt19937_64& rng);

}  // namespace w2lp::augment
