// src/augment.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/augment.hpp"

#include <algorithm>
#include <cmath>

#include "w2lp/error.hpp"

namespace w2lp::augment {

void AugmentConfig::Validate() const {
  if (!(noise_db_lo <= noise_db_hi) || noise_db_hi > 0.0) {
    Fail(ErrorKind::kInvalidArgument,
         "noise range must satisfy lo <= hi <= 0 dB");
  }
  if (!(stretch_factor >= 0.0 && stretch_factor < 1.0)) {
    Fail(ErrorKind::kInvalidArgument, "stretch factor must be in [0, 1)");
  }
}

double NoiseAmplitude(double db) { return std::pow(10.0, db / 20.0); }

audio::Waveform AddNoise(const audio::Waveform& wave, double lo_db,
                         double hi_db, std::mt19937_64& rng) {
  if (!(lo_db <= hi_db)) {
    Fail(ErrorKind::kInvalidArgument, "noise range with lo > hi");
  }
  std::uniform_real_distribution<double> level(lo_db, hi_db);
  const double amp = NoiseAmplitude(lo_db == hi_db ? lo_db : level(rng));
  std::uniform_real_distribution<double> noise(-amp, amp);
  audio::Waveform out = wave;
  for (double& s : out.samples) s = std::clamp(s + noise(rng), -1.0, 1.0);
  return out;
}

audio::Waveform StretchAtRate(const audio::Waveform& wave, double rate) {
  const std::size_t n = wave.samples.size();
  if (n < 2) {
    Fail(ErrorKind::kInvalidArgument, "time stretch needs >= 2 samples");
  }
  if (!(rate > 0.0)) Fail(ErrorKind::kInvalidArgument, "rate must be > 0");
  if (rate == 1.0) return wave;

  const auto n_out = static_cast<std::size_t>(
      std::max(1.0, std::round(static_cast<double>(n) / rate)));
  audio::Waveform out;
  out.sample_rate_hz = wave.sample_rate_hz;
  out.samples.resize(n_out);
  if (n_out == 1) {
    out.samples[0] = wave.samples[0];
    return out;
  }
  const double step = static_cast<double>(n - 1) / static_cast<double>(n_out - 1);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = i * step;
    const auto lo = std::min(static_cast<std::size_t>(pos), n - 2);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] =
        wave.samples[lo] + frac * (wave.samples[lo + 1] - wave.samples[lo]);
  }
  return out;
}

audio::Waveform TimeStretch(const audio::Waveform& wave, double factor,
                            std::mt19937_64& rng) {
  if (!(factor >= 0.0 && factor < 1.0)) {
    Fail(ErrorKind::kInvalidArgument, "stretch factor must be in [0, 1)");
  }
  if (factor == 0.0) return StretchAtRate(wave, 1.0);
  std::uniform_real_distribution<double> rate(1.0 - factor, 1.0 + factor);
  return StretchAtRate(wave, rate(rng));
}

audio::Waveform AugmentWaveform(const audio::Waveform& wave,
                                const AugmentConfig& cfg,
                                std::mt19937_64& rng) {
  audio::Waveform out = wave;
  if (cfg.stretch_enabled) out = TimeStretch(out, cfg.stretch_factor, rng);
  if (cfg.noise_enabled) {
    out = AddNoise(out, cfg.noise_db_lo, cfg.noise_db_hi, rng);
  }
  return out;
}

}  // namespace w2lp::augment
