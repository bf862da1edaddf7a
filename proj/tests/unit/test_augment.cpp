// tests/unit/test_augment.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "w2lp/augment.hpp"
#include "w2lp/synth.hpp"

namespace w2lp::augment {
namespace {

audio::Waveform Ramp(std::size_t n) {
  audio::Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = 0.5 * std::sin(0.01 * i);
  return w;
}

audio::Waveform Constant(std::size_t n, double v) {
  audio::Waveform w;
  w.samples.assign(n, v);
  return w;
}

TEST(Noise, AmplitudeAtMinus90Db) {
  EXPECT_NEAR(NoiseAmplitude(-90.0), 3.1623e-5, 1e-9);
  EXPECT_DOUBLE_EQ(NoiseAmplitude(0.0), 1.0);
  EXPECT_NEAR(NoiseAmplitude(-20.0), 0.1, 1e-15);
}

TEST(Noise, FixedLevelBoundsPerturbation) {
  const auto in = Ramp(5000);
  std::mt19937_64 rng(3);
  const auto out = AddNoise(in, -90.0, -90.0, rng);
  double max_dev = 0.0;
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    max_dev = std::max(max_dev, std::abs(out.samples[i] - in.samples[i]));
  }
  EXPECT_LE(max_dev, std::pow(10.0, -4.5) + 1e-15);
  EXPECT_GT(max_dev, 0.5 * std::pow(10.0, -4.5));
}

TEST(Noise, VanishingLevel) {
  const auto in = Ramp(2000);
  std::mt19937_64 rng(1);
  const auto out = AddNoise(in, -200.0, -200.0, rng);
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    EXPECT_LE(std::abs(out.samples[i] - in.samples[i]), 1e-10);
  }
}

TEST(Noise, SameSeedSameOutput) {
  const auto in = Ramp(1000);
  std::mt19937_64 a(99), b(99), c(100);
  const auto x = AddNoise(in, -90, -60, a);
  EXPECT_EQ(x.samples, AddNoise(in, -90, -60, b).samples);
  EXPECT_NE(x.samples, AddNoise(in, -90, -60, c).samples);
}

TEST(Noise, OutputClamped) {
  const auto in = Constant(1000, 1.0);
  std::mt19937_64 rng(5);
  for (double s : AddNoise(in, -1.0, 0.0, rng).samples) {
    EXPECT_LE(s, 1.0);
    EXPECT_GE(s, -1.0);
  }
}

TEST(Noise, ZeroMean) {
  // Uniform on [-a, a] has sigma a / sqrt(3).
  constexpr std::size_t n = 1'000'000;
  const auto in = Constant(n, 0.0);
  std::mt19937_64 rng(11);
  const auto out = AddNoise(in, -40.0, -40.0, rng);
  double sum = 0.0;
  for (double s : out.samples) sum += s;
  const double a = NoiseAmplitude(-40.0);
  EXPECT_LE(std::abs(sum / n), 3.0 * (a / std::sqrt(3.0)) / std::sqrt(double(n)));
}

TEST(Noise, RejectsInvertedRange) {
  std::mt19937_64 rng(1);
  EXPECT_W2LP_ERROR(AddNoise(Ramp(10), -60, -90, rng), ErrorKind::kInvalidArgument);
}

TEST(Stretch, RateTwoHalvesLength) {
  EXPECT_EQ(StretchAtRate(Ramp(1000), 2.0).samples.size(), 500u);
  EXPECT_EQ(StretchAtRate(Ramp(1000), 0.5).samples.size(), 2000u);
}

TEST(Stretch, EndpointsPreservedAndInterpolated) {
  audio::Waveform w;
  w.samples = {0.0, 1.0, 2.0, 3.0, 4.0};
  // N' = round(5 / 0.625) = 8, positions i * 4 / 7.
  const auto out = StretchAtRate(w, 0.625);
  ASSERT_EQ(out.samples.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out.samples[i], i * 4.0 / 7.0, 1e-12);
}

TEST(Stretch, ConstantStaysConstant) {
  const auto in = Constant(777, 0.25);
  for (double r : {0.5, 0.9, 1.0, 1.1, 1.7}) {
    for (double s : StretchAtRate(in, r).samples) EXPECT_DOUBLE_EQ(s, 0.25);
  }
}

TEST(Stretch, ZeroFactorIsIdentity) {
  const auto in = Ramp(321);
  std::mt19937_64 rng(2);
  EXPECT_EQ(TimeStretch(in, 0.0, rng).samples, in.samples);
}

TEST(Stretch, LengthBound) {
  const std::size_t n = 4321;
  for (double s : {0.05, 0.1, 0.3}) {
    const auto lo = static_cast<std::size_t>(std::lround(n / (1 + s)));
    const auto hi = static_cast<std::size_t>(std::lround(n / (1 - s)));
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      const auto len = TimeStretch(Ramp(n), s, rng).samples.size();
      EXPECT_GE(len, lo);
      EXPECT_LE(len, hi);
    }
  }
}

TEST(Stretch, Errors) {
  std::mt19937_64 rng(1);
  EXPECT_W2LP_ERROR(StretchAtRate(Ramp(1), 1.1), ErrorKind::kInvalidArgument);
  EXPECT_W2LP_ERROR(StretchAtRate(Ramp(10), 0.0), ErrorKind::kInvalidArgument);
  EXPECT_W2LP_ERROR(TimeStretch(Ramp(10), 1.0, rng), ErrorKind::kInvalidArgument);
  EXPECT_W2LP_ERROR(TimeStretch(Ramp(10), -0.1, rng), ErrorKind::kInvalidArgument);
}

TEST(Augment, DisabledIsIdentity) {
  const auto in = Ramp(1000);
  std::mt19937_64 rng(1);
  EXPECT_EQ(AugmentWaveform(in, AugmentConfig{}, rng).samples, in.samples);
}

TEST(Augment, TableConfigChangesSignalWithinLengthBound) {
  AugmentConfig cfg;
  cfg.noise_enabled = true;
  cfg.noise_db_lo = -90;
  cfg.noise_db_hi = -60;
  cfg.stretch_enabled = true;
  cfg.stretch_factor = 0.05;
  cfg.Validate();
  const auto in = synth::Synthesize("hello world", synth::DefaultVoices()[0], {1.0});
  const double n = static_cast<double>(in.samples.size());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto out = AugmentWaveform(in, cfg, rng);
    EXPECT_NE(out.samples, in.samples);
    EXPECT_GE(static_cast<double>(out.samples.size()), std::floor(n / 1.05));
    EXPECT_LE(static_cast<double>(out.samples.size()), std::ceil(n / 0.95));
  }
}

TEST(Augment, Deterministic) {
  AugmentConfig cfg;
  cfg.noise_enabled = true;
  cfg.stretch_enabled = true;
  cfg.stretch_factor = 0.1;
  const auto in = Ramp(3000);
  std::mt19937_64 a(42), b(42);
  EXPECT_EQ(AugmentWaveform(in, cfg, a).samples, AugmentWaveform(in, cfg, b).samples);
}

TEST(AugmentConfig, Validation) {
  AugmentConfig cfg;
  cfg.Validate();
  cfg.noise_db_lo = -50;
  cfg.noise_db_hi = -60;
  EXPECT_W2LP_ERROR(cfg.Validate(), ErrorKind::kInvalidArgument);
  cfg = {};
  cfg.noise_db_hi = 1.0;
  EXPECT_W2LP_ERROR(cfg.Validate(), ErrorKind::kInvalidArgument);
  cfg = {};
  cfg.stretch_factor = 1.0;
  EXPECT_W2LP_ERROR(cfg.Validate(), ErrorKind::kInvalidArgument);
}

}  // namespace
}  // namespace w2lp::augment
