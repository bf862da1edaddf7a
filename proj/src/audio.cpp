// src/audio.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "w2lp/error.hpp"

namespace w2lp::audio {

namespace {

std::uint16_t ReadU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t ReadU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// FFTW planning is not thread-safe; execution with new-array execute is.
class RealFft {
 public:
  static const RealFft& ForSize(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<RealFft>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) slot.reset(new RealFft(n));
    return *slot;
  }

  ~RealFft() { fftw_destroy_plan(plan_); }

  // `in` and `out` must come from fftw_malloc.
  void Execute(double* in, fftw_complex* out) const {
    fftw_execute_dft_r2c(plan_, in, out);
  }

 private:
  explicit RealFft(int n) {
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }

  fftw_plan plan_;
};

}  // namespace

void FeatureConfig::Validate() const {
  auto bad = [](const std::string& msg) {
    Fail(ErrorKind::kInvalidArgument, "feature config: " + msg);
  };
  if (sample_rate_hz <= 0) bad("sample_rate_hz must be positive");
  if (hop_samples <= 0 || hop_samples > window_samples) {
    bad("need 0 < hop_samples <= window_samples");
  }
  if (window_samples > fft_size) bad("window_samples exceeds fft_size");
  if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0) {
    bad("fft_size must be a power of two");
  }
  if (mel_bins < 1) bad("mel_bins must be >= 1");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz &&
        fmax_hz <= sample_rate_hz / 2.0)) {
    bad("need 0 <= fmin_hz < fmax_hz <= sample_rate_hz / 2");
  }
  if (!(log_floor > 0.0)) bad("log_floor must be positive");
}

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open wav file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    Fail(ErrorKind::kFormat, "not a RIFF/WAVE file: " + path.string());
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, tag = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk_size = ReadU32(data + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > size) {
      Fail(ErrorKind::kFormat, "truncated chunk in " + path.string());
    }
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        Fail(ErrorKind::kFormat, "fmt chunk too short in " + path.string());
      }
      tag = ReadU16(data + body);
      channels = ReadU16(data + body + 2);
      rate = ReadU32(data + body + 4);
      bits = ReadU16(data + body + 14);
      have_fmt = true;
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      if (!have_fmt) {
        Fail(ErrorKind::kFormat, "data chunk before fmt in " + path.string());
      }
      if (tag != 1) {
        Fail(ErrorKind::kUnsupported,
             "non-PCM wav (format tag " + std::to_string(tag) + "): " +
                 path.string());
      }
      if (channels != 1) {
        Fail(ErrorKind::kUnsupported,
             std::to_string(channels) + "-channel wav, expected mono: " +
                 path.string());
      }
      if (bits != 16) {
        Fail(ErrorKind::kUnsupported,
             std::to_string(bits) + "-bit wav, expected 16-bit: " +
                 path.string());
      }
      if (rate == 0) {
        Fail(ErrorKind::kFormat, "zero sample rate in " + path.string());
      }
      Waveform wave;
      wave.sample_rate_hz = static_cast<int>(rate);
      wave.samples.resize(chunk_size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto raw =
            static_cast<std::int16_t>(ReadU16(data + body + 2 * i));
        wave.samples[i] = raw / 32768.0;
      }
      return wave;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  Fail(ErrorKind::kFormat, "no data chunk in " + path.string());
}

std::int16_t QuantizeSample(double amplitude) {
  const double clamped = std::clamp(amplitude, -1.0, 1.0);
  const double scaled = std::round(clamped * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

void WriteWav(const Waveform& wave, const std::filesystem::path& path) {
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate_hz));
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate_hz) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, data_bytes);
  for (double s : wave.samples) {
    PutU16(out, static_cast<std::uint16_t>(QuantizeSample(s)));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) Fail(ErrorKind::kIo, "cannot write wav file " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) Fail(ErrorKind::kIo, "short write to " + path.string());
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::size_t FrameCount(std::size_t num_samples, int window, int hop) {
  if (num_samples < static_cast<std::size_t>(window)) return 0;
  return 1 + (num_samples - window) / hop;
}

std::vector<double> MelFilterbank(const FeatureConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const int m = cfg.mel_bins;
  const double mel_lo = HzToMel(cfg.fmin_hz);
  const double mel_hi = HzToMel(cfg.fmax_hz);
  std::vector<double> edges(m + 2);
  for (int i = 0; i < m + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (m + 1));
  }
  std::vector<double> fb(static_cast<std::size_t>(m) * bins, 0.0);
  for (int f = 0; f < m; ++f) {
    const double left = edges[f], center = edges[f + 1], right = edges[f + 2];
    for (int k = 0; k < bins; ++k) {
      const double hz =
          static_cast<double>(k) * cfg.sample_rate_hz / cfg.fft_size;
      double w = 0.0;
      if (hz > left && hz <= center) {
        w = (hz - left) / (center - left);
      } else if (hz > center && hz < right) {
        w = (right - hz) / (right - center);
      }
      fb[static_cast<std::size_t>(f) * bins + k] = w;
    }
  }
  return fb;
}

FeatureMatrix ComputeLogMel(const Waveform& wave, const FeatureConfig& cfg) {
  cfg.Validate();
  const std::size_t frames =
      FrameCount(wave.samples.size(), cfg.window_samples, cfg.hop_samples);
  if (frames == 0) {
    Fail(ErrorKind::kInvalidArgument,
         "waveform of " + std::to_string(wave.samples.size()) +
             " samples is shorter than one window (" +
             std::to_string(cfg.window_samples) + ")");
  }

  const int n = cfg.fft_size;
  const int bins = n / 2 + 1;
  const std::vector<double> fb = MelFilterbank(cfg);

  std::vector<double> window(cfg.window_samples);
  for (int i = 0; i < cfg.window_samples; ++i) {
    // Periodic Hann.
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i /
                                     cfg.window_samples);
  }

  const RealFft& fft = RealFft::ForSize(n);
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(n),
                                                   &fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(
      fftw_alloc_complex(bins), &fftw_free);
  std::vector<double> power(bins);

  FeatureMatrix result;
  result.frames = frames;
  result.mel_bins = cfg.mel_bins;
  result.values.resize(frames * cfg.mel_bins);
  const double log_floor = std::log(cfg.log_floor);

  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = wave.samples.data() + t * cfg.hop_samples;
    double* buf = in.get();
    for (int i = 0; i < cfg.window_samples; ++i) buf[i] = src[i] * window[i];
    std::fill(buf + cfg.window_samples, buf + n, 0.0);
    fft.Execute(buf, out.get());
    for (int k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power[k] = re * re + im * im;
    }
    for (int m = 0; m < cfg.mel_bins; ++m) {
      const double* row = fb.data() + static_cast<std::size_t>(m) * bins;
      double energy = 0.0;
      for (int k = 0; k < bins; ++k) energy += row[k] * power[k];
      const double v = energy > cfg.log_floor ? std::log(energy) : log_floor;
      result.at(t, m) = static_cast<float>(v);
    }
  }
  return result;
}

FeatureMatrix NormalizeFeatures(const FeatureMatrix& features) {
  FeatureMatrix out = features;
  const std::size_t frames = features.frames;
  if (frames == 0) return out;
  for (std::size_t m = 0; m < features.mel_bins; ++m) {
    double mean = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mean += features.at(t, m);
    mean /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double d = features.at(t, m) - mean;
      var += d * d;
    }
    const double scale = 1.0 / (std::sqrt(var / frames) + 1e-5);
    for (std::size_t t = 0; t < frames; ++t) {
      out.at(t, m) = static_cast<float>((features.at(t, m) - mean) * scale);
    }
  }
  return out;
}

}  // namespace w2lp::audio
